#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hdi/cli/dataset.hpp"
#include "hdi/cli/run_config.hpp"
#include "hdi/energy/energy.hpp"

namespace hdi::cli {

using Path = std::filesystem::path;

struct GenDataResult {
    std::size_t frames = 0;
    std::size_t events = 0;
};

/// Renders the scene, simulates events and writes the dataset to `out`.
GenDataResult cmd_gen_data(const RunConfig& cfg, const Path& out);

struct LossRow {
    std::uint64_t step = 0;
    Real loss = 0;
    Real lr = 0;
    Real firing_rate = 0;
};

struct TrainResult {
    std::vector<LossRow> rows;
    Real initial_loss = 0;
    Real final_loss = 0;  // mean of the last (up to) ten steps
    Path checkpoint;
    Path loss_csv;
};

/// Trains for cfg.train_steps steps, continuing from `resume` when given.
/// Writes loss.csv and model.ckpt to `out`. On a non-finite loss the rows
/// so far are written and the TrainingError is rethrown.
TrainResult cmd_train(const RunConfig& cfg, const Path& data, const Path& out, const std::optional<Path>& resume = {});

struct EvalRow {
    std::size_t frame = 0;
    events::Timestamp t = 0;
    std::size_t object = 0;
    model::Detection truth;
    model::Detection predicted;  // cell holding the true centre
    Real iou = 0;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    Real mean_iou = 0;
};

/// Per-label IoU of the detection in the cell that holds the label centre.
/// Writes eval.csv, detections.csv (confident cells) and eval_summary.txt.
EvalResult cmd_eval(const RunConfig& cfg, const Path& data, const Path& checkpoint, const Path& out);

struct AsyncRow {
    events::Timestamp t = 0;  // window end
    std::size_t frame = 0;    // most recent frame at or before t
    model::Detection best;
};

/// Detections for every sliding event window over
/// [first frame, last frame + frame period]; writes async.csv.
std::vector<AsyncRow> cmd_async_infer(const RunConfig& cfg, const Path& data, const Path& checkpoint, const Path& out);

/// Firing rates from cfg.energy_samples predictions, analytic counts and
/// the energy estimate; writes energy.csv and energy_summary.txt. Without a
/// checkpoint the freshly initialized model is measured.
energy::EnergyReport cmd_energy(const RunConfig& cfg, const Path& data, const std::optional<Path>& checkpoint,
                                const Path& out);

struct GradcheckRow {
    std::string suite;
    std::string check;
    Real error = 0;
    Real tolerance = 0;
    bool passed() const { return error <= tolerance; }
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    bool passed() const;
    std::string table() const;
};

inline const std::vector<std::string>& gradcheck_suites() {
    static const std::vector<std::string> s = {"numcore", "sest_block_pair", "lif_bptt"};
    return s;
}

/// Runs every suite in 64-bit precision. `corrupt_op` scales the backward
/// rule of that op (verification of the checker itself).
GradcheckReport cmd_gradcheck(const RunConfig& cfg, const std::optional<std::string>& corrupt_op = {});

GradcheckReport run_suite(const std::string& suite, std::uint64_t seed);

}  // namespace hdi::cli
