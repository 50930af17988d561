#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hdi/ann/sest.hpp"
#include "hdi/events/events.hpp"
#include "hdi/interaction/interaction.hpp"
#include "hdi/model/config.hpp"
#include "hdi/snn/spiking.hpp"

namespace hdi::model {

using numcore::ForwardContext;
using numcore::ParamStore;
using numcore::Tensor;

inline constexpr std::size_t kHeadChannels = 5;  // cx, cy, w, h, confidence

/// One box per grid cell in normalized image coordinates.
struct Detection {
    Real cx = 0, cy = 0, w = 0, h = 0;
    Real confidence = 0;
};

struct Detections {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<Detection> cells;  // row-major

    static Detections from_tensor(const Tensor& pred);
    const Detection& at(std::size_t y, std::size_t x) const { return cells[y * grid_w + x]; }
    /// Cells with confidence >= threshold.
    std::vector<Detection> confident(Real threshold = 0.5) const;
};

Real iou(const Detection& a, const Detection& b);

/// Per-forward extras: attention maps of interacting blocks (pre-injection)
/// and their labels.
struct Diagnostics {
    std::vector<std::string> paired_blocks;
    std::vector<Tensor> ann_maps;  // [nW, H, N, N]
    std::vector<Tensor> snn_maps;  // [T * nW, H, N, N], raw scores
    std::vector<std::pair<std::size_t, std::size_t>> stage_sizes;
};

class Model {
public:
    explicit Model(const ModelConfig& cfg);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    /// frame [H, W, 3], voxels [T, H, W, 2] -> predictions [gh, gw, 5]
    /// (box centres in image units, sizes and confidence in [0, 1]).
    Tensor forward(const Tensor& frame, const Tensor& voxels, ForwardContext& ctx, Diagnostics* diag = nullptr);

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }
    const std::vector<interaction::BlockRef>& schedule() const { return schedule_; }
    std::pair<std::size_t, std::size_t> grid() const;

    static std::string ann_block_name(std::size_t stage, std::size_t block);
    static std::string snn_block_name(std::size_t stage, std::size_t block);

private:
    bool paired(std::size_t stage, std::size_t block) const;

    ModelConfig cfg_;
    ParamStore store_;
    std::vector<interaction::BlockRef> schedule_;

    ann::PatchEmbed ann_embed_;
    std::vector<ann::PatchMerging> ann_merge_;  // one per stage after the first
    std::vector<std::vector<ann::SestBlock>> ann_blocks_;
    numcore::LayerNorm ann_norm_;

    snn::SpikingPatchEmbed snn_embed_;
    std::vector<snn::SpikingDownsample> snn_down_;
    std::vector<std::vector<snn::SpikingBlock>> snn_blocks_;

    std::map<std::pair<std::size_t, std::size_t>, interaction::AttentionKernel> to_snn_;
    std::map<std::pair<std::size_t, std::size_t>, interaction::AttentionKernel> to_ann_;

    numcore::Linear fusion_;
    numcore::Linear head1_;
    numcore::Linear head2_;
};

/// [H, W, 3] tensor from a frame (RGB in [0, 1]).
Tensor frame_tensor(const events::Frame& frame);
/// [T, H, W, 2] tensor from a voxel grid.
Tensor voxel_tensor(const events::VoxelGrid& grid);

/// Target grid [gh, gw, 5]: the cell holding a box centre gets the box and
/// confidence 1 (first box wins on collisions); all other cells are zero.
Tensor encode_targets(const std::vector<Detection>& boxes, std::size_t grid_h, std::size_t grid_w);

inline constexpr Real kProbClamp = 1e-7;

/// Mean L1 over box coordinates of positive cells plus mean BCE of the
/// confidence over all cells.
Tensor detection_loss(const Tensor& pred, const Tensor& target);

struct Sample {
    Tensor frame;
    Tensor voxels;
    Tensor target;
    std::vector<Detection> boxes;
};

struct TrainConfig {
    numcore::AdamWConfig optimizer;
    std::vector<std::uint64_t> milestones;  // in optimizer steps
    Real gamma = 0.1;
    // From this optimizer step on, batch norms stop updating and normalize
    // with their running statistics, as they do at inference.
    std::optional<std::uint64_t> freeze_norms_at;

    Real lr_at(std::uint64_t step) const;
};

struct StepResult {
    Real loss = 0;
    Real lr = 0;
    std::uint64_t step = 0;
};

/// Forward on every sample (one tape), mean loss, backward, AdamW update.
/// Throws TrainingError when the loss is not finite.
StepResult train_step(Model& model, const std::vector<Sample>& batch, const TrainConfig& cfg, std::mt19937_64& rng,
                      lif::FiringMeter* meter = nullptr);

/// Eval-mode forward without recording.
Tensor predict(Model& model, const Tensor& frame, const Tensor& voxels, lif::FiringMeter* meter = nullptr,
               Diagnostics* diag = nullptr);

}  // namespace hdi::model
