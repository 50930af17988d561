// hdiformer: data generation, training, evaluation, asynchronous inference,
// energy reporting and gradient checks for the hybrid detector.

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "hdi/cli/commands.hpp"
#include "hdi/error.hpp"
#include "hdi/numcore/tensor.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kNumeric = 2 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string data;
    std::optional<int> precision;
    std::string corrupt_op;
};

hdi::cli::RunConfig load_config(const Options& o) {
    auto cfg = o.config.empty() ? hdi::cli::RunConfig{} : hdi::cli::RunConfig::load(o.config);
    if (o.seed) cfg.model.seed = *o.seed;
    cfg.validate();
    return cfg;
}

std::string data_dir(const Options& o, const hdi::cli::RunConfig& cfg) { return o.data.empty() ? cfg.data_dir : o.data; }

std::string out_dir(const Options& o, const char* fallback) { return o.out.empty() ? fallback : o.out; }

void require_checkpoint(const Options& o) {
    if (o.checkpoint.empty()) throw hdi::ConfigError("--checkpoint is required");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid frame/event transformer detector at desk scale"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "Run configuration (key=value lines)")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Overrides the configured seed");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--checkpoint", o.checkpoint, "Checkpoint to load (train: resume)");
    app.add_option("--data", o.data, "Dataset directory (default: data_dir from the config)");
    app.add_option("--precision", o.precision, "Storage precision in bits")->check(CLI::IsMember({32, 64}));

    auto* gen = app.add_subcommand("gen-data", "Render a synthetic scene and simulate its events");
    auto* train = app.add_subcommand("train", "Train on a generated dataset");
    auto* eval = app.add_subcommand("eval", "Per-frame detections and mean IoU");
    auto* async = app.add_subcommand("async-infer", "Detections for every sliding event window");
    auto* energy = app.add_subcommand("energy", "Operation counts, firing rates and energy");
    auto* grad = app.add_subcommand("gradcheck", "Gradient verification suites");
    grad->add_option("--corrupt-op", o.corrupt_op)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    using namespace hdi;
    try {
        if (grad->parsed() && o.precision && *o.precision != 64) {
            throw ConfigError("gradcheck runs in 64-bit precision only");
        }
        numcore::set_precision(o.precision.value_or(32) == 64 ? numcore::Precision::F64 : numcore::Precision::F32);
        const auto cfg = load_config(o);

        if (gen->parsed()) {
            const auto dir = out_dir(o, cfg.data_dir.c_str());
            const auto r = cli::cmd_gen_data(cfg, dir);
            std::cout << "wrote " << r.frames << " frames and " << r.events << " events to " << dir << "\n";
        } else if (train->parsed()) {
            std::optional<cli::Path> resume;
            if (!o.checkpoint.empty()) resume = o.checkpoint;
            const auto r = cli::cmd_train(cfg, data_dir(o, cfg), out_dir(o, "run"), resume);
            std::cout << std::setprecision(6) << "steps " << (r.rows.empty() ? 0 : r.rows.back().step)
                      << "  initial loss " << r.initial_loss << "  final loss " << r.final_loss << "\n"
                      << "checkpoint " << r.checkpoint.string() << "\n";
        } else if (eval->parsed()) {
            require_checkpoint(o);
            const auto r = cli::cmd_eval(cfg, data_dir(o, cfg), o.checkpoint, out_dir(o, "eval"));
            std::cout << std::setprecision(6) << "labels " << r.rows.size() << "  mean IoU " << r.mean_iou << "\n";
        } else if (async->parsed()) {
            require_checkpoint(o);
            const auto rows = cli::cmd_async_infer(cfg, data_dir(o, cfg), o.checkpoint, out_dir(o, "async"));
            std::cout << rows.size() << " detections";
            if (rows.size() > 1) std::cout << ", stride " << (rows[1].t - rows[0].t) << " us";
            std::cout << "\n";
        } else if (energy->parsed()) {
            std::optional<cli::Path> ck;
            if (!o.checkpoint.empty()) ck = o.checkpoint;
            const auto r = cli::cmd_energy(cfg, data_dir(o, cfg), ck, out_dir(o, "energy"));
            std::cout << r.summary();
        } else if (grad->parsed()) {
            std::optional<std::string> corrupt;
            if (!o.corrupt_op.empty()) corrupt = o.corrupt_op;
            const auto r = cli::cmd_gradcheck(cfg, corrupt);
            std::cout << r.table();
            if (!r.passed()) return kNumeric;
        }
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kOk;
}
