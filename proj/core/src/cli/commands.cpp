#include "hdi/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "hdi/error.hpp"
#include "hdi/model/checkpoint.hpp"

namespace hdi::cli {

using numcore::Tensor;

namespace {

std::ofstream open_out(const Path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << std::setprecision(10);
    return os;
}

void make_dir(const Path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_echo(std::ostream& os, const RunConfig& cfg) {
    for (const auto& l : cfg.echo()) os << "# " << l << '\n';
}

void write_detection(std::ostream& os, const model::Detection& d) {
    os << d.cx << ',' << d.cy << ',' << d.w << ',' << d.h << ',' << d.confidence;
}

model::Model load_model(const RunConfig& cfg, const std::optional<Path>& checkpoint) {
    model::Model m(cfg.model);
    if (checkpoint) model::load_checkpoint(*checkpoint, m);
    return m;
}

model::Detection best_of(const model::Detections& d) {
    return *std::max_element(d.cells.begin(), d.cells.end(),
                             [](const auto& a, const auto& b) { return a.confidence < b.confidence; });
}

}  // namespace

GenDataResult cmd_gen_data(const RunConfig& cfg, const Path& out) {
    cfg.validate();
    const Scene scene = render_scene(cfg.scene, cfg.model.seed);
    const auto stream = events::simulate_events(scene.frames, cfg.scene.threshold);
    write_dataset(out, scene, stream, cfg.echo());
    return {scene.frames.frames.size(), stream.events.size()};
}

TrainResult cmd_train(const RunConfig& cfg, const Path& data, const Path& out, const std::optional<Path>& resume) {
    cfg.validate();
    const auto samples = make_samples(read_dataset(data), cfg);
    model::Model m = load_model(cfg, resume);
    const auto tcfg = cfg.train_config();
    const std::uint64_t start = m.params().step();
    std::mt19937_64 rng(cfg.model.seed ^ (0x5851f42d4c957f2dULL * (start + 1)));

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    const std::size_t bs = std::min(cfg.batch, samples.size());

    make_dir(out);
    TrainResult res;
    res.loss_csv = out / "loss.csv";
    res.checkpoint = out / "model.ckpt";
    const auto write_log = [&](const std::string& trailer) {
        auto os = open_out(res.loss_csv);
        write_echo(os, cfg);
        os << "step,loss,lr,firing_rate\n";
        for (const auto& r : res.rows) os << r.step << ',' << r.loss << ',' << r.lr << ',' << r.firing_rate << '\n';
        if (!trailer.empty()) os << "# " << trailer << '\n';
    };

    lif::FiringMeter meter;
    for (std::size_t i = 0; i < cfg.train_steps; ++i) {
        std::vector<model::Sample> batch;
        while (batch.size() < bs) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(samples[order[cursor++]]);
        }
        meter.clear();
        model::StepResult st;
        try {
            st = model::train_step(m, batch, tcfg, rng, &meter);
        } catch (const TrainingError& e) {
            write_log(std::string("aborted: ") + e.what());
            throw TrainingError("step " + std::to_string(start + i + 1) + ": " + e.what());
        }
        LossRow row{st.step, st.loss, st.lr, meter.layers().empty() ? 0.0 : meter.firing_rate()};
        res.rows.push_back(row);
    }
    if (!res.rows.empty()) {
        res.initial_loss = res.rows.front().loss;
        const std::size_t k = std::min<std::size_t>(10, res.rows.size());
        Real s = 0;
        for (std::size_t i = res.rows.size() - k; i < res.rows.size(); ++i) s += res.rows[i].loss;
        res.final_loss = s / static_cast<Real>(k);
    }
    std::ostringstream trailer;
    trailer << std::setprecision(10) << "initial_loss=" << res.initial_loss << " final_loss=" << res.final_loss;
    write_log(trailer.str());
    model::save_checkpoint(res.checkpoint, m);
    return res;
}

EvalResult cmd_eval(const RunConfig& cfg, const Path& data, const Path& checkpoint, const Path& out) {
    cfg.validate();
    const Dataset ds = read_dataset(data);
    const auto samples = make_samples(ds, cfg);
    model::Model m = load_model(cfg, checkpoint);
    make_dir(out);
    auto det = open_out(out / "detections.csv");
    write_echo(det, cfg);
    det << "frame,t_us,cx,cy,w,h,confidence\n";

    EvalResult res;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto pred = model::Detections::from_tensor(model::predict(m, samples[i].frame, samples[i].voxels));
        const auto t = ds.frames.frames[i].t;
        for (const auto& d : pred.confident(cfg.conf_threshold)) {
            det << i << ',' << t << ',';
            write_detection(det, d);
            det << '\n';
        }
        for (std::size_t o = 0; o < samples[i].boxes.size(); ++o) {
            const auto& truth = samples[i].boxes[o];
            const auto gy = std::min(pred.grid_h - 1, static_cast<std::size_t>(truth.cy * pred.grid_h));
            const auto gx = std::min(pred.grid_w - 1, static_cast<std::size_t>(truth.cx * pred.grid_w));
            EvalRow row{i, t, o, truth, pred.at(gy, gx), 0};
            row.iou = model::iou(row.truth, row.predicted);
            res.rows.push_back(row);
        }
    }
    Real sum = 0;
    for (const auto& r : res.rows) sum += r.iou;
    res.mean_iou = res.rows.empty() ? 0.0 : sum / static_cast<Real>(res.rows.size());

    auto ev = open_out(out / "eval.csv");
    write_echo(ev, cfg);
    ev << "frame,t_us,obj,true_cx,true_cy,true_w,true_h,cx,cy,w,h,confidence,iou\n";
    for (const auto& r : res.rows) {
        ev << r.frame << ',' << r.t << ',' << r.object << ',' << r.truth.cx << ',' << r.truth.cy << ',' << r.truth.w
           << ',' << r.truth.h << ',';
        write_detection(ev, r.predicted);
        ev << ',' << r.iou << '\n';
    }
    auto sm = open_out(out / "eval_summary.txt");
    write_echo(sm, cfg);
    sm << "labels=" << res.rows.size() << "\nmean_iou=" << res.mean_iou << '\n';
    return res;
}

std::vector<AsyncRow> cmd_async_infer(const RunConfig& cfg, const Path& data, const Path& checkpoint,
                                      const Path& out) {
    cfg.validate();
    const Dataset ds = read_dataset(data);
    const auto& frames = ds.frames.frames;
    if (frames.empty()) throw ConfigError("dataset has no frames");
    const events::Timestamp period = frames.size() > 1 ? ds.frames.period() : cfg.scene.period_us();
    const events::Interval span{frames.front().t, frames.back().t + period};
    const auto windows = events::sliding_windows(span, cfg.window_us, cfg.stride_us);
    model::Model m = load_model(cfg, checkpoint);

    std::vector<AsyncRow> rows;
    std::vector<Tensor> frame_cache(frames.size());
    std::size_t fi = 0;
    for (const auto& w : windows) {
        const auto end = w.interval.end;
        while (fi + 1 < frames.size() && frames[fi + 1].t <= end) ++fi;
        if (frames[fi].t > end) continue;  // no frame yet
        if (!frame_cache[fi].defined()) frame_cache[fi] = model::frame_tensor(frames[fi]);
        const auto grid = events::voxelize(ds.events, w.interval, static_cast<int>(cfg.model.steps), cfg.normalize_voxels);
        const auto pred = model::Detections::from_tensor(model::predict(m, frame_cache[fi], model::voxel_tensor(grid)));
        rows.push_back({end, fi, best_of(pred)});
    }

    make_dir(out);
    auto os = open_out(out / "async.csv");
    write_echo(os, cfg);
    os << "t_us,t_s,frame,cx,cy,w,h,confidence\n";
    for (const auto& r : rows) {
        char ts[32];
        std::snprintf(ts, sizeof ts, "%lld.%06lld", static_cast<long long>(r.t / events::kMicrosPerSecond),
                      static_cast<long long>(r.t % events::kMicrosPerSecond));
        os << r.t << ',' << ts << ',' << r.frame << ',';
        write_detection(os, r.best);
        os << '\n';
    }
    return rows;
}

energy::EnergyReport cmd_energy(const RunConfig& cfg, const Path& data, const std::optional<Path>& checkpoint,
                                const Path& out) {
    cfg.validate();
    const auto samples = make_samples(read_dataset(data), cfg);
    model::Model m = load_model(cfg, checkpoint);
    lif::FiringMeter meter;
    const std::size_t n = std::min(cfg.energy_samples, samples.size());
    for (std::size_t i = 0; i < n; ++i) model::predict(m, samples[i].frame, samples[i].voxels, &meter);
    const auto report = energy::estimate(energy::count_ops(m), meter, cfg.energy);

    make_dir(out);
    auto csv = open_out(out / "energy.csv");
    csv << report.to_csv(cfg.echo());
    auto sm = open_out(out / "energy_summary.txt");
    write_echo(sm, cfg);
    sm << "samples=" << n << '\n' << report.summary();
    return report;
}

}  // namespace hdi::cli
