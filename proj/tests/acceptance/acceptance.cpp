// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hdi/ann/sest.hpp"
#include "hdi/cli/commands.hpp"
#include "hdi/energy/energy.hpp"
#include "hdi/error.hpp"
#include "hdi/events/events.hpp"
#include "hdi/lif/lif.hpp"
#include "hdi/model/checkpoint.hpp"
#include "hdi/model/model.hpp"
#include "hdi/numcore/ops.hpp"
#include "hdi/numcore/tape.hpp"
#include "hdi/snn/spiking.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace hdi;
using namespace hdi::numcore;
using hdi::test::Gen;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

fs::path fresh_dir(const fs::path& p) {
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---- 1: central differences over every input and parameter entry ----------

Outcome sest_gradients() {
    PrecisionScope f64(Precision::F64);
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    ParamStore store;
    ann::SestBlockConfig c;
    c.dim = 8;
    c.heads = 2;
    c.window = 4;  // 16 tokens per window
    const ann::SestBlock first(store, "b0", c, rng);
    c.shifted = true;
    const ann::SestBlock second(store, "b1", c, rng);
    std::normal_distribution<Real> nd(0.0, 0.3);
    for (const auto& n : store.names())
        if (n.find("norm") == std::string::npos)
            for (auto& v : store.get(n).mutable_data()) v = nd(rng);

    Gen g(102);
    Tensor y = g.tensor({8, 8, 8});
    const Tensor r = g.tensor({8, 8, 8});
    ForwardContext ctx;
    const auto loss = [&] { return sum(mul(ann::sest_block_pair(y, first, second, ctx), r)); };

    y.set_requires_grad(true);
    Tape tape;
    Tensor l;
    {
        TapeScope scope(tape);
        l = loss();
    }
    backward(l, tape);

    std::vector<Tensor> leaves{y};
    for (const auto& n : store.names()) leaves.push_back(store.get(n));
    std::vector<std::vector<Real>> analytic;
    for (const auto& t : leaves) analytic.emplace_back(t.grad().begin(), t.grad().end());

    const Real h = 1e-5, kTiny = 1e-6;
    Real worst = 0, worst_tiny = 0;
    std::size_t entries = 0, tiny = 0;
    NoGradScope quiet;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        auto data = leaves[k].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i, ++entries) {
            const Real keep = data[i];
            data[i] = keep + h;
            const Real up = loss().item();
            data[i] = keep - h;
            const Real down = loss().item();
            data[i] = keep;
            const Real numeric = (up - down) / (2 * h);
            const Real diff = std::fabs(analytic[k][i] - numeric);
            // Entries whose true gradient vanishes (key biases, for one) only
            // carry rounding noise of the difference quotient.
            if (std::fabs(numeric) < kTiny) {
                worst_tiny = std::max(worst_tiny, diff);
                ++tiny;
            } else {
                worst = std::max(worst, diff / std::fabs(numeric));
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && worst_tiny <= 1e-8 && secs < 60.0,
            "max rel err " + num(worst) + " over " + std::to_string(entries - tiny) + " entries (<= 1e-4), max abs err " +
                num(worst_tiny) + " over " + std::to_string(tiny) + " vanishing entries (<= 1e-8), " + num(secs, 3) +
                " s (< 60 s)"};
}

// ---- 2: surrogate BPTT against hand recursions ----------------------------

struct NeuronTrace {
    std::vector<Real> h, s;
};

NeuronTrace run_neuron(const std::vector<Real>& x, Real tau, Real vth) {
    NeuronTrace tr;
    Real v = 0;
    for (Real xt : x) {
        const Real h = v + (xt - v) / tau;
        const Real s = h >= vth ? 1 : 0;
        tr.h.push_back(h);
        tr.s.push_back(s);
        v = s > 0 ? 0 : h;
    }
    return tr;
}

Real arctan_surrogate(Real u) { return 1.0 / (1.0 + (M_PI * u) * (M_PI * u)); }

// dL/dx for one neuron given dL/dS per step; the reset gate is treated as a
// constant.
std::vector<Real> hand_bptt(const NeuronTrace& tr, const std::vector<Real>& gs, Real tau, Real vth) {
    const std::size_t T = tr.h.size();
    std::vector<Real> gx(T);
    Real carry = 0;  // dL/dV_t
    for (std::size_t t = T; t-- > 0;) {
        const Real gh = gs[t] * arctan_surrogate(tr.h[t] - vth) + carry * (1 - tr.s[t]);
        gx[t] = gh / tau;
        carry = gh * (1 - 1 / tau);
    }
    return gx;
}

Outcome surrogate_bptt() {
    PrecisionScope f64(Precision::F64);
    const Real tau = 2.0, vth = 1.0;

    // Single neuron, T=3.
    const std::vector<Real> xs{2.4, 0.9, 1.7}, cs{0.6, -1.1, 0.8};
    Tensor x(Shape{3, 1}, xs);
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(mul(lif::lif_sequence(x, lif::LIFParams{}), Tensor(Shape{3, 1}, cs)));
    }
    backward(loss, tape);
    const auto oracle = hand_bptt(run_neuron(xs, tau, vth), cs, tau, vth);
    Real single = 0;
    for (std::size_t t = 0; t < 3; ++t) single = std::max(single, std::fabs(x.grad()[t] - oracle[t]));

    // One spiking block: s0 = SN(z); s1 = SN(s0 W); out = s1 + z; loss = sum(c * out).
    const std::size_t T = 4, n = 3, m = 3;
    Gen g(201);
    Tensor z = g.tensor({T, n}, 0.0, 3.0);
    Tensor w = g.tensor({n, m}, -0.5, 1.5);
    const Tensor coef = g.tensor({T, m});
    z.set_requires_grad(true);
    w.set_requires_grad(true);
    Tape block_tape;
    {
        TapeScope scope(block_tape);
        const Tensor s0 = lif::lif_sequence(z, lif::LIFParams{});
        const Tensor s1 = lif::lif_sequence(matmul(s0, w), lif::LIFParams{});
        loss = sum(mul(add(s1, z), coef));
    }
    backward(loss, block_tape);

    const auto Z = z.values(), W = w.values(), C = coef.values();
    std::vector<NeuronTrace> l0(n), l1(m);
    std::vector<Real> s0(T * n), drive(T * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Real> col(T);
        for (std::size_t t = 0; t < T; ++t) col[t] = Z[t * n + i];
        l0[i] = run_neuron(col, tau, vth);
        for (std::size_t t = 0; t < T; ++t) s0[t * n + i] = l0[i].s[t];
    }
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i < n; ++i) drive[t * m + j] += s0[t * n + i] * W[i * m + j];
    std::vector<Real> gdrive(T * m);
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<Real> col(T), gs(T);
        for (std::size_t t = 0; t < T; ++t) {
            col[t] = drive[t * m + j];
            gs[t] = C[t * m + j];
        }
        l1[j] = run_neuron(col, tau, vth);
        const auto gd = hand_bptt(l1[j], gs, tau, vth);
        for (std::size_t t = 0; t < T; ++t) gdrive[t * m + j] = gd[t];
    }
    std::vector<Real> gw(n * m, 0.0), gz(T * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Real> gs(T, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < m; ++j) {
                gs[t] += gdrive[t * m + j] * W[i * m + j];
                gw[i * m + j] += s0[t * n + i] * gdrive[t * m + j];
            }
        const auto gx = hand_bptt(l0[i], gs, tau, vth);
        for (std::size_t t = 0; t < T; ++t) gz[t * n + i] = gx[t] + (i < m ? C[t * m + i] : 0.0);
    }
    Real block = 0;
    for (std::size_t k = 0; k < gz.size(); ++k) block = std::max(block, std::fabs(z.grad()[k] - gz[k]));
    for (std::size_t k = 0; k < gw.size(); ++k) block = std::max(block, std::fabs(w.grad()[k] - gw[k]));
    return {single <= 1e-10 && block <= 1e-8,
            "single neuron err " + num(single) + " (<= 1e-10), block err " + num(block) + " (<= 1e-8)"};
}

// ---- 3: binary closure and no softmax on the spiking tape -----------------

Outcome spike_closure() {
    Gen g(301);
    std::size_t cases = 0, failures = 0;
    for (int c = 0; c < 1000; ++c, ++cases) {
        ParamStore store;
        std::mt19937_64 rng(static_cast<std::uint64_t>(c));
        ForwardContext ctx;
        ctx.mode = g.coin() ? Mode::Train : Mode::Eval;
        const std::size_t t = g.size(1, 3), n = g.size(2, 8), ch = 2 * g.size(1, 3);
        std::vector<Tensor> outs;
        outs.push_back(snn::spiking_neuron(g.tensor({t, n, ch}, -4, 4), t, lif::LIFParams{}, ctx, "sn"));
        snn::SpikeQkv qkv_params(store, "qkv", ch, rng);
        const auto qkv = snn::spike_qkv(g.binary({t, n, ch}, g.real(0, 1)), t, qkv_params, ctx);
        outs.insert(outs.end(), {qkv.q, qkv.k, qkv.v});
        outs.push_back(snn::qka(qkv.q, qkv.k, lif::LIFParams::attention_output(), ctx, "qka"));
        const Tensor r = snn::ssa_scores(reshape(qkv.q, {t, 1, n, ch}), reshape(qkv.k, {t, 1, n, ch}), Tensor(),
                                         g.tensor({t, n, n}), 0.125, 1, g.real(0, 2));
        outs.push_back(snn::ssa_aggregate(r, reshape(qkv.v, {t, 1, n, ch}), t, ctx, "ssa"));
        for (const auto& o : outs)
            for (Real v : o.data())
                if (v != 0.0 && v != 1.0) ++failures;
    }

    // Spiking branch on a tape: embed, one QKA block, downsample, one SSA block.
    ParamStore store;
    std::mt19937_64 rng(302);
    snn::SpikingPatchEmbed embed(store, "embed", 2, 8, 2, rng);
    snn::SpikingBlockConfig bc;
    bc.dim = 8;
    bc.heads = 2;
    bc.window = 4;
    bc.kind = snn::BlockKind::Qka;
    snn::SpikingBlock qka_block(store, "qka", bc, rng);
    snn::SpikingDownsample down(store, "down", 8, 16, 2, rng);
    bc.dim = 16;
    bc.kind = snn::BlockKind::Ssa;
    bc.shifted = true;
    snn::SpikingBlock ssa_block(store, "ssa", bc, rng);
    ForwardContext ctx;
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor v = g.tensor({2, 16, 16, 2}, 0, 2);
        v.set_requires_grad(true);
        ssa_block.forward(down(qka_block.forward(embed(v, ctx), ctx), ctx), ctx);
    }
    const std::size_t softmax = tape.count_op("softmax"), lif_nodes = tape.count_op("lif");
    return {failures == 0 && softmax == 0 && lif_nodes > 0,
            std::to_string(cases) + " fuzz cases, " + std::to_string(failures) + " non-binary values; spiking tape: " +
                std::to_string(tape.size()) + " nodes, " + std::to_string(lif_nodes) + " lif, " +
                std::to_string(softmax) + " softmax"};
}

// ---- 4: zero interaction weights vs interaction disabled ------------------

std::vector<model::Sample> toy_batch(const cli::RunConfig& cfg, const fs::path& dir) {
    cli::cmd_gen_data(cfg, dir);
    return cli::make_samples(cli::read_dataset(dir), cfg);
}

Outcome interaction_identity(const fs::path& work) {
    auto cfg = cli::RunConfig::parse("preset=toy\nseed=17\nscene_duration_s=0.5\nlambda3=0\nlambda4=0\n");
    const auto samples = toy_batch(cfg, fresh_dir(work / "c4_data"));
    auto off = cfg.model;
    off.interaction.enabled = false;
    model::Model a(cfg.model), b(off);
    model::TrainConfig tc;
    tc.optimizer.lr = 1e-3;
    std::mt19937_64 ra(5), rb(5), pick(6);
    std::size_t steps = 0, mismatches = 0;
    for (; steps < 12; ++steps) {
        std::vector<model::Sample> batch;
        for (int k = 0; k < 2; ++k) batch.push_back(samples[pick() % samples.size()]);
        const Real la = model::train_step(a, batch, tc, ra).loss;
        const Real lb = model::train_step(b, batch, tc, rb).loss;
        if (la != lb) ++mismatches;
        for (const auto& n : b.params().names())
            if (!test::bitwise_equal(a.params().get(n), b.params().get(n))) ++mismatches;
    }
    return {mismatches == 0 && steps >= 10,
            std::to_string(steps) + " training steps, " + std::to_string(mismatches) + " bitwise mismatches"};
}

// ---- 5: energy formula and ratios -----------------------------------------

Outcome energy_checks() {
    energy::OpCount c;
    energy::BlockOps b;
    b.name = "snn.case";
    b.spiking = true;
    b.op_ac = 100;
    b.op_mac = 10;
    c.blocks.push_back(b);
    const Real pj = energy::estimate(c, {{"snn.case", 0.5}}).total_pj;
    const Real ratio = energy::compare_ratio(295.4, 27.95);
    Real qka_mac = 0;
    std::size_t qka_blocks = 0;
    for (const auto& cfg : {model::ModelConfig::toy(), model::ModelConfig::paper()}) {
        const auto ops = energy::count_ops(cfg);
        for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
            if (cfg.stages[s].kind != snn::BlockKind::Qka) continue;
            for (std::size_t k = 0; k < cfg.stages[s].depth; ++k, ++qka_blocks) {
                const auto& blk = ops.find(model::Model::snn_block_name(s, k));
                qka_mac += blk.attn_mac + blk.op_mac;
            }
        }
    }
    const bool ok = pj == 91.0 && std::fabs(ratio - 10.57) <= 0.005 && qka_mac == 0.0 && qka_blocks > 0;
    return {ok, "T=1,f=0.5,OP_A=100,OP_M=10 -> " + num(pj, 17) + " pJ (exact 91); ratio " + num(ratio) +
                    " (10.57 +- 0.005); QKA MAC " + num(qka_mac) + " over " + std::to_string(qka_blocks) + " blocks"};
}

// ---- 6: asynchronous inference --------------------------------------------

Outcome async_inference(const fs::path& work) {
    const auto t0 = Clock::now();
    const auto cfg = cli::RunConfig::parse("preset=toy\nseed=23\nscene_duration_s=1.0\nscene_frame_rate=20\n");
    const auto data = fresh_dir(work / "c6_data"), out = fresh_dir(work / "c6_out");
    const auto gen = cli::cmd_gen_data(cfg, data);
    model::Model m(cfg.model);
    model::save_checkpoint(out / "model.ckpt", m);
    const auto rows = cli::cmd_async_infer(cfg, data, out / "model.ckpt", out);

    // Frames at 0, 50000, ..., 950000 us; events fill [0, 1 s]. Windows of
    // 50000 us every 12500 us end at 50000 + 12500 i <= 1000000.
    std::vector<events::Timestamp> expect;
    for (events::Timestamp end = 50000; end <= 1000000; end += 12500) expect.push_back(end);

    std::ifstream csv(out / "async.csv");
    std::string line;
    std::vector<std::string> stamps;
    bool header = false;
    while (std::getline(csv, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto a = line.find(','), b = line.find(',', a + 1);
        stamps.push_back(line.substr(a + 1, b - a - 1));
    }
    std::size_t bad = 0;
    for (std::size_t i = 0; i < std::min(rows.size(), expect.size()); ++i) {
        char want[32];
        std::snprintf(want, sizeof want, "%d.%06d", static_cast<int>(expect[i] / 1000000),
                      static_cast<int>(expect[i] % 1000000));
        if (rows[i].t != expect[i] || i >= stamps.size() || stamps[i] != want) ++bad;
        if (rows[i].frame != std::min<std::size_t>(static_cast<std::size_t>(expect[i] / 50000), gen.frames - 1)) ++bad;
    }
    const double secs = seconds_since(t0);
    const bool ok = gen.frames == 20 && rows.size() == expect.size() && stamps.size() == rows.size() && bad == 0 &&
                    secs < 120.0;
    return {ok, std::to_string(gen.frames) + " frames -> " + std::to_string(rows.size()) + " detections (expected " +
                    std::to_string(expect.size()) + "), stride 0.0125 s, " + std::to_string(bad) +
                    " timestamp mismatches, " + num(secs, 3) + " s (< 120 s)"};
}

// ---- 7: toy overfit --------------------------------------------------------

Outcome toy_overfit(const fs::path& work, const fs::path& config) {
    const auto t0 = Clock::now();
    const auto cfg = cli::RunConfig::load(config);
    const auto data = fresh_dir(work / "c7_data"), run = fresh_dir(work / "c7_run");
    cli::cmd_gen_data(cfg, data);
    const auto trained = cli::cmd_train(cfg, data, run);
    const auto eval = cli::cmd_eval(cfg, data, trained.checkpoint, run / "eval");
    const double secs = seconds_since(t0);
    const Real ratio = trained.final_loss / trained.initial_loss;
    const bool ok = trained.rows.size() == 500 && ratio < 0.25 && eval.mean_iou >= 0.8 && secs < 600.0;
    return {ok, std::to_string(trained.rows.size()) + " steps, loss " + num(trained.initial_loss) + " -> " +
                    num(trained.final_loss) + " (ratio " + num(ratio) + " < 0.25), mean IoU " + num(eval.mean_iou) +
                    " (>= 0.8), " + num(secs, 4) + " s (< 600 s)"};
}

// ---- 8: paper stage sizes --------------------------------------------------

Outcome paper_shapes() {
    const auto cfg = model::ModelConfig::paper();
    const auto sizes = model::stage_sizes(cfg);
    const std::vector<std::pair<std::size_t, std::size_t>> expect{{120, 160}, {60, 80}, {30, 40}, {15, 20}};
    // Token grids follow patch 4 then halving merges.
    bool chain = cfg.height == 480 && cfg.width == 640 && sizes.size() == 4;
    std::size_t h = cfg.height, w = cfg.width;
    for (std::size_t s = 0; chain && s < sizes.size(); ++s) {
        if (s == 0) {
            h /= cfg.patch;
            w /= cfg.patch;
        } else {
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
        chain = sizes[s] == std::make_pair(h, w);
    }
    std::string got;
    for (const auto& [a, b] : sizes) got += (got.empty() ? "" : ", ") + std::to_string(a) + "x" + std::to_string(b);
    return {sizes == expect && chain, "640x480 -> " + got};
}

// ---- 9: structural fuzz ---------------------------------------------------

Outcome structural_fuzz() {
    PrecisionScope f64(Precision::F64);
    Gen g(901);
    const int cases = 1000;
    std::map<std::string, int> failed;

    for (int c = 0; c < cases; ++c) {
        ParamStore store;
        std::mt19937_64 rng(static_cast<std::uint64_t>(c));
        const std::size_t n = g.size(1, 10), ch = g.size(1, 8);
        ann::RelativeSemanticEmbedding e(store, "rse", ch, g.size(1, 4), rng);
        const Tensor s = ann::rse(g.tensor({n, ch}, -4, 4), e);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (s.data()[i * n + j] != s.data()[j * n + i]) ++failed["rse_symmetry"];
    }

    for (int c = 0; c < cases; ++c) {
        const std::size_t rows = g.size(1, 6), cols = g.size(1, 12);
        const Real spread = std::pow(10.0, g.real(-2, 2));
        const Tensor p = softmax_rows(g.tensor({rows, cols}, -spread, spread));
        for (std::size_t r = 0; r < rows; ++r) {
            Real total = 0;
            for (std::size_t k = 0; k < cols; ++k) total += p.data()[r * cols + k];
            if (std::fabs(total - 1.0) > 1e-12) ++failed["softmax_rows"];
        }
    }

    for (int c = 0; c < cases; ++c) {
        const std::size_t m = g.size(1, 5), h = m * g.size(1, 3), w = m * g.size(1, 3), ch = g.size(1, 3);
        const auto layout = ann::WindowLayout::make(h, w, m, g.coin() ? m / 2 : 0);
        const Tensor x = g.tensor({h, w, ch});
        const Tensor parts = ann::window_partition(x, layout);
        // Every map entry appears exactly once among the windows.
        std::multiset<Real> a(x.data().begin(), x.data().end()), b(parts.data().begin(), parts.data().end());
        if (a != b || !test::bitwise_equal(ann::window_reverse(parts, layout), x)) ++failed["partition_reverse"];
    }

    for (int c = 0; c < cases; ++c) {
        events::EventStream s;
        s.sensor = {g.integer(1, 8), g.integer(1, 8)};
        const std::size_t count = g.size(0, 50);
        events::Timestamp t = 0;
        for (std::size_t k = 0; k < count; ++k) {
            t += g.integer(0, 40);
            s.events.push_back({t, g.integer(0, s.sensor.width - 1), g.integer(0, s.sensor.height - 1), g.coin() ? 1 : -1});
        }
        const events::Timestamp begin = g.integer(0, 200), end = begin + g.integer(1, 2000);
        std::size_t inside = 0;
        for (const auto& e : s.events) inside += e.t >= begin && e.t <= end;
        const auto v = events::voxelize(s, {begin, end}, g.integer(1, 8));
        Real total = 0;
        for (Real x : v.values) total += x;
        if (total != static_cast<Real>(inside) || inside + v.ignored != count) ++failed["voxel_conservation"];
    }

    for (int c = 0; c < cases; ++c) {
        events::EventStream s;
        s.sensor = {g.integer(1, 1280), g.integer(1, 720)};
        events::Timestamp t = g.integer(0, 1000);
        const std::size_t count = g.size(0, 30);
        for (std::size_t k = 0; k < count; ++k) {
            t += g.integer(0, 100000);
            s.events.push_back({t, g.integer(0, s.sensor.width - 1), g.integer(0, s.sensor.height - 1), g.coin() ? 1 : -1});
        }
        std::ostringstream os;
        events::write_events(os, s);
        std::istringstream is(os.str());
        const auto back = events::read_events(is);
        if (back.sensor != s.sensor || back.events != s.events) ++failed["event_round_trip"];
    }

    std::string detail = std::to_string(cases) + " cases each:";
    for (const char* k : {"rse_symmetry", "softmax_rows", "partition_reverse", "voxel_conservation", "event_round_trip"}) {
        const auto it = failed.find(k);
        detail += std::string(" ") + k + "=" + (it == failed.end() ? "ok" : "FAIL");
    }
    return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hdiformer acceptance run"};
    fs::path work = fs::temp_directory_path() / "hdi_acceptance";
    fs::path config = fs::path(HDI_SOURCE_DIR) / "configs" / "toy_overfit.cfg";
    std::vector<int> only;
    app.add_option("--work", work, "Scratch directory");
    app.add_option("--overfit-config", config, "Config of the overfit run")->check(CLI::ExistingFile);
    app.add_option("--only", only, "Run just these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"SEST block pair gradient check", sest_gradients},
        {"surrogate-gradient BPTT oracles", surrogate_bptt},
        {"spike binary closure, no softmax in spiking branch", spike_closure},
        {"zero interaction weights == interaction off", [&] { return interaction_identity(work); }},
        {"energy formula, ratio and QKA MAC", energy_checks},
        {"asynchronous 80 Hz inference", [&] { return async_inference(work); }},
        {"toy overfit", [&] { return toy_overfit(work, config); }},
        {"paper preset stage sizes", paper_shapes},
        {"structural invariants under fuzzing", structural_fuzz},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
