#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "hdi/ann/sest.hpp"
#include "hdi/cli/commands.hpp"
#include "hdi/error.hpp"
#include "hdi/lif/lif.hpp"
#include "hdi/numcore/gradcheck.hpp"
#include "hdi/numcore/layers.hpp"
#include "hdi/numcore/ops.hpp"
#include "hdi/numcore/tape.hpp"

namespace hdi::cli {

using namespace numcore;

namespace {

constexpr Real kFdTolerance = 1e-4;
constexpr Real kNeuronTolerance = 1e-10;
constexpr Real kToyTolerance = 1e-8;

Tensor uniform(const Shape& s, Real lo, Real hi, std::mt19937_64& rng) {
    Tensor t(s);
    std::uniform_real_distribution<Real> d(lo, hi);
    for (auto& v : t.mutable_data()) v = d(rng);
    return t;
}

Tensor weighted_sum(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

GradcheckReport numcore_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GradcheckReport rep;
    const Tensor x = uniform({4, 6}, -1, 1, rng);
    Tensor w1 = uniform({6, 5}, -0.5, 0.5, rng).set_requires_grad();
    const Tensor b1 = uniform({5}, -0.1, 0.1, rng);
    const Tensor g = uniform({5}, 0.5, 1.5, rng), beta = uniform({5}, -0.2, 0.2, rng);
    const Tensor w2 = uniform({5, 3}, -0.5, 0.5, rng);
    const Tensor r = uniform({4, 3}, -1, 1, rng);
    const auto mlp = [&](const Tensor& in) {
        return weighted_sum(softmax_rows(matmul(layer_norm(gelu(linear(in, w1, b1)), g, beta), w2)), r);
    };
    rep.rows.push_back({"numcore", "mlp_input", finite_diff_check(mlp, x), kFdTolerance});
    rep.rows.push_back({"numcore", "mlp_weight", finite_diff_check_param([&] { return mlp(x); }, w1), kFdTolerance});

    const Tensor a = uniform({2, 5, 4}, -1, 1, rng);
    const Tensor wq = uniform({4, 4}, -0.7, 0.7, rng), wk = uniform({4, 4}, -0.7, 0.7, rng);
    const Tensor r2 = uniform({2, 5, 4}, -1, 1, rng);
    const auto attn = [&](const Tensor& in) {
        const Tensor q = matmul(reshape(in, {10, 4}), wq), k = matmul(reshape(in, {10, 4}), wk);
        const Tensor s = softmax_rows(bmm(reshape(q, {2, 5, 4}), reshape(k, {2, 5, 4}), true));
        return weighted_sum(add(bmm(s, in), mul(in, in)), r2);
    };
    rep.rows.push_back({"numcore", "attention", finite_diff_check(attn, a), kFdTolerance});
    return rep;
}

GradcheckReport sest_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamStore store;
    ann::SestBlockConfig c;
    c.dim = 8;
    c.heads = 2;
    c.window = 4;
    const ann::SestBlock regular(store, "pair.block0", c, rng);
    c.shifted = true;
    const ann::SestBlock shifted(store, "pair.block1", c, rng);
    // Larger than the default init so the attention is far from uniform.
    std::normal_distribution<Real> nd(0.0, 0.3);
    for (const auto& n : store.names()) {
        if (n.find("norm") != std::string::npos) continue;
        for (auto& v : store.get(n).mutable_data()) v = nd(rng);
    }
    const Tensor y = uniform({8, 8, 8}, -1, 1, rng);
    const Tensor r = uniform({8, 8, 8}, -1, 1, rng);
    ForwardContext ctx;
    const auto f = [&](const Tensor& in) { return weighted_sum(ann::sest_block_pair(in, regular, shifted, ctx), r); };

    GradcheckReport rep;
    rep.rows.push_back({"sest_block_pair", "input", finite_diff_check(f, y), kFdTolerance});
    const std::vector<std::string> checked = {"pair.block0.attn.qkv.weight", "pair.block1.attn.rpe.table",
                                              "pair.block1.attn.rse.hidden.weight", "pair.block0.fc1.weight",
                                              "pair.block1.norm1.gamma"};
    for (const auto& n : checked) {
        if (!store.contains(n)) throw StateError("gradcheck: parameter " + n + " not found");
        rep.rows.push_back(
            {"sest_block_pair", n.substr(5), finite_diff_check_param([&] { return f(y); }, store.get(n)), kFdTolerance});
    }
    return rep;
}

// Reverse sweep of one LIF neuron over time with the reset gate held
// constant: gH_t = dL/dS_t * sg(H_t - v_th) + gV_t * (1 - S_t),
// gV_{t-1} = gH_t * (1 - 1/tau), gx_t = gH_t / tau.
std::vector<Real> neuron_bptt(const std::vector<Real>& x, const std::vector<Real>& g_spike, const lif::LIFParams& p,
                              std::vector<Real>* spikes_out = nullptr) {
    const std::size_t T = x.size();
    std::vector<Real> h(T), s(T);
    Real v = p.v_reset;
    for (std::size_t t = 0; t < T; ++t) {
        h[t] = v + (x[t] - (v - p.v_reset)) / p.tau;
        s[t] = h[t] - p.v_th >= 0 ? 1.0 : 0.0;
        v = h[t] * (1 - s[t]) + p.v_reset * s[t];
    }
    std::vector<Real> gx(T);
    Real gv = 0;
    for (std::size_t t = T; t-- > 0;) {
        const Real gh = g_spike[t] * lif::surrogate_grad(h[t] - p.v_th, p.surrogate_width) + gv * (1 - s[t]);
        gx[t] = gh / p.tau;
        gv = gh * (1 - 1 / p.tau);
    }
    if (spikes_out) *spikes_out = s;
    return gx;
}

Real max_abs_diff(std::span<const Real> a, const std::vector<Real>& b) {
    Real m = 0;
    for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Column j of a [T, n] row-major array.
std::vector<Real> column(std::span<const Real> a, std::size_t T, std::size_t n, std::size_t j) {
    std::vector<Real> out(T);
    for (std::size_t t = 0; t < T; ++t) out[t] = a[t * n + j];
    return out;
}

GradcheckReport lif_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GradcheckReport rep;
    const lif::LIFParams p;

    {
        const std::size_t T = 3;
        Tensor x = uniform({T, 1}, 0.5, 3.0, rng).set_requires_grad();
        const Tensor c = uniform({T, 1}, -1, 1, rng);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = weighted_sum(lif::lif_sequence(x, p), c);
        }
        backward(loss, tape);
        const auto oracle = neuron_bptt(x.values(), c.values(), p);
        rep.rows.push_back({"lif_bptt", "single_neuron_T3", max_abs_diff(x.grad(), oracle), kNeuronTolerance});
    }

    {
        const std::size_t T = 4, nin = 4, nh = 5, nout = 3;
        Tensor x = uniform({T, nin}, 0.0, 2.0, rng).set_requires_grad();
        Tensor w1 = uniform({nin, nh}, -0.4, 1.2, rng).set_requires_grad();
        Tensor w2 = uniform({nh, nout}, -0.4, 1.2, rng).set_requires_grad();
        const Tensor c1 = uniform({T, nh}, -1, 1, rng), c2 = uniform({T, nout}, -1, 1, rng);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            const Tensor s1 = lif::lif_sequence(matmul(x, w1), p);
            const Tensor s2 = lif::lif_sequence(matmul(s1, w2), p);
            loss = add(weighted_sum(s1, c1), weighted_sum(s2, c2));
        }
        backward(loss, tape);

        // Scalar forward of both layers.
        const auto X = x.values(), W1 = w1.values(), W2 = w2.values();
        std::vector<Real> i1(T * nh, 0.0), s1(T * nh), i2(T * nout, 0.0), s2(T * nout);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < nh; ++j)
                for (std::size_t i = 0; i < nin; ++i) i1[t * nh + j] += X[t * nin + i] * W1[i * nh + j];
        std::vector<std::vector<Real>> s1_cols(nh);
        for (std::size_t j = 0; j < nh; ++j) {
            neuron_bptt(column(i1, T, nh, j), std::vector<Real>(T, 0.0), p, &s1_cols[j]);
            for (std::size_t t = 0; t < T; ++t) s1[t * nh + j] = s1_cols[j][t];
        }
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t k = 0; k < nout; ++k)
                for (std::size_t j = 0; j < nh; ++j) i2[t * nout + k] += s1[t * nh + j] * W2[j * nout + k];
        // Backward: layer 2, then the spikes of layer 1, then layer 1.
        std::vector<Real> gi2(T * nout);
        for (std::size_t k = 0; k < nout; ++k) {
            const auto g = neuron_bptt(column(i2, T, nout, k), column(c2.values(), T, nout, k), p);
            for (std::size_t t = 0; t < T; ++t) gi2[t * nout + k] = g[t];
        }
        std::vector<Real> gw2(nh * nout, 0.0), gs1(c1.values());
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < nh; ++j)
                for (std::size_t k = 0; k < nout; ++k) {
                    gw2[j * nout + k] += s1[t * nh + j] * gi2[t * nout + k];
                    gs1[t * nh + j] += gi2[t * nout + k] * W2[j * nout + k];
                }
        std::vector<Real> gi1(T * nh);
        for (std::size_t j = 0; j < nh; ++j) {
            const auto g = neuron_bptt(column(i1, T, nh, j), column(gs1, T, nh, j), p);
            for (std::size_t t = 0; t < T; ++t) gi1[t * nh + j] = g[t];
        }
        std::vector<Real> gw1(nin * nh, 0.0), gx(T * nin, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < nin; ++i)
                for (std::size_t j = 0; j < nh; ++j) {
                    gw1[i * nh + j] += X[t * nin + i] * gi1[t * nh + j];
                    gx[t * nin + i] += gi1[t * nh + j] * W1[i * nh + j];
                }
        const Real err = std::max({max_abs_diff(x.grad(), gx), max_abs_diff(w1.grad(), gw1), max_abs_diff(w2.grad(), gw2)});
        rep.rows.push_back({"lif_bptt", "spiking_toy", err, kToyTolerance});
    }
    return rep;
}

std::string sci(Real v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
}

}  // namespace

bool GradcheckReport::passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.passed(); });
}

std::string GradcheckReport::table() const {
    std::ostringstream os;
    os << std::left << std::setw(18) << "suite" << std::setw(38) << "check" << std::setw(12) << "max_error"
       << std::setw(12) << "tolerance" << "status\n";
    for (const auto& r : rows) {
        os << std::setw(18) << r.suite << std::setw(38) << r.check << std::setw(12) << sci(r.error) << std::setw(12)
           << sci(r.tolerance) << (r.passed() ? "PASS" : "FAIL") << '\n';
    }
    os << '\n' << std::setw(18) << "suite" << "status\n";
    std::vector<std::string> seen;
    for (const auto& r : rows) {
        if (std::find(seen.begin(), seen.end(), r.suite) != seen.end()) continue;
        seen.push_back(r.suite);
        const bool ok = std::all_of(rows.begin(), rows.end(),
                                    [&](const GradcheckRow& x) { return x.suite != r.suite || x.passed(); });
        os << std::setw(18) << r.suite << (ok ? "PASS" : "FAIL") << '\n';
    }
    return os.str();
}

GradcheckReport run_suite(const std::string& suite, std::uint64_t seed) {
    PrecisionScope f64(Precision::F64);
    if (suite == "numcore") return numcore_suite(seed);
    if (suite == "sest_block_pair") return sest_suite(seed);
    if (suite == "lif_bptt") return lif_suite(seed);
    throw ConfigError("unknown gradcheck suite '" + suite + "'");
}

GradcheckReport cmd_gradcheck(const RunConfig& cfg, const std::optional<std::string>& corrupt_op) {
    struct Restore {
        ~Restore() { testing::clear_corruption(); }
    } restore;
    if (corrupt_op) testing::corrupt_backward(*corrupt_op, 1.5);
    GradcheckReport all;
    for (const auto& s : gradcheck_suites()) {
        auto r = run_suite(s, cfg.model.seed);
        all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
    }
    return all;
}

}  // namespace hdi::cli
