#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hdi/error.hpp"
#include "hdi/lif/lif.hpp"
#include "hdi/numcore/ops.hpp"
#include "hdi/numcore/tape.hpp"
#include "support.hpp"

using namespace hdi;
using namespace hdi::lif;
using namespace hdi::numcore;
using hdi::test::Gen;

namespace {

// Scalar reference of the membrane recursion for one neuron.
struct ScalarTrace {
    std::vector<Real> h, s;
};

ScalarTrace scalar_lif(const std::vector<Real>& x, const LIFParams& p) {
    ScalarTrace tr;
    Real v = p.v_reset;
    for (Real xt : x) {
        const Real h = v + (xt - (v - p.v_reset)) / p.tau;
        const Real s = h >= p.v_th ? 1.0 : 0.0;
        tr.h.push_back(h);
        tr.s.push_back(s);
        v = s > 0 ? p.v_reset : h;
    }
    return tr;
}

}  // namespace

TEST(LifStep, Examples) {
    LIFParams p;
    LIFState st = LIFState::resting(1, p);
    const std::vector<Real> big{2.0};
    auto out = lif_step(st, big, p);
    EXPECT_EQ(out.h[0], 1.0);
    EXPECT_EQ(out.spikes[0], 1.0);
    EXPECT_EQ(st.v[0], 0.0);

    LIFState sub = LIFState::resting(1, p);
    const std::vector<Real> half{1.0};
    lif_step(sub, half, p);
    EXPECT_EQ(sub.v[0], 0.5);
    auto second = lif_step(sub, half, p);
    EXPECT_EQ(second.h[0], 0.75);
    EXPECT_EQ(second.spikes[0], 0.0);
    EXPECT_EQ(sub.step, 2u);
}

TEST(LifStep, ThresholdIsInclusive) {
    LIFParams p;
    LIFState st = LIFState::resting(1, p);
    const std::vector<Real> x{2.0 * p.v_th};
    EXPECT_EQ(lif_step(st, x, p).spikes[0], 1.0);
}

TEST(LifStep, RejectsBadParamsAndSizes) {
    LIFParams p;
    p.tau = 0;
    EXPECT_THROW(p.validate(), ParameterError);
    LIFParams q;
    q.v_th = q.v_reset;
    EXPECT_THROW(q.validate(), ParameterError);
    LIFState st = LIFState::resting(2, LIFParams{});
    const std::vector<Real> x{1.0};
    EXPECT_THROW(lif_step(st, x, LIFParams{}), DimensionError);
}

TEST(LifStep, SubthresholdIsLinear) {
    Gen g(21);
    LIFParams p;
    p.v_th = 1e9;
    for (int c = 0; c < 200; ++c) {
        const std::size_t T = g.size(1, 6);
        std::vector<Real> a(T), b(T);
        for (std::size_t t = 0; t < T; ++t) {
            a[t] = g.real(-3, 3);
            b[t] = g.real(-3, 3);
        }
        const Real alpha = g.real(-2, 2);
        LIFState sa = LIFState::resting(1, p), sb = LIFState::resting(1, p), sc = LIFState::resting(1, p);
        for (std::size_t t = 0; t < T; ++t) {
            const std::vector<Real> xa{a[t]}, xb{b[t]}, xc{a[t] + alpha * b[t]};
            const Real ha = lif_step(sa, xa, p).h[0];
            const Real hb = lif_step(sb, xb, p).h[0];
            const Real hc = lif_step(sc, xc, p).h[0];
            ASSERT_NEAR(hc, ha + alpha * hb, 1e-9);
        }
    }
}

TEST(LifSequence, MatchesScalarRecursionAndIsBinary) {
    Gen g(22);
    for (int c = 0; c < 300; ++c) {
        LIFParams p;
        p.tau = g.real(1.1, 4.0);
        p.v_reset = g.real(-0.5, 0.2);
        p.v_th = p.v_reset + g.real(0.2, 1.5);
        const std::size_t T = g.size(1, 5), n = g.size(1, 6);
        const Tensor x = g.tensor({T, n}, -2, 3);
        const Tensor s = lif_sequence(x, p);
        ASSERT_EQ(s.shape(), x.shape());
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<Real> col;
            for (std::size_t t = 0; t < T; ++t) col.push_back(x.data()[t * n + i]);
            const auto tr = scalar_lif(col, p);
            for (std::size_t t = 0; t < T; ++t) {
                const Real v = s.data()[t * n + i];
                ASSERT_TRUE(v == 0.0 || v == 1.0);
                ASSERT_EQ(v, tr.s[t]);
            }
        }
    }
}

TEST(LifSequence, AfterSpikeMembraneRestartsFromReset) {
    LIFParams p;
    // 2.0 spikes at t0; the reset then makes 1.0 at t1 give H = 0.5.
    const Tensor s = lif_sequence(Tensor::vector({2.0, 1.0, 1.0}), p);
    EXPECT_EQ(s.data()[0], 1.0);
    EXPECT_EQ(s.data()[1], 0.0);
    EXPECT_EQ(s.data()[2], 0.0);
    const Tensor never_reset = lif_sequence(Tensor::vector({1.0, 1.0, 1.0}), p);
    EXPECT_EQ(never_reset.data()[2], 0.0);
    const Tensor hot = lif_sequence(Tensor::vector({1.0, 2.0}), p);
    EXPECT_EQ(hot.data()[1], 1.0);  // H = 0.5 + (2 - 0.5) / 2 = 1.25
}

TEST(Surrogate, Values) {
    EXPECT_EQ(surrogate_grad(0.0), 1.0);
    EXPECT_NEAR(surrogate_grad(1.0), 1.0 / (1.0 + std::numbers::pi * std::numbers::pi), 1e-15);
    EXPECT_EQ(surrogate_grad(0.3), surrogate_grad(-0.3));
    EXPECT_GT(surrogate_grad(0.1), surrogate_grad(0.2));
}

TEST(LifSequence, BackwardMatchesHandBptt) {
    Gen g(23);
    for (int c = 0; c < 200; ++c) {
        LIFParams p;
        p.tau = g.real(1.2, 3.0);
        const std::size_t T = g.size(1, 5);
        std::vector<Real> xs(T), cs(T);
        for (std::size_t t = 0; t < T; ++t) {
            xs[t] = g.real(-1, 3);
            cs[t] = g.real(-1, 1);
        }
        Tensor x(Shape{T, 1}, xs);
        x.set_requires_grad(true);
        const Tensor coef(Shape{T, 1}, cs);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = sum(mul(lif_sequence(x, p), coef));
        }
        backward(loss, tape);

        const auto tr = scalar_lif(xs, p);
        std::vector<Real> gx(T);
        Real gv = 0;
        for (std::size_t t = T; t-- > 0;) {
            const Real gh = cs[t] * surrogate_grad(tr.h[t] - p.v_th) + gv * (1 - tr.s[t]);
            gx[t] = gh / p.tau;
            gv = gh * (1 - 1 / p.tau);
        }
        for (std::size_t t = 0; t < T; ++t) ASSERT_NEAR(x.grad()[t], gx[t], 1e-12);
    }
}

TEST(FiringMeter, RatesPerLayerAndPrefix) {
    FiringMeter m;
    const std::vector<Real> a{1, 0, 0, 0}, b{1, 1, 0, 0, 1, 1};
    m.record("snn.a", a);
    m.record("snn.b", b);
    EXPECT_DOUBLE_EQ(m.firing_rate("snn.a"), 0.25);
    EXPECT_DOUBLE_EQ(m.firing_rate("snn.b"), 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(m.firing_rate(), 0.5);
    EXPECT_TRUE(m.has_prefix("snn."));
    EXPECT_FALSE(m.has_prefix("ann."));
    EXPECT_THROW(m.firing_rate("missing"), StateError);
    m.clear();
    EXPECT_THROW(m.firing_rate(), StateError);
}

TEST(FiringMeter, SilentAndSaturatedInputs) {
    FiringMeter m;
    lif_sequence(Tensor({3, 4}, -5.0), LIFParams{}, &m, "silent");
    lif_sequence(Tensor({3, 4}, 50.0), LIFParams{}, &m, "saturated");
    EXPECT_EQ(m.firing_rate("silent"), 0.0);
    EXPECT_EQ(m.firing_rate("saturated"), 1.0);
}
