#include <gtest/gtest.h>

#include <cmath>

#include "hdi/ann/sest.hpp"
#include "hdi/error.hpp"
#include "hdi/numcore/ops.hpp"
#include "support.hpp"

using namespace hdi;
using namespace hdi::ann;
using namespace hdi::numcore;
using hdi::test::Gen;

namespace {

void fill(Tensor t, Real v) {
    for (auto& x : t.mutable_data()) x = v;
}

void zero_all(ParamStore& store) {
    for (const auto& n : store.names()) fill(store.get(n), 0.0);
}

}  // namespace

TEST(RelativeSemanticDistance, Examples) {
    const Tensor a = relative_semantic_distance(Tensor::from_rows({{1}, {4}}));
    ASSERT_EQ(a.shape(), (Shape{2, 2, 1}));
    EXPECT_EQ(a.data()[0], 0.0);
    EXPECT_EQ(a.data()[1], -3.0);
    EXPECT_EQ(a.data()[2], 3.0);
    EXPECT_EQ(a.data()[3], 0.0);
}

TEST(RelativeSemanticDistance, AntisymmetricWithZeroDiagonal) {
    Gen g(31);
    const std::size_t n = 5, c = 3;
    const Tensor a = relative_semantic_distance(g.tensor({n, c}));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < c; ++k) {
                EXPECT_EQ(a.data()[(i * n + j) * c + k], -a.data()[(j * n + i) * c + k]);
                if (i == j) EXPECT_EQ(a.data()[(i * n + j) * c + k], 0.0);
            }
}

TEST(Rse, TwoTokenScalarOracle) {
    ParamStore store;
    std::mt19937_64 rng(1);
    RelativeSemanticEmbedding e(store, "rse", 2, 2, rng);
    const std::vector<Real> w1{0.5, -1.0, 2.0, 0.25}, b1{0.1, -0.2}, w2{1.5, -0.5}, b2{0.3};
    std::copy(w1.begin(), w1.end(), Tensor(e.hidden.weight).mutable_data().begin());
    std::copy(b1.begin(), b1.end(), Tensor(e.hidden.bias).mutable_data().begin());
    std::copy(w2.begin(), w2.end(), Tensor(e.output.weight).mutable_data().begin());
    std::copy(b2.begin(), b2.end(), Tensor(e.output.bias).mutable_data().begin());
    const Tensor x = Tensor::from_rows({{1.0, 2.0}, {0.5, -1.0}});
    const Tensor s = rse(x, e);
    // a01 = x0 - x1 = (0.5, 3); hidden = a01 * W' + B'
    const Real h0 = 0.5 * 0.5 + 3.0 * 2.0 + 0.1, h1 = 0.5 * -1.0 + 3.0 * 0.25 - 0.2;
    const Real s01 = 1.5 * h0 - 0.5 * h1 + 0.3;
    const Real s00 = 1.5 * 0.1 - 0.5 * -0.2 + 0.3;
    EXPECT_NEAR(s.data()[1], s01, 1e-12);
    EXPECT_NEAR(s.data()[2], s01, 1e-12);
    EXPECT_NEAR(s.data()[0], s00, 1e-12);
    EXPECT_NEAR(s.data()[3], s00, 1e-12);
}

TEST(Rse, IdenticalTokensGiveConstantMap) {
    ParamStore store;
    std::mt19937_64 rng(2);
    RelativeSemanticEmbedding e(store, "rse", 3, 2, rng);
    const Tensor s = rse(Tensor({4, 3}, 0.7), e);
    for (Real v : s.data()) EXPECT_EQ(v, s.data()[0]);
}

TEST(RseProperty, ExactSymmetry) {
    Gen g(32);
    for (int c = 0; c < 1000; ++c) {
        ParamStore store;
        std::mt19937_64 rng(static_cast<std::uint64_t>(c));
        const std::size_t n = g.size(1, 9), ch = g.size(1, 6), b = g.size(1, 3);
        RelativeSemanticEmbedding e(store, "rse", ch, RelativeSemanticEmbedding::default_hidden(ch), rng);
        const Tensor s = rse(g.tensor({b, n, ch}, -3, 3), e);
        ASSERT_EQ(s.shape(), (Shape{b, n, n}));
        for (std::size_t k = 0; k < b; ++k)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) ASSERT_EQ(s.data()[(k * n + i) * n + j], s.data()[(k * n + j) * n + i]);
    }
}

TEST(SemsaWeights, ReducesToPlainAttention) {
    Gen g(33);
    const std::size_t b = 2, h = 2, n = 5, d = 3;
    const Tensor q = g.tensor({b, h, n, d}), k = g.tensor({b, h, n, d});
    const Tensor w = semsa_weights(q, k, Tensor({h, n, n}), Tensor({b, n, n}, 7.0), 1.0, 0.0);
    for (std::size_t bh = 0; bh < b * h; ++bh) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<Real> z(n);
            Real mx = -1e300, tot = 0;
            for (std::size_t j = 0; j < n; ++j) {
                Real dot = 0;
                for (std::size_t c = 0; c < d; ++c) dot += q.data()[(bh * n + i) * d + c] * k.data()[(bh * n + j) * d + c];
                z[j] = dot / std::sqrt(static_cast<Real>(d));
                mx = std::max(mx, z[j]);
            }
            for (auto& v : z) tot += (v = std::exp(v - mx));
            for (std::size_t j = 0; j < n; ++j) ASSERT_NEAR(w.data()[(bh * n + i) * n + j], z[j] / tot, 1e-12);
        }
    }
}

TEST(SemsaWeights, MaskedPairsGetNegligibleWeight) {
    Gen g(34);
    const auto layout = WindowLayout::make(8, 8, 4, 2);
    const Tensor mask = layout.mask();
    const std::size_t nw = layout.count(), n = layout.tokens();
    const Tensor w = semsa_weights(g.tensor({nw, 2, n, 4}), g.tensor({nw, 2, n, 4}), Tensor(), Tensor(), 1, 1, mask);
    for (std::size_t b = 0; b < nw; ++b)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    if (mask.data()[(b * n + i) * n + j] != 0.0) {
                        ASSERT_LT(w.data()[((b * 2 + h) * n + i) * n + j], 1e-6);
                    }
                }
}

TEST(SemsaWeights, RowOffsetInvariance) {
    Gen g(35);
    const std::size_t n = 4;
    const Tensor q = g.tensor({1, 1, n, 2}), k = g.tensor({1, 1, n, 2});
    const Tensor s = g.tensor({1, n, n});
    Tensor shifted = s.clone();
    for (std::size_t i = 0; i < n; ++i) {
        const Real c = g.real(-5, 5);
        for (std::size_t j = 0; j < n; ++j) shifted.mutable_data()[i * n + j] += c;
    }
    const Tensor a = semsa_weights(q, k, Tensor(), s, 1, 1);
    const Tensor b = semsa_weights(q, k, Tensor(), shifted, 1, 1);
    EXPECT_LT(test::max_abs_diff(a, b), 1e-12);
}

TEST(SemsaWeights, TokenPermutationEquivariance) {
    Gen g(36);
    const std::size_t n = 5, d = 3;
    const Tensor q = g.tensor({1, 1, n, d}), k = g.tensor({1, 1, n, d}), s = g.tensor({1, n, n});
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor qp({1, 1, n, d}), kp({1, 1, n, d}), sp({1, n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            qp.mutable_data()[i * d + c] = q.data()[perm[i] * d + c];
            kp.mutable_data()[i * d + c] = k.data()[perm[i] * d + c];
        }
        for (std::size_t j = 0; j < n; ++j) sp.mutable_data()[i * n + j] = s.data()[perm[i] * n + perm[j]];
    }
    const Tensor w = semsa_weights(q, k, Tensor(), s, 1, 1);
    const Tensor wp = semsa_weights(qp, kp, Tensor(), sp, 1, 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(wp.data()[i * n + j], w.data()[perm[i] * n + perm[j]], 1e-12);
}

TEST(RelativePosition, BiasShapeAndIndexRange) {
    ParamStore store;
    std::mt19937_64 rng(3);
    RelativePositionEmbedding rpe(store, "rpe", 4, 3, rng);
    EXPECT_EQ(rpe.bias().shape(), (Shape{3, 16, 16}));
    EXPECT_EQ(rpe.bias(2).shape(), (Shape{3, 4, 4}));
    const auto idx = relative_position_index(4);
    for (auto i : idx) {
        EXPECT_GE(i, 0);
        EXPECT_LT(i, 49);
    }
    // Equal offsets share a table row.
    EXPECT_EQ(idx[0 * 16 + 5], idx[10 * 16 + 15]);
    EXPECT_THROW(rpe.bias(5), DimensionError);
}

TEST(WindowLayout, TilingAndErrors) {
    const auto l = WindowLayout::make(8, 8, 4, 0);
    EXPECT_EQ(l.count(), 4u);
    EXPECT_EQ(window_partition(Tensor({8, 8, 3}), l).shape(), (Shape{4, 16, 3}));
    EXPECT_THROW(WindowLayout::make(6, 8, 4, 0), DimensionError);
    EXPECT_THROW(WindowLayout::make(8, 8, 4, 4), DimensionError);
    const auto small = WindowLayout::for_map(2, 2, 4, true);
    EXPECT_EQ(small.window, 2u);
    EXPECT_EQ(small.shift, 0u);
    const auto padded = WindowLayout::for_map(15, 20, 8, false);
    EXPECT_EQ(padded.height, 16u);
    EXPECT_EQ(padded.width, 24u);
}

TEST(WindowLayout, MaskEntriesAreZeroOrBlocked) {
    const Tensor m = WindowLayout::make(8, 12, 4, 2).mask();
    for (Real v : m.data()) EXPECT_TRUE(v == 0.0 || v == kMaskValue);
}

TEST(WindowPartition, ShiftedCornerTokensWrap) {
    const std::size_t h = 8, w = 8, m = 4, s = 2;
    Tensor grid({h, w, 1});
    for (std::size_t i = 0; i < h * w; ++i) grid.mutable_data()[i] = static_cast<Real>(i);
    const auto layout = WindowLayout::make(h, w, m, s);
    const Tensor p = window_partition(grid, layout);
    // Rolling by -s: window (wy, wx), token (iy, ix) reads ((wy*m+iy+s) mod h, (wx*m+ix+s) mod w).
    for (std::size_t wy = 0; wy < 2; ++wy)
        for (std::size_t wx = 0; wx < 2; ++wx)
            for (std::size_t iy = 0; iy < m; ++iy)
                for (std::size_t ix = 0; ix < m; ++ix) {
                    const std::size_t y = (wy * m + iy + s) % h, x = (wx * m + ix + s) % w;
                    EXPECT_EQ(p.data()[(wy * 2 + wx) * m * m + iy * m + ix], static_cast<Real>(y * w + x));
                }
    // Last window's last token is the original top-left pixel.
    EXPECT_EQ(p.data()[4 * 16 - 1], 1.0 * ((s - 1) * w + s - 1));
}

TEST(WindowLayout, ShiftMaskMatchesWrapOracle) {
    const std::size_t h = 8, w = 12, m = 4, s = 2;
    const auto layout = WindowLayout::make(h, w, m, s);
    const Tensor keep = layout.keep_mask();
    const std::size_t n = m * m;
    for (std::size_t wy = 0; wy < h / m; ++wy)
        for (std::size_t wx = 0; wx < w / m; ++wx) {
            const std::size_t win = wy * (w / m) + wx;
            const auto wraps = [&](std::size_t t) {
                const bool ry = wy * m + t / m + s >= h, rx = wx * m + t % m + s >= w;
                return std::pair<bool, bool>{ry, rx};
            };
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const Real expect = wraps(i) == wraps(j) ? 1.0 : 0.0;
                    ASSERT_EQ(keep.data()[(win * n + i) * n + j], expect) << win << " " << i << " " << j;
                }
        }
}

TEST(WindowPartitionProperty, ReverseIsIdentity) {
    Gen g(37);
    for (int c = 0; c < 1000; ++c) {
        const std::size_t m = g.size(1, 4);
        const std::size_t h = m * g.size(1, 3), w = m * g.size(1, 3), ch = g.size(1, 4);
        const std::size_t shift = g.coin() ? m / 2 : 0;
        const Shape lead = g.coin() ? Shape{} : Shape{g.size(1, 3)};
        Shape shape = lead;
        shape.insert(shape.end(), {h, w, ch});
        const Tensor x = g.tensor(shape);
        const auto layout = WindowLayout::make(h, w, m, shift);
        const Tensor back = window_reverse(window_partition(x, layout), layout, lead);
        ASSERT_EQ(back.shape(), x.shape());
        ASSERT_TRUE(test::bitwise_equal(back, x));
    }
}

TEST(SestBlock, ZeroWeightsGiveIdentity) {
    Gen g(38);
    for (bool shifted : {false, true}) {
        ParamStore store;
        std::mt19937_64 rng(4);
        SestBlockConfig cfg;
        cfg.dim = 8;
        cfg.heads = 2;
        cfg.window = 4;
        cfg.shifted = shifted;
        SestBlock block(store, "b", cfg, rng);
        zero_all(store);
        const Tensor y = g.tensor({8, 8, 8});
        ForwardContext ctx;
        EXPECT_TRUE(test::bitwise_equal(block.forward(y, ctx), y));
    }
}

TEST(SestBlock, ShapePreservedAndPairRuns) {
    Gen g(39);
    ParamStore store;
    std::mt19937_64 rng(5);
    SestBlockConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.window = 4;
    SestBlock a(store, "a", cfg, rng);
    cfg.shifted = true;
    SestBlock b(store, "b", cfg, rng);
    ForwardContext ctx;
    const Tensor y = g.tensor({8, 12, 8});
    EXPECT_EQ(sest_block_pair(y, a, b, ctx).shape(), y.shape());
    const Tensor odd = g.tensor({6, 10, 8});
    EXPECT_EQ(a.forward(odd, ctx).shape(), odd.shape());
}

TEST(PatchOps, EmbedAndMergeShapes) {
    Gen g(40);
    ParamStore store;
    std::mt19937_64 rng(6);
    PatchEmbed embed(store, "e", 3, 8, 4, rng);
    EXPECT_EQ(embed(g.tensor({16, 12, 3})).shape(), (Shape{4, 3, 8}));
    PatchMerging merge(store, "m", 8, rng);
    EXPECT_EQ(merge(g.tensor({4, 3, 8})).shape(), (Shape{2, 2, 16}));
}
