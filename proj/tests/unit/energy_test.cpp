#include <gtest/gtest.h>

#include "hdi/energy/energy.hpp"
#include "hdi/error.hpp"
#include "support.hpp"

using namespace hdi;
using namespace hdi::energy;

namespace {

std::map<std::string, Real> all_rates(const OpCount& c, Real f) {
    std::map<std::string, Real> r;
    for (const auto& b : c.blocks)
        if (b.spiking) r[b.name] = f;
    return r;
}

}  // namespace

TEST(Estimate, DirectSubstitution) {
    OpCount c;
    BlockOps b;
    b.name = "snn.x";
    b.spiking = true;
    b.op_ac = 100;
    b.op_mac = 10;
    c.blocks.push_back(b);
    EXPECT_EQ(estimate(c, {{"snn.x", 0.5}}).total_pj, 91.0);
    EXPECT_EQ(estimate(c, {{"snn.x", 0.0}}).total_pj, 46.0);
    EXPECT_THROW(estimate(c, std::map<std::string, Real>{}), ReportError);
    try {
        estimate(c, std::map<std::string, Real>{});
    } catch (const ReportError& e) {
        EXPECT_NE(std::string(e.what()).find("snn.x"), std::string::npos);
    }
    EXPECT_THROW(estimate(c, {{"snn.x", 1.5}}), ReportError);
    EXPECT_THROW(estimate(c, {{"snn.x", 0.5}}, {0.0, 4.6}), ParameterError);
}

TEST(Estimate, DefaultConstantsEchoed) {
    const EnergyConstants k;
    EXPECT_EQ(k.e_ac, 0.9);
    EXPECT_EQ(k.e_mac, 4.6);
    OpCount c;
    c.blocks.push_back({"ann.x", false, 1, 0, 2, 0, 0});
    const auto rep = estimate(c, std::map<std::string, Real>{});
    EXPECT_NE(rep.summary().find("E_A = 0.9000 pJ, E_M = 4.6000 pJ"), std::string::npos) << rep.summary();
    EXPECT_NE(rep.to_csv({"preset=toy"}).find("# preset=toy\nblock,T,f,OP_A,OP_M,pJ\n"), std::string::npos);
}

TEST(CompareRatio, Examples) {
    EXPECT_NEAR(compare_ratio(295.4, 27.95), 10.57, 0.005);
    EXPECT_EQ(compare_ratio(3.0, 3.0), 1.0);
    EXPECT_NEAR(compare_ratio(634.0, 100.0), 6.34, 1e-12);
    EXPECT_THROW(compare_ratio(1.0, 0.0), ParameterError);
}

TEST(CountOps, ToyHandCount) {
    const auto c = count_ops(model::ModelConfig::toy());
    // Stage 1 frame block: 16x16 map, C=16, 2 heads, window 4 -> 16 windows of 16 tokens, d=8.
    const auto& a = c.find("ann.stage1.block1");
    const Real attn = 2.0 * 16 * 2 * 16 * 16 * 8;
    const Real pairs = 16.0 * 16 * 17 / 2;
    const Real mac = attn + 4.0 * 16 * 2 * 16 * 16 + 256.0 * 16 * 48 + 256.0 * 16 * 16 + pairs * (16 * 4 + 4) +
                     2 * 4.0 * 256 * 16 + 2.0 * 256 * 16 * 64 + 4.0 * 256 * 64;
    EXPECT_EQ(a.attn_mac, attn);
    EXPECT_EQ(a.op_mac, mac);
    EXPECT_EQ(a.op_ac, pairs * 16 + 2.0 * 256 * 16);
    EXPECT_FALSE(a.spiking);

    // Stage 1 spiking block (QKA): 16x16 map, C=8, MLP hidden 32.
    const auto& s = c.find("snn.stage1.block1");
    EXPECT_TRUE(s.spiking);
    EXPECT_EQ(s.steps, 2u);
    EXPECT_EQ(s.op_mac, 0.0);
    EXPECT_EQ(s.attn_mac, 0.0);
    EXPECT_EQ(s.attn_ac, 2.0 * 256 * 8);
    EXPECT_EQ(s.op_ac, 2.0 * 256 * 8 * 8 + 2.0 * 256 * 8 + 256.0 * 8 * 8 + 2.0 * 256 * 8 * 32 + 2.0 * 256 * 8);

    // Stage 3 spiking block (SSA): 4x4 map equals one window, C=32, 8 heads.
    const auto& ssa = c.find("snn.stage3.block1");
    EXPECT_EQ(ssa.attn_ac, 2.0 * 1 * 8 * 16 * 16 * 4);
    EXPECT_EQ(ssa.attn_mac, 0.0);
}

TEST(CountOps, QkaBlocksHaveNoMacAnywhereInAttention) {
    const auto cfg = model::ModelConfig::paper();
    const auto c = count_ops(cfg);
    std::size_t qka = 0;
    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
        if (cfg.stages[s].kind != snn::BlockKind::Qka) continue;
        for (std::size_t b = 0; b < cfg.stages[s].depth; ++b, ++qka) {
            const auto& blk = c.find(model::Model::snn_block_name(s, b));
            EXPECT_EQ(blk.attn_mac, 0.0);
            EXPECT_EQ(blk.op_mac, 0.0);
        }
    }
    EXPECT_GT(qka, 0u);
    for (const auto& b : c.blocks) {
        EXPECT_GE(b.op_ac, 0.0);
        EXPECT_GE(b.op_mac, 0.0);
    }
}

TEST(Estimate, TotalMatchesIndependentRecomputation) {
    const auto c = count_ops(model::ModelConfig::toy());
    const auto rep = estimate(c, all_rates(c, 0.2));
    Real total = 0;
    for (const auto& b : c.blocks) {
        const Real f = b.spiking ? 0.2 : 1.0;
        total += static_cast<Real>(b.steps) * (f * 0.9 * b.op_ac + 4.6 * b.op_mac);
    }
    EXPECT_NEAR(rep.total_pj, total, 1e-9 * total);
    EXPECT_NEAR(rep.ann_pj + rep.snn_pj, rep.total_pj, 1e-9 * total);
}

TEST(Estimate, UnitRatesGiveFullAccumulateEnergy) {
    const auto c = count_ops(model::ModelConfig::toy());
    const auto rep = estimate(c, all_rates(c, 1.0));
    for (const auto& b : rep.blocks) {
        if (!b.spiking) continue;
        const Real t = static_cast<Real>(b.steps);
        EXPECT_DOUBLE_EQ(b.energy_pj - t * 4.6 * b.op_mac, 0.9 * b.op_ac * t) << b.name;
    }
}

TEST(Estimate, RatesFromMeter) {
    lif::FiringMeter meter;
    const std::vector<Real> spikes{1, 0, 0, 0};
    meter.record("snn.stage1.block1.input.sn", spikes);
    OpCount c;
    c.blocks.push_back({"snn.stage1.block1", true, 2, 40, 0, 0, 0});
    EXPECT_DOUBLE_EQ(estimate(c, meter).total_pj, 2 * 0.25 * 0.9 * 40);
    c.blocks.push_back({"snn.stage1.block2", true, 2, 40, 0, 0, 0});
    EXPECT_THROW(estimate(c, meter), ReportError);
}
