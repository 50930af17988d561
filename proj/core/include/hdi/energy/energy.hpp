#pragma once

#include <map>
#include <string>
#include <vector>

#include "hdi/lif/lif.hpp"
#include "hdi/model/model.hpp"

namespace hdi::energy {

using numcore::Real;

/// MAC-equivalents charged per element of softmax, layer norm and GELU.
inline constexpr Real kNonlinearMacPerElement = 4.0;

struct EnergyConstants {
    Real e_ac = 0.9;   // pJ per accumulate
    Real e_mac = 4.6;  // pJ per multiply-accumulate
    void validate() const;
};

/// Operation counts of one block, per timestep.
struct BlockOps {
    std::string name;
    bool spiking = false;
    std::size_t steps = 1;
    Real op_ac = 0;
    Real op_mac = 0;
    // Share of the above spent in attention products (QK^T, weights x V).
    Real attn_ac = 0;
    Real attn_mac = 0;
};

struct OpCount {
    std::vector<BlockOps> blocks;

    const BlockOps& find(const std::string& name) const;
    /// Sum of steps * ops over all blocks.
    Real total_ac() const;
    Real total_mac() const;
};

/// Analytic counts from layer shapes. Products with a binary operand are
/// accumulates; dense real products are multiply-accumulates; BN folds into
/// the preceding linear map; residual adds are accumulates.
OpCount count_ops(const model::ModelConfig& cfg);
inline OpCount count_ops(const model::Model& m) { return count_ops(m.config()); }

struct BlockEnergy {
    std::string name;
    bool spiking = false;
    std::size_t steps = 1;
    Real rate = 1;
    Real op_ac = 0;
    Real op_mac = 0;
    Real energy_pj = 0;
};

struct EnergyReport {
    EnergyConstants constants;
    std::vector<BlockEnergy> blocks;
    Real total_pj = 0;
    Real ann_pj = 0;
    Real snn_pj = 0;
    Real ac_gops = 0;   // sum of T * f * OP_A, in 1e9
    Real mac_gops = 0;  // sum of T * OP_M, in 1e9

    /// `block,T,f,OP_A,OP_M,pJ` rows; `header` lines are written first as
    /// `# ` comments.
    std::string to_csv(const std::vector<std::string>& header = {}) const;
    std::string summary() const;
};

/// E = sum_n T_n (f_n E_A OP_A^n + E_M OP_M^n). Spiking blocks take f_n from
/// `rates` (ReportError naming the block when absent); other blocks use 1.
EnergyReport estimate(const OpCount& counts, const std::map<std::string, Real>& rates,
                      const EnergyConstants& consts = {});
/// Rates read from the meter by block-name prefix.
EnergyReport estimate(const OpCount& counts, const lif::FiringMeter& meter, const EnergyConstants& consts = {});

/// e_ann / e_snn rounded to two decimals; ParameterError unless both > 0.
Real compare_ratio(Real e_ann, Real e_snn);

}  // namespace hdi::energy
