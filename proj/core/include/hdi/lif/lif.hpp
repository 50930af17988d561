#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hdi/numcore/tensor.hpp"

namespace hdi::lif {

using numcore::Real;
using numcore::Tensor;

struct LIFParams {
    Real tau = 2.0;
    Real v_reset = 0.0;
    Real v_th = 1.0;
    // Width of the arctan-family surrogate: dS/dH ~ 1 / (1 + (width * v)^2).
    Real surrogate_width = std::numbers::pi;

    /// Neurons that follow an attention output fire at 0.5.
    static LIFParams attention_output() {
        LIFParams p;
        p.v_th = 0.5;
        return p;
    }
    void validate() const;
};

struct LIFState {
    std::vector<Real> v;
    std::size_t step = 0;

    static LIFState resting(std::size_t n, const LIFParams& p) { return {std::vector<Real>(n, p.v_reset), 0}; }
};

struct StepOutput {
    std::vector<Real> spikes;
    std::vector<Real> h;  // pre-threshold membrane potential
};

/// One update: H = V + (x - (V - v_reset)) / tau; spike iff H - v_th >= 0;
/// V' = H (1 - spike) + v_reset * spike.
StepOutput lif_step(LIFState& state, std::span<const Real> x, const LIFParams& p);

inline Real surrogate_grad(Real v, Real width = std::numbers::pi) { return 1.0 / (1.0 + (width * v) * (width * v)); }

/// Spike and element-timestep counters per named layer.
class FiringMeter {
public:
    void record(const std::string& layer, std::span<const Real> spikes);
    /// Rate of one layer; throws StateError when the layer never fired a pass.
    Real firing_rate(const std::string& layer) const;
    /// Aggregate over all layers.
    Real firing_rate() const;
    /// Aggregate over layers whose name starts with `prefix`.
    Real firing_rate_prefix(const std::string& prefix) const;
    bool has_prefix(const std::string& prefix) const;
    std::vector<std::string> layers() const;
    void clear();

    struct Counts {
        std::uint64_t spikes = 0;
        std::uint64_t slots = 0;
    };
    std::map<std::string, Counts> counts() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, Counts> counts_;
};

/// Runs a fresh LIF layer over the leading (time) axis of x[T, ...] and
/// returns binary spikes of the same shape. Backward uses the surrogate for
/// dS/dH and treats the reset gate (1 - S) as a constant.
Tensor lif_sequence(const Tensor& x, const LIFParams& p, FiringMeter* meter = nullptr, const std::string& layer = {});

}  // namespace hdi::lif
