#pragma once

#include <random>
#include <string>
#include <vector>

#include "hdi/numcore/layers.hpp"

namespace hdi::interaction {

using numcore::ParamStore;
using numcore::Real;
using numcore::Tensor;

/// How a per-head map collapses to one map before crossing branches.
enum class KernelKind { Mean, Conv, Mlp };

KernelKind parse_kernel(const std::string& s);
std::string kernel_name(KernelKind k);

struct InteractionConfig {
    bool enabled = true;
    Real lambda3 = 0.3;  // into the spiking branch
    Real lambda4 = 0.2;  // into the frame branch
    std::size_t layers = 4;
    std::size_t start_stage = 3;  // 1-based
    KernelKind to_snn = KernelKind::Mean;
    KernelKind to_ann = KernelKind::Mean;

    void validate() const;
};

/// 0-based stage and block indices of an interacting pair.
struct BlockRef {
    std::size_t stage = 0;
    std::size_t block = 0;
    bool operator==(const BlockRef&) const = default;
};

/// First `layers` blocks counted from the start stage onward; ConfigError
/// when fewer blocks exist. Disabled configs give an empty schedule.
std::vector<BlockRef> interaction_schedule(const InteractionConfig& cfg, const std::vector<std::size_t>& depths);

/// Mean over the head axis: [..., H, N, N] -> [..., N, N].
Tensor attention_kernel_mean(const Tensor& a);

/// Mean over time of a [T * nW, ...] map -> [nW, ...].
Tensor temporal_align(const Tensor& a, std::size_t steps);
/// Repeats an [nW, ...] map for every timestep -> [T * nW, ...].
Tensor broadcast_time(const Tensor& a, std::size_t steps);

/// logits[B, H, N, N] + lambda * mapped[nW, N, N], broadcast over heads
/// and over leading copies of the window axis (B = copies * nW).
Tensor inject(const Tensor& logits, const Tensor& mapped, Real lambda);

/// Head-collapsing kernel: parameter-free mean, a learned 1x1 mix over
/// heads, or a small MLP over the head vector.
class AttentionKernel {
public:
    AttentionKernel() = default;
    AttentionKernel(ParamStore& store, const std::string& name, KernelKind kind, std::size_t heads,
                    std::mt19937_64& rng);
    /// [..., H, N, N] -> [..., N, N]
    Tensor operator()(const Tensor& a) const;
    KernelKind kind() const { return kind_; }

private:
    KernelKind kind_ = KernelKind::Mean;
    std::size_t heads_ = 0;
    numcore::Linear first_;
    numcore::Linear second_;
};

}  // namespace hdi::interaction
