#pragma once

#include <random>
#include <string>

#include "hdi/ann/semsa.hpp"
#include "hdi/ann/window.hpp"
#include "hdi/lif/lif.hpp"
#include "hdi/numcore/layers.hpp"

namespace hdi::snn {

using numcore::ForwardContext;
using numcore::ParamStore;
using numcore::Real;
using numcore::Shape;
using numcore::Tensor;

bool is_binary(const Tensor& x);
/// Throws DomainError naming `what` unless every element is 0 or 1.
void require_binary(const Tensor& x, const std::string& what);

/// LIF layer over `steps` timesteps. x's leading axis must be a multiple of
/// `steps` with time outermost; the shape is preserved.
Tensor spiking_neuron(const Tensor& x, std::size_t steps, const lif::LIFParams& p, ForwardContext& ctx,
                      const std::string& layer);

/// SN(BN(Linear(x))) on x[T, ..., C_in].
struct SpikeProjection {
    numcore::Linear lin;
    numcore::BatchNorm bn;
    lif::LIFParams lif;
    std::string name;

    SpikeProjection() = default;
    SpikeProjection(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
                    lif::LIFParams lif = {});
    Tensor operator()(const Tensor& x, std::size_t steps, ForwardContext& ctx);
};

struct SpikeQkv {
    SpikeProjection q, k, v;

    SpikeQkv() = default;
    SpikeQkv(ParamStore& store, const std::string& name, std::size_t dim, std::mt19937_64& rng);
};

struct QkvSpikes {
    Tensor q, k, v;
};

/// Binary Q, K, V from binary x[T*B, N, C]; throws DomainError otherwise.
QkvSpikes spike_qkv(const Tensor& x, std::size_t steps, SpikeQkv& p, ForwardContext& ctx);

/// R = QK^T * s + l1 * P + l2 * S (no softmax), zeroed where keep == 0.
///   q, k : [B, H, N, d];  p : [H, N, N];  s : [B, N, N];  keep : [nW, N, N]
Tensor ssa_scores(const Tensor& q, const Tensor& k, const Tensor& p, const Tensor& s, Real scale, Real lambda1,
                  Real lambda2, const Tensor& keep = Tensor());
/// SN(R V) with attention-output neurons; r [B, H, N, N], v [B, H, N, d].
Tensor ssa_aggregate(const Tensor& r, const Tensor& v, std::size_t steps, ForwardContext& ctx, const std::string& layer,
                     const lif::LIFParams& p = lif::LIFParams::attention_output());
/// A = SN(sum over channels of q) per token and timestep; returns A * k.
/// q, k are [T, N, C]; gate is [T, N, 1] on request.
Tensor qka(const Tensor& q, const Tensor& k, const lif::LIFParams& p, ForwardContext& ctx, const std::string& layer,
           Tensor* gate = nullptr);

struct SsaConfig {
    std::size_t dim = 0;
    std::size_t heads = 1;
    std::size_t window = 8;
    Real scale = 0.125;
    Real lambda1 = 1.0;
    Real lambda2 = 1.0;
    std::size_t rse_hidden = 0;
    bool use_rse = true;
};

class SsaAttention {
public:
    struct Prepared {
        Tensor v;       // [T*nW, H, N, d]
        Tensor scores;  // raw R, [T*nW, H, N, N]
        std::size_t steps = 1;
    };

    SsaAttention() = default;
    SsaAttention(ParamStore& store, const std::string& name, const SsaConfig& cfg, std::mt19937_64& rng);

    /// x: binary map [T, H, W, C]; Q/K/V are projected on the map, then
    /// padded and partitioned with `layout`.
    Prepared prepare(const Tensor& x, const ann::WindowLayout& layout, const Tensor& keep, ForwardContext& ctx);
    /// SN(BN(Linear(SN(scores V)))) -> [T*nW, N, C]
    Tensor attend(const Prepared& prepared, const Tensor& scores, ForwardContext& ctx);

    const SsaConfig& config() const { return cfg_; }
    const std::string& name() const { return name_; }

private:
    SsaConfig cfg_;
    std::string name_;
    SpikeQkv qkv_;
    SpikeProjection proj_;
    ann::RelativePositionEmbedding rpe_;
    ann::RelativeSemanticEmbedding rse_;
};

class QkaAttention {
public:
    QkaAttention() = default;
    QkaAttention(ParamStore& store, const std::string& name, std::size_t dim, std::mt19937_64& rng,
                 lif::LIFParams gate = lif::LIFParams::attention_output());
    /// x: binary tokens [T, N, C] -> [T, N, C]
    Tensor forward(const Tensor& x, ForwardContext& ctx);

private:
    std::string name_;
    SpikeProjection q_, k_, proj_;
    lif::LIFParams gate_;
};

enum class BlockKind { Qka, Ssa };

struct SpikingBlockConfig {
    BlockKind kind = BlockKind::Ssa;
    std::size_t dim = 0;
    std::size_t heads = 1;
    std::size_t window = 8;
    bool shifted = false;
    std::size_t mlp_ratio = 4;
    Real scale = 0.125;
    Real lambda1 = 1.0;
    Real lambda2 = 1.0;
    std::size_t rse_hidden = 0;
    bool use_rse = true;
};

/// Input SN -> attention -> residual, then spiking MLP -> residual, on
/// Z[T, H, W, C]. SSA blocks can be split around their raw score map.
class SpikingBlock {
public:
    struct Pending {
        Tensor input;   // Z
        Tensor spikes;  // SN(Z)
        ann::WindowLayout layout;
        Tensor keep;
        SsaAttention::Prepared attn;
    };

    SpikingBlock() = default;
    SpikingBlock(ParamStore& store, const std::string& name, const SpikingBlockConfig& cfg, std::mt19937_64& rng);

    Pending begin(const Tensor& z, ForwardContext& ctx);
    /// Raw SSA scores of the pending pass; StateError for QKA blocks.
    const Tensor& raw_scores(const Pending& pending) const;
    Tensor finish(const Pending& pending, const Tensor& scores, ForwardContext& ctx);
    Tensor forward(const Tensor& z, ForwardContext& ctx);

    const SpikingBlockConfig& config() const { return cfg_; }
    const std::string& name() const { return name_; }
    ann::WindowLayout layout_for(std::size_t height, std::size_t width) const;

private:
    Tensor mlp(const Tensor& x, std::size_t steps, ForwardContext& ctx);

    SpikingBlockConfig cfg_;
    std::string name_;
    SsaAttention ssa_;
    QkaAttention qka_;
    SpikeProjection fc1_, fc2_;
};

/// Neurons at a block input also pass single spikes.
lif::LIFParams block_input_params();

/// SN(MaxPool_k(BN(Conv3x3(x))) + BN(Conv_kxk/k(x))) on x[T, H, W, C].
struct SpikingDownsample {
    numcore::Conv2d main;
    numcore::BatchNorm main_bn;
    numcore::Conv2d shortcut;
    numcore::BatchNorm shortcut_bn;
    std::size_t factor = 2;
    std::string name;

    SpikingDownsample() = default;
    SpikingDownsample(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t factor,
                      std::mt19937_64& rng);
    Tensor operator()(const Tensor& x, ForwardContext& ctx);
};

/// Conv3x3 -> BN -> SN on real-valued voxels [T, H, W, 2].
struct SpikeConversion {
    numcore::Conv2d conv;
    numcore::BatchNorm bn;
    std::string name;

    SpikeConversion() = default;
    SpikeConversion(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
    Tensor operator()(const Tensor& voxels, ForwardContext& ctx);
};

/// Spike conversion followed by the stride-P embedding.
struct SpikingPatchEmbed {
    SpikeConversion convert;
    SpikingDownsample down;

    SpikingPatchEmbed() = default;
    SpikingPatchEmbed(ParamStore& store, const std::string& name, std::size_t in, std::size_t dim, std::size_t patch,
                      std::mt19937_64& rng);
    Tensor operator()(const Tensor& voxels, ForwardContext& ctx);
};

}  // namespace hdi::snn
