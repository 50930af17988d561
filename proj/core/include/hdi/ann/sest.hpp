#pragma once

#include <random>
#include <string>

#include "hdi/ann/semsa.hpp"

namespace hdi::ann {

using numcore::ForwardContext;

struct SestBlockConfig {
    std::size_t dim = 0;
    std::size_t heads = 1;
    std::size_t window = 8;
    bool shifted = false;
    std::size_t mlp_ratio = 4;
    Real lambda1 = 1.0;
    Real lambda2 = 1.0;
    std::size_t rse_hidden = 0;
    bool use_rse = true;
};

/// LN -> (shifted) window attention -> residual, LN -> MLP -> residual on an
/// [H, W, C] map. The attention half is split in two so a partner branch
/// can read the weight map and add to the logits in between.
class SestBlock {
public:
    struct Pending {
        Tensor input;  // [H, W, C]
        WindowLayout layout;
        Tensor mask;
        Semsa::Prepared attn;
    };

    SestBlock() = default;
    SestBlock(ParamStore& store, const std::string& name, const SestBlockConfig& cfg, std::mt19937_64& rng);

    Pending begin(const Tensor& y) const;
    /// Softmax of the pending logits, [nW, H, N, N].
    Tensor attention_map(const Pending& pending) const;
    /// Completes the block with the given attention weights.
    Tensor finish(const Pending& pending, const Tensor& weights, ForwardContext& ctx) const;
    Tensor forward(const Tensor& y, ForwardContext& ctx) const;

    WindowLayout layout_for(std::size_t height, std::size_t width) const;
    const SestBlockConfig& config() const { return cfg_; }
    const Semsa& attention() const { return attn_; }

private:
    SestBlockConfig cfg_;
    numcore::LayerNorm norm1_;
    numcore::LayerNorm norm2_;
    Semsa attn_;
    numcore::Linear fc1_;
    numcore::Linear fc2_;
};

/// Unshifted block followed by its shifted twin.
Tensor sest_block_pair(const Tensor& y, const SestBlock& regular, const SestBlock& shifted, ForwardContext& ctx);

/// Non-overlapping P x P patches -> linear -> LN.
struct PatchEmbed {
    numcore::Conv2d proj;
    numcore::LayerNorm norm;
    std::size_t patch = 4;

    PatchEmbed() = default;
    PatchEmbed(ParamStore& store, const std::string& name, std::size_t in_channels, std::size_t dim,
               std::size_t patch, std::mt19937_64& rng);
    /// image [H, W, C_in] -> [H/P, W/P, dim]
    Tensor operator()(const Tensor& image) const;
};

/// 2x2 neighbourhood concat -> LN -> linear 4C -> 2C.
struct PatchMerging {
    numcore::LayerNorm norm;
    numcore::Linear reduction;

    PatchMerging() = default;
    PatchMerging(ParamStore& store, const std::string& name, std::size_t dim, std::mt19937_64& rng);
    /// [H, W, C] -> [ceil(H/2), ceil(W/2), 2C]
    Tensor operator()(const Tensor& x) const;
};

/// Index map for the 2x2 concat on [..., H, W, C] after zero padding to even
/// extents; output rows hold (0,0), (1,0), (0,1), (1,1) neighbours.
std::vector<std::int64_t> merge_index(const Shape& shape, Shape& out_shape);

}  // namespace hdi::ann
