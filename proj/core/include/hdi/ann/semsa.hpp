#pragma once

#include <random>
#include <string>

#include "hdi/ann/window.hpp"
#include "hdi/numcore/layers.hpp"

namespace hdi::ann {

using numcore::ParamStore;

/// Learned (2M-1)^2 x H table gathered into per-head M^2 x M^2 biases.
struct RelativePositionEmbedding {
    Tensor table;
    std::size_t window = 0;
    std::size_t heads = 0;

    RelativePositionEmbedding() = default;
    RelativePositionEmbedding(ParamStore& store, const std::string& name, std::size_t window, std::size_t heads,
                              std::mt19937_64& rng);
    /// [H, n, n] for an effective window m <= M (0 means M), n = m * m.
    /// Smaller windows read the central part of the table.
    Tensor bias(std::size_t effective = 0) const;
};

/// Two-layer map from a pairwise difference vector to one scalar.
struct RelativeSemanticEmbedding {
    numcore::Linear hidden;  // C -> hidden
    numcore::Linear output;  // hidden -> 1

    RelativeSemanticEmbedding() = default;
    RelativeSemanticEmbedding(ParamStore& store, const std::string& name, std::size_t channels, std::size_t hidden,
                              std::mt19937_64& rng);
    static std::size_t default_hidden(std::size_t channels) { return channels / 4 > 0 ? channels / 4 : 1; }
};

/// a[i, j] = x[i] - x[j]; x is [N, C] or [B, N, C].
Tensor relative_semantic_distance(const Tensor& x);
/// Symmetric [N, N] (or [B, N, N]) bias. The map is evaluated on pairs
/// i <= j only and mirrored into the lower triangle.
Tensor rse(const Tensor& x, const RelativeSemanticEmbedding& mlp);

/// QK^T / sqrt(d) + l1 * P + l2 * S + mask, with
///   q, k : [B, H, N, d]
///   p    : [H, N, N] (optional)
///   s    : [B, N, N] (optional, shared across heads)
///   mask : [nW, N, N] (optional) where B is a multiple of nW and windows
///          are the fastest-varying part of B.
Tensor semsa_logits(const Tensor& q, const Tensor& k, const Tensor& p, const Tensor& s, Real lambda1, Real lambda2,
                    const Tensor& mask = Tensor());
/// Row softmax of semsa_logits.
Tensor semsa_weights(const Tensor& q, const Tensor& k, const Tensor& p, const Tensor& s, Real lambda1, Real lambda2,
                     const Tensor& mask = Tensor());

/// Adds mask[nW, N, N] to every head and leading copy of logits[B, H, N, N].
Tensor add_window_mask(const Tensor& logits, const Tensor& mask);

/// [B, N, H * d] <-> [B, H, N, d]
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);

struct SemsaConfig {
    std::size_t dim = 0;
    std::size_t heads = 1;
    std::size_t window = 8;
    Real lambda1 = 1.0;
    Real lambda2 = 1.0;
    std::size_t rse_hidden = 0;  // 0 picks the default width
    bool use_rse = true;
};

/// Window attention with positional and semantic biases.
class Semsa {
public:
    struct Prepared {
        Tensor v;       // [B, H, N, d]
        Tensor logits;  // [B, H, N, N], masked, before softmax
    };

    Semsa() = default;
    Semsa(ParamStore& store, const std::string& name, const SemsaConfig& cfg, std::mt19937_64& rng);

    /// xw is [B, N, C] (windows along B). `window` is the effective window
    /// of the layout and must not exceed the configured one.
    Prepared prepare(const Tensor& xw, std::size_t window, const Tensor& mask = Tensor()) const;
    /// Weighted sum of values and output projection: [B, N, C].
    Tensor attend(const Prepared& prepared, const Tensor& weights) const;
    Tensor forward(const Tensor& xw, std::size_t window, const Tensor& mask = Tensor()) const;

    const SemsaConfig& config() const { return cfg_; }
    const numcore::Linear& qkv() const { return qkv_; }
    const numcore::Linear& proj() const { return proj_; }

private:
    SemsaConfig cfg_;
    numcore::Linear qkv_;
    numcore::Linear proj_;
    RelativePositionEmbedding rpe_;
    RelativeSemanticEmbedding rse_;
};

}  // namespace hdi::ann
