#pragma once

#include <random>
#include <string>

#include "hdi/lif/lif.hpp"
#include "hdi/numcore/ops.hpp"
#include "hdi/numcore/params.hpp"

namespace hdi::numcore {

inline constexpr Real kInitStd = 0.02;

/// Per-forward knobs shared by every layer.
struct ForwardContext {
    Mode mode = Mode::Train;
    Real dropout = 0.0;
    std::mt19937_64* rng = nullptr;
    lif::FiringMeter* meter = nullptr;
    // Batch norms use their running statistics even in Train mode.
    bool frozen_norms = false;

    Mode norm_mode() const { return frozen_norms ? Mode::Eval : mode; }
};

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
           bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    std::size_t in() const { return weight.dim(0); }
    std::size_t out() const { return weight.dim(1); }
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, std::size_t channels);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    BatchNormStats stats;

    BatchNorm() = default;
    BatchNorm(ParamStore& store, const std::string& name, std::size_t channels);
    Tensor operator()(const Tensor& x, Mode mode) { return batch_norm(x, gamma, beta, stats, mode); }
};

/// 3x3-style convolution on channel-last maps; weight is [k*k*in, out].
struct Conv2d {
    Tensor weight;
    Tensor bias;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t pad = 1;

    Conv2d() = default;
    Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
           std::size_t stride, std::size_t pad, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, kernel, stride, pad); }
};

}  // namespace hdi::numcore
