#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hdi/numcore/tape.hpp"
#include "hdi/numcore/tensor.hpp"

// Differentiable primitives. Every function records a tape node when a tape
// is active and at least one input is tracked. Shapes follow the row-major
// convention: the last axis is the feature/channel axis.
namespace hdi::numcore {

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real c);
Tensor add_scalar(const Tensor& x, Real c);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
// Gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& x, Real lo, Real hi);

// `b` is broadcast to a's shape (numpy rules) before the operation.
Tensor add_broadcast(const Tensor& a, const Tensor& b);
Tensor mul_broadcast(const Tensor& a, const Tensor& b);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
/// out[i] = x[index[i]], or 0 where index[i] < 0. The backward pass
/// scatter-adds, so repeated indices broadcast.
Tensor gather(const Tensor& x, std::vector<std::int64_t> index, Shape out_shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false);

// Products.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product over equal leading dims: a[..., m, k] * b[..., k, n],
/// or b[..., n, k] transposed when `transpose_b`.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
/// x[..., in] * w[in, out] (+ bias[out]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());

// Normalization and friends.
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = 1e-5);

enum class Mode { Train, Eval };

struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    Real momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
    Real eps = 1e-5;
};

/// Per-channel normalization over all rows (every axis but the last).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode);

Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng);

/// x[B, H, W, C] -> [B, H/k, W/k, C], window k, stride k.
Tensor maxpool2d(const Tensor& x, std::size_t k);

/// Index map for im2col on x[B, H, W, C] with square `kernel`, `stride`
/// and zero padding `pad`; rows are output pixels, columns kernel*kernel*C.
std::vector<std::int64_t> im2col_index(const Shape& x_shape, std::size_t kernel, std::size_t stride,
                                       std::size_t pad, std::size_t& out_h, std::size_t& out_w);

/// Convolution on channel-last input; w is [kernel*kernel*C_in, C_out].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t kernel, std::size_t stride,
              std::size_t pad);

}  // namespace hdi::numcore
