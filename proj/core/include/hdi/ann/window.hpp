#pragma once

#include <cstdint>
#include <vector>

#include "hdi/numcore/tensor.hpp"

namespace hdi::ann {

using numcore::Real;
using numcore::Shape;
using numcore::Tensor;

inline constexpr Real kMaskValue = -100.0;

/// Window tiling of an H x W map with an optional cyclic shift.
struct WindowLayout {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t window = 8;
    std::size_t shift = 0;

    /// Throws DimensionError unless H and W are multiples of the window.
    static WindowLayout make(std::size_t height, std::size_t width, std::size_t window, std::size_t shift);
    /// Stage helper: window clamps to the map when the map is no larger than
    /// M (shift then drops to 0); otherwise the padded map is tiled.
    static WindowLayout for_map(std::size_t height, std::size_t width, std::size_t window, bool shifted);

    std::size_t tokens() const { return window * window; }
    std::size_t windows_y() const { return height / window; }
    std::size_t windows_x() const { return width / window; }
    std::size_t count() const { return windows_y() * windows_x(); }
    void validate() const;

    /// For each (window, token) the flat map position (y * W + x) it reads
    /// after rolling the map by -shift along both axes.
    std::vector<std::int64_t> source_positions() const;
    /// Additive mask [nW, N, N]: 0 within a shifted region, kMaskValue across.
    Tensor mask() const;
    /// Same pattern as a 0/1 keep-mask.
    Tensor keep_mask() const;
};

/// x[..., H, W, C] -> [B * nW, N, C] where B is the product of leading axes.
Tensor window_partition(const Tensor& x, const WindowLayout& layout);
/// Inverse of window_partition; `lead` restores the leading axes.
Tensor window_reverse(const Tensor& windows, const WindowLayout& layout, const Shape& lead = {});

/// Zero-pads x[..., H, W, C] at the bottom/right up to (height, width).
Tensor pad_map(const Tensor& x, std::size_t height, std::size_t width);
/// Keeps the top-left (height, width) region of x[..., H', W', C].
Tensor crop_map(const Tensor& x, std::size_t height, std::size_t width);

/// Row of the (2M-1)^2 table for each token pair (i, j), flattened [N * N].
std::vector<std::int64_t> relative_position_index(std::size_t window);

}  // namespace hdi::ann
