#include "hdi/ann/window.hpp"

#include <algorithm>
#include <string>

#include "hdi/error.hpp"
#include "hdi/numcore/ops.hpp"

namespace hdi::ann {

namespace {

void split_map(const Tensor& x, std::size_t& lead, std::size_t& h, std::size_t& w, std::size_t& c) {
    if (x.rank() < 3) throw DimensionError("expected a [..., H, W, C] map, got " + numcore::shape_str(x.shape()));
    const std::size_t r = x.rank();
    h = x.dim(r - 3);
    w = x.dim(r - 2);
    c = x.dim(r - 1);
    lead = x.numel() / (h * w * c);
}

Shape lead_shape(const Tensor& x) { return Shape(x.shape().begin(), x.shape().end() - 3); }

}  // namespace

WindowLayout WindowLayout::make(std::size_t height, std::size_t width, std::size_t window, std::size_t shift) {
    WindowLayout l{height, width, window, shift};
    l.validate();
    return l;
}

WindowLayout WindowLayout::for_map(std::size_t height, std::size_t width, std::size_t window, bool shifted) {
    if (window == 0) throw DimensionError("window size must be positive");
    if (std::min(height, width) <= window) {
        const std::size_t m = std::min(height, width);
        const auto round_up = [m](std::size_t v) { return (v + m - 1) / m * m; };
        return make(round_up(height), round_up(width), m, 0);
    }
    const auto round_up = [window](std::size_t v) { return (v + window - 1) / window * window; };
    return make(round_up(height), round_up(width), window, shifted ? window / 2 : 0);
}

void WindowLayout::validate() const {
    if (window == 0 || height == 0 || width == 0) throw DimensionError("window layout has a zero extent");
    if (height % window != 0 || width % window != 0) {
        throw DimensionError("map " + std::to_string(height) + "x" + std::to_string(width) +
                             " is not divisible by window " + std::to_string(window));
    }
    if (shift >= window) throw DimensionError("shift must be smaller than the window");
}

std::vector<std::int64_t> WindowLayout::source_positions() const {
    validate();
    const std::size_t m = window, n = tokens();
    std::vector<std::int64_t> out(count() * n);
    for (std::size_t wy = 0; wy < windows_y(); ++wy) {
        for (std::size_t wx = 0; wx < windows_x(); ++wx) {
            const std::size_t w = wy * windows_x() + wx;
            for (std::size_t iy = 0; iy < m; ++iy) {
                for (std::size_t ix = 0; ix < m; ++ix) {
                    const std::size_t y = (wy * m + iy + shift) % height;
                    const std::size_t x = (wx * m + ix + shift) % width;
                    out[w * n + iy * m + ix] = static_cast<std::int64_t>(y * width + x);
                }
            }
        }
    }
    return out;
}

Tensor WindowLayout::keep_mask() const {
    validate();
    const std::size_t n = tokens(), nw = count(), m = window;
    std::vector<Real> keep(nw * n * n, 1.0);
    if (shift == 0) return Tensor({nw, n, n}, std::move(keep));
    const auto region = [&](std::size_t v, std::size_t extent) -> int {
        if (v < extent - m) return 0;
        if (v < extent - shift) return 1;
        return 2;
    };
    for (std::size_t wy = 0; wy < windows_y(); ++wy) {
        for (std::size_t wx = 0; wx < windows_x(); ++wx) {
            const std::size_t w = wy * windows_x() + wx;
            std::vector<int> label(n);
            for (std::size_t iy = 0; iy < m; ++iy) {
                for (std::size_t ix = 0; ix < m; ++ix) {
                    label[iy * m + ix] = region(wy * m + iy, height) * 3 + region(wx * m + ix, width);
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) keep[(w * n + i) * n + j] = label[i] == label[j] ? 1.0 : 0.0;
            }
        }
    }
    return Tensor({nw, n, n}, std::move(keep));
}

Tensor WindowLayout::mask() const {
    Tensor keep = keep_mask();
    std::vector<Real> v(keep.numel());
    const auto k = keep.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = k[i] != 0.0 ? 0.0 : kMaskValue;
    return Tensor(keep.shape(), std::move(v));
}

Tensor window_partition(const Tensor& x, const WindowLayout& layout) {
    std::size_t lead, h, w, c;
    split_map(x, lead, h, w, c);
    if (h != layout.height || w != layout.width) {
        throw DimensionError("map " + std::to_string(h) + "x" + std::to_string(w) + " does not match layout " +
                             std::to_string(layout.height) + "x" + std::to_string(layout.width));
    }
    const auto pos = layout.source_positions();
    const std::size_t per = pos.size();
    std::vector<std::int64_t> idx(lead * per * c);
    for (std::size_t b = 0; b < lead; ++b) {
        for (std::size_t p = 0; p < per; ++p) {
            const std::int64_t base = static_cast<std::int64_t>(b * h * w) + pos[p];
            for (std::size_t ch = 0; ch < c; ++ch) {
                idx[(b * per + p) * c + ch] = base * static_cast<std::int64_t>(c) + static_cast<std::int64_t>(ch);
            }
        }
    }
    return numcore::gather(x, std::move(idx), {lead * layout.count(), layout.tokens(), c});
}

Tensor window_reverse(const Tensor& windows, const WindowLayout& layout, const Shape& lead) {
    if (windows.rank() != 3 || windows.dim(1) != layout.tokens()) {
        throw DimensionError("window_reverse expects [B*nW, N, C], got " + numcore::shape_str(windows.shape()));
    }
    const std::size_t nw = layout.count();
    if (windows.dim(0) % nw != 0) throw DimensionError("window count does not divide the batch axis");
    const std::size_t b_count = windows.dim(0) / nw, c = windows.dim(2);
    const std::size_t lead_n = numcore::numel_of(lead);
    if (!lead.empty() && lead_n != b_count) throw DimensionError("leading shape does not match the window batch");
    const auto pos = layout.source_positions();
    const std::size_t hw = layout.height * layout.width;
    std::vector<std::int64_t> inverse(hw);
    for (std::size_t p = 0; p < pos.size(); ++p) inverse[static_cast<std::size_t>(pos[p])] = static_cast<std::int64_t>(p);
    std::vector<std::int64_t> idx(b_count * hw * c);
    for (std::size_t b = 0; b < b_count; ++b) {
        for (std::size_t q = 0; q < hw; ++q) {
            const std::int64_t base = static_cast<std::int64_t>(b * pos.size()) + inverse[q];
            for (std::size_t ch = 0; ch < c; ++ch) {
                idx[(b * hw + q) * c + ch] = base * static_cast<std::int64_t>(c) + static_cast<std::int64_t>(ch);
            }
        }
    }
    Shape out = lead.empty() && b_count != 1 ? Shape{b_count} : lead;
    out.insert(out.end(), {layout.height, layout.width, c});
    return numcore::gather(windows, std::move(idx), out);
}

Tensor pad_map(const Tensor& x, std::size_t height, std::size_t width) {
    std::size_t lead, h, w, c;
    split_map(x, lead, h, w, c);
    if (h == height && w == width) return x;
    if (height < h || width < w) throw DimensionError("pad_map cannot shrink a map");
    std::vector<std::int64_t> idx(lead * height * width * c, -1);
    for (std::size_t b = 0; b < lead; ++b) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    idx[((b * height + y) * width + xx) * c + ch] =
                        static_cast<std::int64_t>(((b * h + y) * w + xx) * c + ch);
                }
            }
        }
    }
    Shape out = lead_shape(x);
    out.insert(out.end(), {height, width, c});
    return numcore::gather(x, std::move(idx), out);
}

Tensor crop_map(const Tensor& x, std::size_t height, std::size_t width) {
    std::size_t lead, h, w, c;
    split_map(x, lead, h, w, c);
    if (h == height && w == width) return x;
    if (height > h || width > w) throw DimensionError("crop_map cannot grow a map");
    std::vector<std::int64_t> idx(lead * height * width * c);
    for (std::size_t b = 0; b < lead; ++b) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t xx = 0; xx < width; ++xx) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    idx[((b * height + y) * width + xx) * c + ch] =
                        static_cast<std::int64_t>(((b * h + y) * w + xx) * c + ch);
                }
            }
        }
    }
    Shape out = lead_shape(x);
    out.insert(out.end(), {height, width, c});
    return numcore::gather(x, std::move(idx), out);
}

std::vector<std::int64_t> relative_position_index(std::size_t window) {
    const std::size_t m = window, n = m * m, side = 2 * m - 1;
    std::vector<std::int64_t> idx(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t dy = i / m + m - 1 - j / m;
            const std::size_t dx = i % m + m - 1 - j % m;
            idx[i * n + j] = static_cast<std::int64_t>(dy * side + dx);
        }
    }
    return idx;
}

}  // namespace hdi::ann
