#include "hdi/ann/sest.hpp"

#include "hdi/error.hpp"
#include "hdi/numcore/ops.hpp"

namespace hdi::ann {

using namespace numcore;

SestBlock::SestBlock(ParamStore& store, const std::string& name, const SestBlockConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
    if (cfg.dim == 0) throw ConfigError(name + ": zero channels");
    norm1_ = LayerNorm(store, name + ".norm1", cfg.dim);
    attn_ = Semsa(store, name + ".attn",
                  SemsaConfig{cfg.dim, cfg.heads, cfg.window, cfg.lambda1, cfg.lambda2, cfg.rse_hidden, cfg.use_rse},
                  rng);
    norm2_ = LayerNorm(store, name + ".norm2", cfg.dim);
    fc1_ = Linear(store, name + ".fc1", cfg.dim, cfg.dim * cfg.mlp_ratio, rng);
    fc2_ = Linear(store, name + ".fc2", cfg.dim * cfg.mlp_ratio, cfg.dim, rng);
}

WindowLayout SestBlock::layout_for(std::size_t height, std::size_t width) const {
    return WindowLayout::for_map(height, width, cfg_.window, cfg_.shifted);
}

SestBlock::Pending SestBlock::begin(const Tensor& y) const {
    if (y.rank() != 3 || y.dim(2) != cfg_.dim) {
        throw DimensionError("sest block expects [H, W, " + std::to_string(cfg_.dim) + "], got " + shape_str(y.shape()));
    }
    Pending p;
    p.input = y;
    p.layout = layout_for(y.dim(0), y.dim(1));
    if (p.layout.shift > 0) p.mask = p.layout.mask();
    const Tensor x = pad_map(norm1_(y), p.layout.height, p.layout.width);
    p.attn = attn_.prepare(window_partition(x, p.layout), p.layout.window, p.mask);
    return p;
}

Tensor SestBlock::attention_map(const Pending& pending) const { return softmax_rows(pending.attn.logits); }

Tensor SestBlock::finish(const Pending& pending, const Tensor& weights, ForwardContext& ctx) const {
    const Tensor& y = pending.input;
    Tensor a = crop_map(window_reverse(attn_.attend(pending.attn, weights), pending.layout), y.dim(0), y.dim(1));
    const bool drop = ctx.mode == Mode::Train && ctx.dropout > 0.0 && ctx.rng != nullptr;
    if (drop) a = dropout(a, ctx.dropout, *ctx.rng);
    const Tensor z = add(y, a);
    Tensor m = fc2_(gelu(fc1_(norm2_(z))));
    if (drop) m = dropout(m, ctx.dropout, *ctx.rng);
    return add(z, m);
}

Tensor SestBlock::forward(const Tensor& y, ForwardContext& ctx) const {
    const Pending p = begin(y);
    return finish(p, attention_map(p), ctx);
}

Tensor sest_block_pair(const Tensor& y, const SestBlock& regular, const SestBlock& shifted, ForwardContext& ctx) {
    return shifted.forward(regular.forward(y, ctx), ctx);
}

PatchEmbed::PatchEmbed(ParamStore& store, const std::string& name, std::size_t in_channels, std::size_t dim,
                       std::size_t p, std::mt19937_64& rng)
    : proj(store, name + ".proj", in_channels, dim, p, p, 0, rng), norm(store, name + ".norm", dim), patch(p) {}

Tensor PatchEmbed::operator()(const Tensor& image) const {
    if (image.rank() != 3) throw DimensionError("patch embed expects [H, W, C], got " + shape_str(image.shape()));
    if (image.dim(0) % patch != 0 || image.dim(1) % patch != 0) {
        throw DimensionError("image " + shape_str(image.shape()) + " is not divisible by patch " + std::to_string(patch));
    }
    const Tensor x = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
    const Tensor y = proj(x);
    return norm(reshape(y, {y.dim(1), y.dim(2), y.dim(3)}));
}

std::vector<std::int64_t> merge_index(const Shape& shape, Shape& out_shape) {
    if (shape.size() < 3) throw DimensionError("merge expects [..., H, W, C]");
    const std::size_t r = shape.size(), h = shape[r - 3], w = shape[r - 2], c = shape[r - 1];
    const std::size_t lead = numel_of(shape) / (h * w * c);
    const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    std::vector<std::int64_t> idx(lead * oh * ow * 4 * c);
    static constexpr std::size_t dy[4] = {0, 1, 0, 1};
    static constexpr std::size_t dx[4] = {0, 0, 1, 1};
    for (std::size_t b = 0; b < lead; ++b) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                for (std::size_t q = 0; q < 4; ++q) {
                    const std::size_t sy = 2 * y + dy[q], sx = 2 * x + dx[q];
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t o = (((b * oh + y) * ow + x) * 4 + q) * c + ch;
                        idx[o] = sy < h && sx < w ? static_cast<std::int64_t>(((b * h + sy) * w + sx) * c + ch) : -1;
                    }
                }
            }
        }
    }
    out_shape.assign(shape.begin(), shape.end() - 3);
    out_shape.insert(out_shape.end(), {oh, ow, 4 * c});
    return idx;
}

PatchMerging::PatchMerging(ParamStore& store, const std::string& name, std::size_t dim, std::mt19937_64& rng)
    : norm(store, name + ".norm", 4 * dim), reduction(store, name + ".reduction", 4 * dim, 2 * dim, rng, false) {}

Tensor PatchMerging::operator()(const Tensor& x) const {
    Shape out;
    auto idx = merge_index(x.shape(), out);
    return reduction(norm(gather(x, std::move(idx), out)));
}

}  // namespace hdi::ann
