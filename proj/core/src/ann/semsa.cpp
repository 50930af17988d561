#include "hdi/ann/semsa.hpp"

#include <cmath>

#include "hdi/error.hpp"
#include "hdi/numcore/ops.hpp"

namespace hdi::ann {

using namespace numcore;

RelativePositionEmbedding::RelativePositionEmbedding(ParamStore& store, const std::string& name, std::size_t m,
                                                     std::size_t h, std::mt19937_64& rng)
    : window(m), heads(h) {
    const std::size_t side = 2 * m - 1;
    table = store.add(name + ".table", trunc_normal({side * side, h}, kInitStd, rng));
}

Tensor RelativePositionEmbedding::bias(std::size_t m) const {
    if (m == 0) m = window;
    if (m > window) throw DimensionError("effective window exceeds the configured window");
    const std::size_t big = window, side = 2 * big - 1, n = m * m;
    std::vector<std::int64_t> idx(heads * n * n);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t dy = i / m + big - 1 - j / m;
                const std::size_t dx = i % m + big - 1 - j % m;
                idx[(h * n + i) * n + j] = static_cast<std::int64_t>((dy * side + dx) * heads + h);
            }
        }
    }
    return gather(table, std::move(idx), {heads, n, n});
}

RelativeSemanticEmbedding::RelativeSemanticEmbedding(ParamStore& store, const std::string& name,
                                                     std::size_t channels, std::size_t hidden_width,
                                                     std::mt19937_64& rng)
    : hidden(store, name + ".hidden", channels, hidden_width, rng), output(store, name + ".output", hidden_width, 1, rng) {}

namespace {

// Returns x as [B, N, C] plus whether a batch axis was present.
Tensor as_batched(const Tensor& x, bool& batched) {
    if (x.rank() == 2) {
        batched = false;
        return reshape(x, {1, x.dim(0), x.dim(1)});
    }
    if (x.rank() == 3) {
        batched = true;
        return x;
    }
    throw DimensionError("expected [N, C] or [B, N, C], got " + shape_str(x.shape()));
}

}  // namespace

Tensor relative_semantic_distance(const Tensor& x) {
    bool batched = false;
    const Tensor xb = as_batched(x, batched);
    const std::size_t b = xb.dim(0), n = xb.dim(1), c = xb.dim(2);
    std::vector<std::int64_t> ii(b * n * n * c), jj(b * n * n * c);
    for (std::size_t bb = 0; bb < b; ++bb) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t o = ((bb * n + i) * n + j) * c + ch;
                    ii[o] = static_cast<std::int64_t>((bb * n + i) * c + ch);
                    jj[o] = static_cast<std::int64_t>((bb * n + j) * c + ch);
                }
            }
        }
    }
    Tensor a = sub(gather(xb, std::move(ii), {b, n, n, c}), gather(xb, std::move(jj), {b, n, n, c}));
    return batched ? a : reshape(a, {n, n, c});
}

Tensor rse(const Tensor& x, const RelativeSemanticEmbedding& mlp) {
    bool batched = false;
    const Tensor xb = as_batched(x, batched);
    const std::size_t b = xb.dim(0), n = xb.dim(1), c = xb.dim(2);
    if (mlp.hidden.in() != c) throw DimensionError("rse: embedding expects " + std::to_string(mlp.hidden.in()) + " channels");
    const std::size_t pairs = n * (n + 1) / 2;
    std::vector<std::int64_t> ii(b * pairs * c), jj(b * pairs * c);
    std::vector<std::size_t> pair_of(n * n);
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j, ++p) {
            pair_of[i * n + j] = p;
            pair_of[j * n + i] = p;
        }
    }
    for (std::size_t bb = 0; bb < b; ++bb) {
        p = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j, ++p) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t o = (bb * pairs + p) * c + ch;
                    ii[o] = static_cast<std::int64_t>((bb * n + i) * c + ch);
                    jj[o] = static_cast<std::int64_t>((bb * n + j) * c + ch);
                }
            }
        }
    }
    const Tensor a = sub(gather(xb, std::move(ii), {b, pairs, c}), gather(xb, std::move(jj), {b, pairs, c}));
    const Tensor upper = mlp.output(mlp.hidden(a));  // [B, pairs, 1]
    std::vector<std::int64_t> mirror(b * n * n);
    for (std::size_t bb = 0; bb < b; ++bb) {
        for (std::size_t k = 0; k < n * n; ++k) mirror[bb * n * n + k] = static_cast<std::int64_t>(bb * pairs + pair_of[k]);
    }
    Tensor s = gather(upper, std::move(mirror), {b, n, n});
    return batched ? s : reshape(s, {n, n});
}

Tensor add_window_mask(const Tensor& logits, const Tensor& mask) {
    if (mask.rank() != 3 || logits.rank() != 4) throw DimensionError("add_window_mask expects logits [B,H,N,N] and mask [nW,N,N]");
    const std::size_t nw = mask.dim(0), b = logits.dim(0), h = logits.dim(1), n = logits.dim(2);
    if (nw == 0 || b % nw != 0 || mask.dim(1) != n || mask.dim(2) != n) {
        throw DimensionError("mask " + shape_str(mask.shape()) + " does not fit logits " + shape_str(logits.shape()));
    }
    const Tensor grouped = reshape(logits, {b / nw, nw, h, n, n});
    return reshape(add_broadcast(grouped, reshape(mask, {nw, 1, n, n})), logits.shape());
}

Tensor semsa_logits(const Tensor& q, const Tensor& k, const Tensor& p, const Tensor& s, Real lambda1, Real lambda2,
                    const Tensor& mask) {
    if (q.rank() != 4 || q.shape() != k.shape()) {
        throw DimensionError("semsa: q and k must both be [B,H,N,d], got " + shape_str(q.shape()) + " and " +
                             shape_str(k.shape()));
    }
    const std::size_t b = q.dim(0), n = q.dim(2), d = q.dim(3);
    Tensor logits = scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<Real>(d)));
    if (p.defined()) logits = add_broadcast(logits, scale(p, lambda1));
    if (s.defined()) {
        if (s.numel() != b * n * n) throw DimensionError("semsa: semantic bias " + shape_str(s.shape()) + " mismatches");
        logits = add_broadcast(logits, scale(reshape(s, {b, 1, n, n}), lambda2));
    }
    if (mask.defined()) logits = add_window_mask(logits, mask);
    return logits;
}

Tensor semsa_weights(const Tensor& q, const Tensor& k, const Tensor& p, const Tensor& s, Real lambda1, Real lambda2,
                     const Tensor& mask) {
    return softmax_rows(semsa_logits(q, k, p, s, lambda1, lambda2, mask));
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
    if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
        throw DimensionError("split_heads: " + shape_str(x.shape()) + " with " + std::to_string(heads) + " heads");
    }
    const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2) / heads;
    return permute(reshape(x, {b, n, heads, d}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("merge_heads expects [B,H,N,d]");
    const std::size_t b = x.dim(0), h = x.dim(1), n = x.dim(2), d = x.dim(3);
    return reshape(permute(x, {0, 2, 1, 3}), {b, n, h * d});
}

Semsa::Semsa(ParamStore& store, const std::string& name, const SemsaConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
        throw ConfigError(name + ": channels " + std::to_string(cfg.dim) + " not divisible by " +
                          std::to_string(cfg.heads) + " heads");
    }
    qkv_ = Linear(store, name + ".qkv", cfg.dim, 3 * cfg.dim, rng);
    proj_ = Linear(store, name + ".proj", cfg.dim, cfg.dim, rng);
    rpe_ = RelativePositionEmbedding(store, name + ".rpe", cfg.window, cfg.heads, rng);
    if (cfg.use_rse) {
        const std::size_t hid = cfg.rse_hidden ? cfg.rse_hidden : RelativeSemanticEmbedding::default_hidden(cfg.dim);
        rse_ = RelativeSemanticEmbedding(store, name + ".rse", cfg.dim, hid, rng);
    }
}

Semsa::Prepared Semsa::prepare(const Tensor& xw, std::size_t window, const Tensor& mask) const {
    if (xw.rank() != 3 || xw.dim(2) != cfg_.dim || xw.dim(1) != window * window) {
        throw DimensionError("semsa: expected [B, " + std::to_string(window * window) + ", " + std::to_string(cfg_.dim) +
                             "], got " + shape_str(xw.shape()));
    }
    const std::size_t b = xw.dim(0), n = xw.dim(1), h = cfg_.heads, d = cfg_.dim / h;
    const Tensor qkv = permute(reshape(qkv_(xw), {b, n, 3, h, d}), {2, 0, 3, 1, 4});
    const Tensor q = reshape(slice(qkv, 0, 0, 1), {b, h, n, d});
    const Tensor k = reshape(slice(qkv, 0, 1, 2), {b, h, n, d});
    Prepared out;
    out.v = reshape(slice(qkv, 0, 2, 3), {b, h, n, d});
    const Tensor s = cfg_.use_rse ? rse(xw, rse_) : Tensor();
    out.logits = semsa_logits(q, k, rpe_.bias(window), s, cfg_.lambda1, cfg_.lambda2, mask);
    return out;
}

Tensor Semsa::attend(const Prepared& prepared, const Tensor& weights) const {
    if (weights.shape() != prepared.logits.shape()) {
        throw DimensionError("semsa: weights " + shape_str(weights.shape()) + " do not match " +
                             shape_str(prepared.logits.shape()));
    }
    return proj_(merge_heads(bmm(weights, prepared.v)));
}

Tensor Semsa::forward(const Tensor& xw, std::size_t window, const Tensor& mask) const {
    const Prepared p = prepare(xw, window, mask);
    return attend(p, softmax_rows(p.logits));
}

}  // namespace hdi::ann
