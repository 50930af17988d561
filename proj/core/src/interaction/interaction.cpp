#include "hdi/interaction/interaction.hpp"

#include "hdi/error.hpp"
#include "hdi/numcore/ops.hpp"

namespace hdi::interaction {

using namespace numcore;

KernelKind parse_kernel(const std::string& s) {
    if (s == "mean") return KernelKind::Mean;
    if (s == "conv") return KernelKind::Conv;
    if (s == "mlp") return KernelKind::Mlp;
    throw ConfigError("unknown attention kernel '" + s + "' (expected mean, conv or mlp)");
}

std::string kernel_name(KernelKind k) {
    switch (k) {
        case KernelKind::Mean: return "mean";
        case KernelKind::Conv: return "conv";
        case KernelKind::Mlp: return "mlp";
    }
    return "mean";
}

void InteractionConfig::validate() const {
    if (start_stage == 0) throw ConfigError("interaction start stage is 1-based");
}

std::vector<BlockRef> interaction_schedule(const InteractionConfig& cfg, const std::vector<std::size_t>& depths) {
    cfg.validate();
    std::vector<BlockRef> out;
    if (!cfg.enabled || cfg.layers == 0) return out;
    for (std::size_t s = cfg.start_stage - 1; s < depths.size() && out.size() < cfg.layers; ++s) {
        for (std::size_t b = 0; b < depths[s] && out.size() < cfg.layers; ++b) out.push_back({s, b});
    }
    if (out.size() < cfg.layers) {
        throw ConfigError("interaction needs " + std::to_string(cfg.layers) + " blocks from stage " +
                          std::to_string(cfg.start_stage) + " onward, only " + std::to_string(out.size()) + " exist");
    }
    return out;
}

Tensor attention_kernel_mean(const Tensor& a) {
    if (a.rank() < 3) throw DimensionError("attention map needs [..., H, N, N], got " + shape_str(a.shape()));
    return mean_axis(a, a.rank() - 3);
}

Tensor temporal_align(const Tensor& a, std::size_t steps) {
    if (steps == 0 || a.rank() == 0 || a.dim(0) % steps != 0) {
        throw DimensionError("temporal_align: leading axis of " + shape_str(a.shape()) + " is not a multiple of " +
                             std::to_string(steps));
    }
    Shape grouped = a.shape();
    grouped[0] /= steps;
    grouped.insert(grouped.begin(), steps);
    return mean_axis(reshape(a, grouped), 0);
}

Tensor broadcast_time(const Tensor& a, std::size_t steps) {
    Shape target = a.shape();
    target.insert(target.begin(), steps);
    Shape lifted = a.shape();
    lifted.insert(lifted.begin(), 1);
    Shape out = a.shape();
    out[0] *= steps;
    return reshape(broadcast_to(reshape(a, lifted), target), out);
}

Tensor inject(const Tensor& logits, const Tensor& mapped, Real lambda) {
    if (logits.rank() != 4 || mapped.rank() != 3) {
        throw DimensionError("inject expects logits [B,H,N,N] and a map [nW,N,N], got " + shape_str(logits.shape()) +
                             " and " + shape_str(mapped.shape()));
    }
    const std::size_t b = logits.dim(0), h = logits.dim(1), n = logits.dim(2), nw = mapped.dim(0);
    if (mapped.dim(1) != n || mapped.dim(2) != n) {
        throw ConfigError("interacting branches disagree on window tokens: " + shape_str(logits.shape()) + " vs " +
                          shape_str(mapped.shape()));
    }
    if (nw == 0 || b % nw != 0) {
        throw ConfigError("interacting branches disagree on window count: " + std::to_string(b) + " vs " +
                          std::to_string(nw));
    }
    const Tensor grouped = reshape(logits, {b / nw, nw, h, n, n});
    return reshape(add_broadcast(grouped, scale(reshape(mapped, {nw, 1, n, n}), lambda)), logits.shape());
}

AttentionKernel::AttentionKernel(ParamStore& store, const std::string& name, KernelKind kind, std::size_t heads,
                                 std::mt19937_64& rng)
    : kind_(kind), heads_(heads) {
    if (kind == KernelKind::Conv) {
        first_.weight = store.add(name + ".mix.weight", Tensor({heads, 1}, 1.0 / static_cast<Real>(heads)));
        first_.bias = store.add(name + ".mix.bias", Tensor({1}, 0.0));
    } else if (kind == KernelKind::Mlp) {
        first_ = Linear(store, name + ".fc1", heads, heads, rng);
        second_ = Linear(store, name + ".fc2", heads, 1, rng);
    }
}

Tensor AttentionKernel::operator()(const Tensor& a) const {
    if (kind_ == KernelKind::Mean) return attention_kernel_mean(a);
    const std::size_t r = a.rank();
    if (r < 3 || a.dim(r - 3) != heads_) {
        throw DimensionError("attention kernel expects " + std::to_string(heads_) + " heads, got " + shape_str(a.shape()));
    }
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i + 3 < r; ++i) perm.push_back(i);
    perm.insert(perm.end(), {r - 2, r - 1, r - 3});
    const Tensor heads_last = permute(a, perm);
    Tensor out = kind_ == KernelKind::Conv ? first_(heads_last) : second_(gelu(first_(heads_last)));
    Shape s(a.shape().begin(), a.shape().end());
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(r - 3));
    return reshape(out, s);
}

}  // namespace hdi::interaction
