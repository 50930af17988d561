#include "hdi/snn/spiking.hpp"

#include "hdi/error.hpp"
#include "hdi/numcore/ops.hpp"

namespace hdi::snn {

using namespace numcore;

bool is_binary(const Tensor& x) {
    for (Real v : x.data()) {
        if (v != 0.0 && v != 1.0) return false;
    }
    return true;
}

void require_binary(const Tensor& x, const std::string& what) {
    if (!is_binary(x)) throw DomainError(what + ": expected binary spikes");
}

Tensor spiking_neuron(const Tensor& x, std::size_t steps, const lif::LIFParams& p, ForwardContext& ctx,
                      const std::string& layer) {
    if (steps == 0 || x.rank() == 0 || x.dim(0) % steps != 0) {
        throw DimensionError("spiking_neuron: leading axis of " + shape_str(x.shape()) + " is not a multiple of " +
                             std::to_string(steps) + " steps");
    }
    const Tensor flat = reshape(x, {steps, x.numel() / steps});
    return reshape(lif::lif_sequence(flat, p, ctx.meter, layer), x.shape());
}

lif::LIFParams block_input_params() {
    lif::LIFParams p;
    p.v_th = 0.5;
    return p;
}

SpikeProjection::SpikeProjection(ParamStore& store, const std::string& n, std::size_t in, std::size_t out,
                                 std::mt19937_64& rng, lif::LIFParams l)
    : lin(store, n + ".linear", in, out, rng), bn(store, n + ".bn", out), lif(l), name(n) {}

Tensor SpikeProjection::operator()(const Tensor& x, std::size_t steps, ForwardContext& ctx) {
    return spiking_neuron(bn(lin(x), ctx.norm_mode()), steps, lif, ctx, name + ".sn");
}

SpikeQkv::SpikeQkv(ParamStore& store, const std::string& name, std::size_t dim, std::mt19937_64& rng)
    : q(store, name + ".q", dim, dim, rng), k(store, name + ".k", dim, dim, rng), v(store, name + ".v", dim, dim, rng) {}

QkvSpikes spike_qkv(const Tensor& x, std::size_t steps, SpikeQkv& p, ForwardContext& ctx) {
    require_binary(x, "spike_qkv");
    return {p.q(x, steps, ctx), p.k(x, steps, ctx), p.v(x, steps, ctx)};
}

namespace {

Tensor mul_window_mask(const Tensor& r, const Tensor& keep) {
    if (keep.rank() != 3 || r.rank() != 4) throw DimensionError("keep mask must be [nW,N,N] against [B,H,N,N]");
    const std::size_t nw = keep.dim(0), b = r.dim(0), h = r.dim(1), n = r.dim(2);
    if (nw == 0 || b % nw != 0 || keep.dim(1) != n) {
        throw DimensionError("keep mask " + shape_str(keep.shape()) + " does not fit " + shape_str(r.shape()));
    }
    return reshape(mul_broadcast(reshape(r, {b / nw, nw, h, n, n}), reshape(keep, {nw, 1, n, n})), r.shape());
}

}  // namespace

Tensor ssa_scores(const Tensor& q, const Tensor& k, const Tensor& p, const Tensor& s, Real sc, Real lambda1,
                  Real lambda2, const Tensor& keep) {
    if (q.rank() != 4 || q.shape() != k.shape()) {
        throw DimensionError("ssa: q and k must both be [B,H,N,d], got " + shape_str(q.shape()) + " and " +
                             shape_str(k.shape()));
    }
    if (!(sc > 0.0)) throw ParameterError("ssa: scaling factor must be positive");
    const std::size_t b = q.dim(0), n = q.dim(2);
    Tensor r = scale(bmm(q, k, true), sc);
    if (p.defined()) r = add_broadcast(r, scale(p, lambda1));
    if (s.defined()) {
        if (s.numel() != b * n * n) throw DimensionError("ssa: semantic bias " + shape_str(s.shape()) + " mismatches");
        r = add_broadcast(r, scale(reshape(s, {b, 1, n, n}), lambda2));
    }
    if (keep.defined()) r = mul_window_mask(r, keep);
    return r;
}

Tensor ssa_aggregate(const Tensor& r, const Tensor& v, std::size_t steps, ForwardContext& ctx, const std::string& layer,
                     const lif::LIFParams& p) {
    return spiking_neuron(bmm(r, v), steps, p, ctx, layer);
}

Tensor qka(const Tensor& q, const Tensor& k, const lif::LIFParams& p, ForwardContext& ctx, const std::string& layer,
           Tensor* gate) {
    if (q.rank() != 3 || q.dim(0) != k.dim(0) || q.dim(1) != k.dim(1)) {
        throw DimensionError("qka: q " + shape_str(q.shape()) + " and k " + shape_str(k.shape()) + " disagree");
    }
    const Tensor a = spiking_neuron(sum_axis(q, 2, true), q.dim(0), p, ctx, layer);
    if (gate != nullptr) *gate = a;
    return mul_broadcast(k, a);
}

SsaAttention::SsaAttention(ParamStore& store, const std::string& name, const SsaConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg), name_(name) {
    if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
        throw ConfigError(name + ": channels " + std::to_string(cfg.dim) + " not divisible by " +
                          std::to_string(cfg.heads) + " heads");
    }
    if (!(cfg.scale > 0.0)) throw ConfigError(name + ": scaling factor must be positive");
    qkv_ = SpikeQkv(store, name + ".qkv", cfg.dim, rng);
    proj_ = SpikeProjection(store, name + ".proj", cfg.dim, cfg.dim, rng);
    rpe_ = ann::RelativePositionEmbedding(store, name + ".rpe", cfg.window, cfg.heads, rng);
    if (cfg.use_rse) {
        const std::size_t hid =
            cfg.rse_hidden ? cfg.rse_hidden : ann::RelativeSemanticEmbedding::default_hidden(cfg.dim);
        rse_ = ann::RelativeSemanticEmbedding(store, name + ".rse", cfg.dim, hid, rng);
    }
}

SsaAttention::Prepared SsaAttention::prepare(const Tensor& x, const ann::WindowLayout& layout, const Tensor& keep,
                                             ForwardContext& ctx) {
    if (x.rank() != 4 || x.dim(3) != cfg_.dim) {
        throw DimensionError(name_ + ": expected [T, H, W, " + std::to_string(cfg_.dim) + "], got " + shape_str(x.shape()));
    }
    const std::size_t t = x.dim(0), h = x.dim(1), w = x.dim(2), c = cfg_.dim;
    const Tensor tokens = reshape(x, {t, h * w, c});
    QkvSpikes qkv = spike_qkv(tokens, t, qkv_, ctx);
    const auto windows = [&](const Tensor& m) {
        return ann::window_partition(ann::pad_map(reshape(m, {t, h, w, c}), layout.height, layout.width), layout);
    };
    const Tensor xw = windows(tokens);
    const Tensor q = ann::split_heads(windows(qkv.q), cfg_.heads);
    const Tensor k = ann::split_heads(windows(qkv.k), cfg_.heads);
    Prepared out;
    out.steps = t;
    out.v = ann::split_heads(windows(qkv.v), cfg_.heads);
    const Tensor s = cfg_.use_rse ? ann::rse(xw, rse_) : Tensor();
    out.scores = ssa_scores(q, k, rpe_.bias(layout.window), s, cfg_.scale, cfg_.lambda1, cfg_.lambda2, keep);
    return out;
}

Tensor SsaAttention::attend(const Prepared& prepared, const Tensor& scores, ForwardContext& ctx) {
    if (scores.shape() != prepared.scores.shape()) {
        throw DimensionError(name_ + ": scores " + shape_str(scores.shape()) + " do not match " +
                             shape_str(prepared.scores.shape()));
    }
    const Tensor agg = ssa_aggregate(scores, prepared.v, prepared.steps, ctx, name_ + ".attn.sn");
    return proj_(ann::merge_heads(agg), prepared.steps, ctx);
}

QkaAttention::QkaAttention(ParamStore& store, const std::string& name, std::size_t dim, std::mt19937_64& rng,
                           lif::LIFParams gate)
    : name_(name),
      q_(store, name + ".q", dim, dim, rng),
      k_(store, name + ".k", dim, dim, rng),
      proj_(store, name + ".proj", dim, dim, rng),
      gate_(gate) {}

Tensor QkaAttention::forward(const Tensor& x, ForwardContext& ctx) {
    require_binary(x, name_);
    const std::size_t t = x.dim(0);
    const Tensor gated = qka(q_(x, t, ctx), k_(x, t, ctx), gate_, ctx, name_ + ".gate.sn");
    return proj_(gated, t, ctx);
}

SpikingBlock::SpikingBlock(ParamStore& store, const std::string& name, const SpikingBlockConfig& cfg,
                           std::mt19937_64& rng)
    : cfg_(cfg), name_(name) {
    if (cfg.dim == 0) throw ConfigError(name + ": zero channels");
    if (cfg.kind == BlockKind::Ssa) {
        ssa_ = SsaAttention(store, name + ".ssa",
                            SsaConfig{cfg.dim, cfg.heads, cfg.window, cfg.scale, cfg.lambda1, cfg.lambda2,
                                      cfg.rse_hidden, cfg.use_rse},
                            rng);
    } else {
        qka_ = QkaAttention(store, name + ".qka", cfg.dim, rng);
    }
    fc1_ = SpikeProjection(store, name + ".fc1", cfg.dim, cfg.dim * cfg.mlp_ratio, rng);
    fc2_ = SpikeProjection(store, name + ".fc2", cfg.dim * cfg.mlp_ratio, cfg.dim, rng);
}

ann::WindowLayout SpikingBlock::layout_for(std::size_t height, std::size_t width) const {
    return ann::WindowLayout::for_map(height, width, cfg_.window, cfg_.shifted);
}

SpikingBlock::Pending SpikingBlock::begin(const Tensor& z, ForwardContext& ctx) {
    if (z.rank() != 4 || z.dim(3) != cfg_.dim) {
        throw DimensionError(name_ + ": expected [T, H, W, " + std::to_string(cfg_.dim) + "], got " + shape_str(z.shape()));
    }
    Pending p;
    p.input = z;
    p.spikes = spiking_neuron(z, z.dim(0), block_input_params(), ctx, name_ + ".input.sn");
    if (cfg_.kind == BlockKind::Ssa) {
        p.layout = layout_for(z.dim(1), z.dim(2));
        if (p.layout.shift > 0) p.keep = p.layout.keep_mask();
        p.attn = ssa_.prepare(p.spikes, p.layout, p.keep, ctx);
    }
    return p;
}

const Tensor& SpikingBlock::raw_scores(const Pending& pending) const {
    if (cfg_.kind != BlockKind::Ssa) throw StateError(name_ + ": QKA blocks have no pairwise score map");
    return pending.attn.scores;
}

Tensor SpikingBlock::mlp(const Tensor& x, std::size_t steps, ForwardContext& ctx) {
    const Tensor s = spiking_neuron(x, steps, block_input_params(), ctx, name_ + ".mlp_input.sn");
    return fc2_(fc1_(s, steps, ctx), steps, ctx);
}

Tensor SpikingBlock::finish(const Pending& pending, const Tensor& scores, ForwardContext& ctx) {
    const Tensor& z = pending.input;
    const std::size_t t = z.dim(0), h = z.dim(1), w = z.dim(2), c = z.dim(3);
    Tensor a;
    if (cfg_.kind == BlockKind::Ssa) {
        const Tensor out = ssa_.attend(pending.attn, scores, ctx);
        a = ann::crop_map(ann::window_reverse(out, pending.layout, {t}), h, w);
    } else {
        a = reshape(qka_.forward(reshape(pending.spikes, {t, h * w, c}), ctx), z.shape());
    }
    const Tensor zhat = add(a, z);
    return add(mlp(zhat, t, ctx), zhat);
}

Tensor SpikingBlock::forward(const Tensor& z, ForwardContext& ctx) {
    const Pending p = begin(z, ctx);
    return finish(p, cfg_.kind == BlockKind::Ssa ? p.attn.scores : Tensor(), ctx);
}

SpikingDownsample::SpikingDownsample(ParamStore& store, const std::string& n, std::size_t in, std::size_t out,
                                     std::size_t k, std::mt19937_64& rng)
    : main(store, n + ".conv", in, out, 3, 1, 1, rng),
      main_bn(store, n + ".conv_bn", out),
      shortcut(store, n + ".shortcut", in, out, k, k, 0, rng),
      shortcut_bn(store, n + ".shortcut_bn", out),
      factor(k),
      name(n) {}

Tensor SpikingDownsample::operator()(const Tensor& x, ForwardContext& ctx) {
    if (x.rank() != 4) throw DimensionError(name + ": expected [T, H, W, C], got " + shape_str(x.shape()));
    if (x.dim(1) % factor != 0 || x.dim(2) % factor != 0) {
        throw DimensionError(name + ": spatial size " + std::to_string(x.dim(1)) + "x" + std::to_string(x.dim(2)) +
                             " is not divisible by " + std::to_string(factor));
    }
    const Tensor m = maxpool2d(main_bn(main(x), ctx.norm_mode()), factor);
    const Tensor s = shortcut_bn(shortcut(x), ctx.norm_mode());
    return spiking_neuron(add(m, s), x.dim(0), lif::LIFParams{}, ctx, name + ".sn");
}

SpikeConversion::SpikeConversion(ParamStore& store, const std::string& n, std::size_t in, std::size_t out,
                                 std::mt19937_64& rng)
    : conv(store, n + ".conv", in, out, 3, 1, 1, rng), bn(store, n + ".bn", out), name(n) {}

Tensor SpikeConversion::operator()(const Tensor& voxels, ForwardContext& ctx) {
    if (voxels.rank() != 4) throw DimensionError(name + ": expected [T, H, W, C], got " + shape_str(voxels.shape()));
    return spiking_neuron(bn(conv(voxels), ctx.norm_mode()), voxels.dim(0), lif::LIFParams{}, ctx, name + ".sn");
}

SpikingPatchEmbed::SpikingPatchEmbed(ParamStore& store, const std::string& name, std::size_t in, std::size_t dim,
                                     std::size_t patch, std::mt19937_64& rng)
    : convert(store, name + ".convert", in, dim, rng), down(store, name + ".down", dim, dim, patch, rng) {}

Tensor SpikingPatchEmbed::operator()(const Tensor& voxels, ForwardContext& ctx) { return down(convert(voxels, ctx), ctx); }

}  // namespace hdi::snn
