#include "hdi/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hdi/error.hpp"
#include "hdi/numcore/ops.hpp"
#include "hdi/numcore/tape.hpp"

namespace hdi::model {

using namespace numcore;

namespace {

constexpr std::uint64_t kKernelSeedSalt = 0x6b65726e656c73ULL;

std::string stage_tag(std::size_t s) { return "stage" + std::to_string(s + 1); }

}  // namespace

std::string Model::ann_block_name(std::size_t stage, std::size_t block) {
    return "ann." + stage_tag(stage) + ".block" + std::to_string(block + 1);
}

std::string Model::snn_block_name(std::size_t stage, std::size_t block) {
    return "snn." + stage_tag(stage) + ".block" + std::to_string(block + 1);
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.use_snn) schedule_ = interaction::interaction_schedule(cfg_.interaction, cfg_.depths());
    for (const auto& ref : schedule_) {
        if (cfg_.stages[ref.stage].kind != snn::BlockKind::Ssa) {
            throw ConfigError("interacting block " + snn_block_name(ref.stage, ref.block) +
                              " must use pairwise spiking attention");
        }
    }
    std::mt19937_64 rng(cfg_.seed);
    const auto& st = cfg_.stages;

    ann_embed_ = ann::PatchEmbed(store_, "ann.embed", 3, st[0].ann_dim, cfg_.patch, rng);
    for (std::size_t s = 0; s < st.size(); ++s) {
        if (s > 0) ann_merge_.emplace_back(store_, "ann." + stage_tag(s) + ".merge", st[s - 1].ann_dim, rng);
        std::vector<ann::SestBlock> blocks;
        for (std::size_t b = 0; b < st[s].depth; ++b) {
            ann::SestBlockConfig bc;
            bc.dim = st[s].ann_dim;
            bc.heads = st[s].ann_heads;
            bc.window = cfg_.window;
            bc.shifted = b % 2 == 1;
            bc.mlp_ratio = cfg_.mlp_ratio;
            bc.lambda1 = cfg_.lambda1;
            bc.lambda2 = cfg_.lambda2;
            bc.use_rse = cfg_.use_rse;
            blocks.emplace_back(store_, ann_block_name(s, b), bc, rng);
        }
        ann_blocks_.push_back(std::move(blocks));
    }
    ann_norm_ = LayerNorm(store_, "ann.norm", st.back().ann_dim);

    std::size_t fused_in = st.back().ann_dim;
    if (cfg_.use_snn) {
        snn_embed_ = snn::SpikingPatchEmbed(store_, "snn.embed", 2, st[0].snn_dim, cfg_.patch, rng);
        for (std::size_t s = 0; s < st.size(); ++s) {
            if (s > 0) {
                snn_down_.emplace_back(store_, "snn." + stage_tag(s) + ".down", st[s - 1].snn_dim, st[s].snn_dim, 2, rng);
            }
            std::vector<snn::SpikingBlock> blocks;
            for (std::size_t b = 0; b < st[s].depth; ++b) {
                snn::SpikingBlockConfig bc;
                bc.kind = st[s].kind;
                bc.dim = st[s].snn_dim;
                bc.heads = st[s].snn_heads;
                bc.window = cfg_.window;
                bc.shifted = b % 2 == 1;
                bc.mlp_ratio = cfg_.mlp_ratio;
                bc.scale = cfg_.ssa_scale;
                bc.lambda1 = cfg_.lambda1;
                bc.lambda2 = cfg_.lambda2;
                bc.use_rse = cfg_.use_rse;
                blocks.emplace_back(store_, snn_block_name(s, b), bc, rng);
            }
            snn_blocks_.push_back(std::move(blocks));
        }
        fused_in += st.back().snn_dim;
        fusion_ = Linear(store_, "fusion", fused_in, st.back().ann_dim, rng);
    }
    const std::size_t c = st.back().ann_dim;
    head1_ = Linear(store_, "head.fc1", c, c, rng);
    head2_ = Linear(store_, "head.fc2", c, kHeadChannels, rng);

    // Learned kernels draw from their own stream so the rest of the model
    // initializes identically with or without them.
    std::mt19937_64 krng(cfg_.seed ^ kKernelSeedSalt);
    for (const auto& ref : schedule_) {
        const std::string base = "interaction." + stage_tag(ref.stage) + ".block" + std::to_string(ref.block + 1);
        to_snn_.emplace(std::make_pair(ref.stage, ref.block),
                        interaction::AttentionKernel(store_, base + ".to_snn", cfg_.interaction.to_snn,
                                                     st[ref.stage].ann_heads, krng));
        to_ann_.emplace(std::make_pair(ref.stage, ref.block),
                        interaction::AttentionKernel(store_, base + ".to_ann", cfg_.interaction.to_ann,
                                                     st[ref.stage].snn_heads, krng));
    }
}

bool Model::paired(std::size_t stage, std::size_t block) const {
    return std::find(schedule_.begin(), schedule_.end(), interaction::BlockRef{stage, block}) != schedule_.end();
}

std::pair<std::size_t, std::size_t> Model::grid() const { return stage_sizes(cfg_).back(); }

Tensor Model::forward(const Tensor& frame, const Tensor& voxels, ForwardContext& ctx, Diagnostics* diag) {
    if (frame.rank() != 3 || frame.dim(0) != cfg_.height || frame.dim(1) != cfg_.width || frame.dim(2) != 3) {
        throw DimensionError("frame must be [" + std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) +
                             ", 3], got " + shape_str(frame.shape()));
    }
    if (cfg_.use_snn) {
        if (voxels.rank() != 4 || voxels.dim(1) != frame.dim(0) || voxels.dim(2) != frame.dim(1) || voxels.dim(3) != 2) {
            throw DimensionError("voxels " + shape_str(voxels.shape()) + " do not cover the frame " +
                                 shape_str(frame.shape()));
        }
        if (voxels.dim(0) != cfg_.steps) {
            throw DimensionError("voxels carry " + std::to_string(voxels.dim(0)) + " bins, model expects " +
                                 std::to_string(cfg_.steps));
        }
    }
    const std::size_t steps = cfg_.steps;
    Tensor y = ann_embed_(frame);
    Tensor z = cfg_.use_snn ? snn_embed_(voxels, ctx) : Tensor();
    if (diag != nullptr) diag->stage_sizes.clear();

    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
        if (s > 0) {
            y = ann_merge_[s - 1](y);
            if (cfg_.use_snn) z = snn_down_[s - 1](z, ctx);
        }
        for (std::size_t b = 0; b < cfg_.stages[s].depth; ++b) {
            const auto& ab = ann_blocks_[s][b];
            if (!cfg_.use_snn) {
                y = ab.forward(y, ctx);
                continue;
            }
            auto& sb = snn_blocks_[s][b];
            if (!paired(s, b)) {
                y = ab.forward(y, ctx);
                z = sb.forward(z, ctx);
                continue;
            }
            // Both branches stop before their attention product, swap maps,
            // then finish.
            const auto pa = ab.begin(y);
            const auto ps = sb.begin(z, ctx);
            if (pa.layout.count() * steps != ps.attn.scores.dim(0)) {
                throw ConfigError("branches disagree on the window layout at " + snn_block_name(s, b));
            }
            const Tensor wa = ab.attention_map(pa);
            const Tensor& r = sb.raw_scores(ps);
            const auto key = std::make_pair(s, b);
            const Tensor into_snn = interaction::inject(r, to_snn_.at(key)(wa), cfg_.interaction.lambda3);
            const Real tokens = static_cast<Real>(r.dim(2));
            const Tensor snn_map = to_ann_.at(key)(scale(interaction::temporal_align(r, steps), 1.0 / tokens));
            const Tensor into_ann = interaction::inject(pa.attn.logits, snn_map, cfg_.interaction.lambda4);
            if (diag != nullptr) {
                diag->paired_blocks.push_back(snn_block_name(s, b));
                diag->ann_maps.push_back(wa.detach());
                diag->snn_maps.push_back(r.detach());
            }
            y = ab.finish(pa, softmax_rows(into_ann), ctx);
            z = sb.finish(ps, into_snn, ctx);
        }
        if (diag != nullptr) diag->stage_sizes.emplace_back(y.dim(0), y.dim(1));
    }

    Tensor feat = ann_norm_(y);
    if (cfg_.use_snn) feat = fusion_(concat({feat, mean_axis(z, 0)}, 2));
    const Tensor raw = sigmoid(head2_(gelu(head1_(feat))));

    const std::size_t gh = raw.dim(0), gw = raw.dim(1);
    std::vector<Real> mult(gh * gw * kHeadChannels, 1.0), offset(gh * gw * kHeadChannels, 0.0);
    for (std::size_t i = 0; i < gh; ++i) {
        for (std::size_t j = 0; j < gw; ++j) {
            const std::size_t o = (i * gw + j) * kHeadChannels;
            mult[o] = 1.0 / static_cast<Real>(gw);
            mult[o + 1] = 1.0 / static_cast<Real>(gh);
            offset[o] = static_cast<Real>(j) / static_cast<Real>(gw);
            offset[o + 1] = static_cast<Real>(i) / static_cast<Real>(gh);
        }
    }
    const Shape shp{gh, gw, kHeadChannels};
    return add(mul(raw, Tensor(shp, std::move(mult))), Tensor(shp, std::move(offset)));
}

Detections Detections::from_tensor(const Tensor& pred) {
    if (pred.rank() != 3 || pred.dim(2) != kHeadChannels) {
        throw DimensionError("detections need [gh, gw, 5], got " + shape_str(pred.shape()));
    }
    Detections d;
    d.grid_h = pred.dim(0);
    d.grid_w = pred.dim(1);
    const auto v = pred.data();
    for (std::size_t c = 0; c < d.grid_h * d.grid_w; ++c) {
        const Real* p = v.data() + c * kHeadChannels;
        d.cells.push_back({p[0], p[1], p[2], p[3], p[4]});
    }
    return d;
}

std::vector<Detection> Detections::confident(Real threshold) const {
    std::vector<Detection> out;
    for (const auto& c : cells) {
        if (c.confidence >= threshold) out.push_back(c);
    }
    return out;
}

Real iou(const Detection& a, const Detection& b) {
    const Real ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
    const Real bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
    const Real iw = std::max<Real>(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const Real ih = std::max<Real>(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const Real inter = iw * ih;
    const Real uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

Tensor frame_tensor(const events::Frame& frame) {
    return Tensor({static_cast<std::size_t>(frame.height), static_cast<std::size_t>(frame.width), 3}, frame.rgb);
}

Tensor voxel_tensor(const events::VoxelGrid& grid) {
    const auto t = static_cast<std::size_t>(grid.bins), h = static_cast<std::size_t>(grid.height),
               w = static_cast<std::size_t>(grid.width);
    std::vector<Real> out(t * h * w * 2);
    for (std::size_t b = 0; b < t; ++b) {
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    out[((b * h + y) * w + x) * 2 + c] = grid.values[((b * 2 + c) * h + y) * w + x];
                }
            }
        }
    }
    return Tensor({t, h, w, 2}, std::move(out));
}

Tensor encode_targets(const std::vector<Detection>& boxes, std::size_t gh, std::size_t gw) {
    Tensor t({gh, gw, kHeadChannels}, 0.0);
    auto v = t.mutable_data();
    for (const auto& b : boxes) {
        const auto cell = [](Real c, std::size_t n) {
            const auto i = static_cast<long long>(std::floor(c * static_cast<Real>(n)));
            return static_cast<std::size_t>(std::clamp<long long>(i, 0, static_cast<long long>(n) - 1));
        };
        const std::size_t i = cell(b.cy, gh), j = cell(b.cx, gw);
        Real* p = v.data() + (i * gw + j) * kHeadChannels;
        if (p[4] != 0.0) continue;
        p[0] = b.cx;
        p[1] = b.cy;
        p[2] = b.w;
        p[3] = b.h;
        p[4] = 1.0;
    }
    return t;
}

Tensor detection_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape() || pred.rank() != 3 || pred.dim(2) != kHeadChannels) {
        throw DimensionError("loss grids differ: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    }
    const std::size_t cells = pred.dim(0) * pred.dim(1);
    const auto tv = target.data();
    std::vector<Real> box_mask(pred.numel(), 0.0);
    std::vector<Real> conf_target(cells);
    std::size_t positives = 0;
    for (std::size_t c = 0; c < cells; ++c) {
        const Real t = tv[c * kHeadChannels + 4];
        conf_target[c] = t;
        if (t > 0.5) {
            ++positives;
            for (std::size_t k = 0; k < 4; ++k) box_mask[c * kHeadChannels + k] = 1.0;
        }
    }
    const Tensor box = scale(sum(mul(abs(sub(pred, target)), Tensor(pred.shape(), std::move(box_mask)))),
                             1.0 / static_cast<Real>(std::max<std::size_t>(positives, 1)));
    const Tensor p = clamp(reshape(slice(pred, 2, 4, 5), {cells}), kProbClamp, 1.0 - kProbClamp);
    const Tensor t(Shape{cells}, std::move(conf_target));
    const Tensor one_minus_t = add_scalar(scale(t, -1.0), 1.0);
    const Tensor ll = add(mul(t, log(p)), mul(one_minus_t, log(add_scalar(scale(p, -1.0), 1.0))));
    const Tensor bce = scale(mean(ll), -1.0);
    return add(box, bce);
}

Real TrainConfig::lr_at(std::uint64_t step) const {
    Real lr = optimizer.lr;
    for (auto m : milestones) {
        if (step >= m) lr *= gamma;
    }
    return lr;
}

StepResult train_step(Model& model, const std::vector<Sample>& batch, const TrainConfig& cfg, std::mt19937_64& rng,
                      lif::FiringMeter* meter) {
    if (batch.empty()) throw ConfigError("train_step needs a nonempty batch");
    Tape tape;
    Tensor total;
    std::vector<Real> per_sample;
    {
        TapeScope scope(tape);
        ForwardContext ctx{Mode::Train, model.config().dropout, &rng, meter};
        ctx.frozen_norms = cfg.freeze_norms_at && model.params().step() >= *cfg.freeze_norms_at;
        for (const auto& s : batch) {
            const Tensor l = detection_loss(model.forward(s.frame, s.voxels, ctx), s.target);
            per_sample.push_back(l.item());
            total = total.defined() ? add(total, l) : l;
        }
        total = scale(total, 1.0 / static_cast<Real>(batch.size()));
    }
    auto& params = model.params();
    const Real loss = total.item();
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite loss at step " << params.step() << "; per-sample losses:";
        for (Real l : per_sample) os << ' ' << l;
        throw TrainingError(os.str());
    }
    params.zero_grad();
    backward(total, tape);
    for (const auto& name : params.names()) {
        for (Real g : params.get(name).grad()) {
            if (!std::isfinite(g)) {
                throw TrainingError("non-finite gradient in " + name + " at step " + std::to_string(params.step()) +
                                    " (loss " + std::to_string(loss) + ")");
            }
        }
    }
    AdamWConfig opt = cfg.optimizer;
    opt.lr = cfg.lr_at(params.step());
    adamw_step(params, opt);
    return {loss, opt.lr, params.step()};
}

Tensor predict(Model& model, const Tensor& frame, const Tensor& voxels, lif::FiringMeter* meter, Diagnostics* diag) {
    NoGradScope no_grad;
    ForwardContext ctx{Mode::Eval, 0.0, nullptr, meter};
    return model.forward(frame, voxels, ctx, diag);
}

}  // namespace hdi::model
