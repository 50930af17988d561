#include "hdi/energy/energy.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "hdi/ann/window.hpp"
#include "hdi/error.hpp"

namespace hdi::energy {

namespace {

struct Geometry {
    Real tokens;         // h * w
    Real padded_tokens;  // after padding to whole windows
    Real windows;
    Real n;  // tokens per window
};

Geometry geometry(std::size_t h, std::size_t w, std::size_t window, bool shifted) {
    const auto l = ann::WindowLayout::for_map(h, w, window, shifted);
    return {static_cast<Real>(h * w), static_cast<Real>(l.height * l.width), static_cast<Real>(l.count()),
            static_cast<Real>(l.tokens())};
}

Real rse_pairs(const Geometry& g) { return g.windows * g.n * (g.n + 1) / 2; }

BlockOps ann_block(const std::string& name, std::size_t h, std::size_t w, std::size_t c, std::size_t heads,
                   const model::ModelConfig& cfg, bool shifted) {
    const Geometry g = geometry(h, w, cfg.window, shifted);
    const Real C = static_cast<Real>(c), d = C / static_cast<Real>(heads), H = static_cast<Real>(heads);
    const Real r = static_cast<Real>(cfg.mlp_ratio) * C;
    BlockOps b;
    b.name = name;
    b.attn_mac = 2 * g.windows * H * g.n * g.n * d;  // QK^T and weights x V
    b.op_mac += b.attn_mac;
    b.op_mac += kNonlinearMacPerElement * g.windows * H * g.n * g.n;  // softmax
    b.op_mac += g.padded_tokens * C * 3 * C;                          // qkv
    b.op_mac += g.padded_tokens * C * C;                              // projection
    if (cfg.use_rse) {
        const Real hid = static_cast<Real>(ann::RelativeSemanticEmbedding::default_hidden(c));
        b.op_ac += rse_pairs(g) * C;  // pairwise differences
        b.op_mac += rse_pairs(g) * (C * hid + hid);
    }
    b.op_mac += 2 * kNonlinearMacPerElement * g.tokens * C;  // two layer norms
    b.op_mac += 2 * g.tokens * C * r;                       // MLP
    b.op_mac += kNonlinearMacPerElement * g.tokens * r;     // GELU
    b.op_ac += 2 * g.tokens * C;                            // residual adds
    return b;
}

BlockOps snn_block(const std::string& name, std::size_t h, std::size_t w, const model::StageSpec& st,
                   const model::ModelConfig& cfg, bool shifted) {
    const Real C = static_cast<Real>(st.snn_dim), hw = static_cast<Real>(h * w);
    const Real r = static_cast<Real>(cfg.mlp_ratio) * C;
    BlockOps b;
    b.name = name;
    b.spiking = true;
    b.steps = cfg.steps;
    if (st.kind == snn::BlockKind::Ssa) {
        const Geometry g = geometry(h, w, cfg.window, shifted);
        const Real H = static_cast<Real>(st.snn_heads), d = C / H;
        b.op_ac += hw * C * 3 * C;  // spike Q, K, V
        b.attn_ac = 2 * g.windows * H * g.n * g.n * d;
        b.op_ac += b.attn_ac;
        b.op_ac += hw * C * C;  // projection of attention spikes
        if (cfg.use_rse) {
            const Real hid = static_cast<Real>(ann::RelativeSemanticEmbedding::default_hidden(st.snn_dim));
            b.op_ac += rse_pairs(g) * C * (1 + hid);  // differences of spikes and the first layer
            b.op_mac += rse_pairs(g) * hid;          // real-valued hidden layer
        }
    } else {
        b.op_ac += 2 * hw * C * C;  // spike Q, K
        b.attn_ac = 2 * hw * C;     // channel sums and gating
        b.op_ac += b.attn_ac;
        b.op_ac += hw * C * C;  // projection
    }
    b.op_ac += 2 * hw * C * r;  // MLP
    b.op_ac += 2 * hw * C;      // residual adds
    return b;
}

}  // namespace

void EnergyConstants::validate() const {
    if (!(e_ac > 0.0) || !(e_mac > 0.0)) throw ParameterError("energy constants must be positive");
}

const BlockOps& OpCount::find(const std::string& name) const {
    for (const auto& b : blocks) {
        if (b.name == name) return b;
    }
    throw ReportError("no operation count for block " + name);
}

Real OpCount::total_ac() const {
    Real t = 0;
    for (const auto& b : blocks) t += static_cast<Real>(b.steps) * b.op_ac;
    return t;
}

Real OpCount::total_mac() const {
    Real t = 0;
    for (const auto& b : blocks) t += static_cast<Real>(b.steps) * b.op_mac;
    return t;
}

OpCount count_ops(const model::ModelConfig& cfg) {
    cfg.validate();
    OpCount out;
    const auto sizes = model::stage_sizes(cfg);
    const auto& st = cfg.stages;
    const Real H = static_cast<Real>(cfg.height), W = static_cast<Real>(cfg.width);
    const Real P = static_cast<Real>(cfg.patch);

    {
        BlockOps e;
        e.name = "ann.embed";
        const Real t = static_cast<Real>(sizes[0].first * sizes[0].second), C = static_cast<Real>(st[0].ann_dim);
        e.op_mac = t * P * P * 3 * C + kNonlinearMacPerElement * t * C;
        out.blocks.push_back(e);
    }
    for (std::size_t s = 0; s < st.size(); ++s) {
        if (s > 0) {
            BlockOps m;
            m.name = "ann.stage" + std::to_string(s + 1) + ".merge";
            const Real t = static_cast<Real>(sizes[s].first * sizes[s].second), C = static_cast<Real>(st[s - 1].ann_dim);
            m.op_mac = kNonlinearMacPerElement * t * 4 * C + t * 4 * C * 2 * C;
            out.blocks.push_back(m);
        }
        for (std::size_t b = 0; b < st[s].depth; ++b) {
            out.blocks.push_back(ann_block(model::Model::ann_block_name(s, b), sizes[s].first, sizes[s].second,
                                           st[s].ann_dim, st[s].ann_heads, cfg, b % 2 == 1));
        }
    }

    const std::size_t gh = sizes.back().first, gw = sizes.back().second;
    const Real grid = static_cast<Real>(gh * gw), Cl = static_cast<Real>(st.back().ann_dim);
    if (cfg.use_snn) {
        const Real C0 = static_cast<Real>(st[0].snn_dim);
        BlockOps conv;
        conv.name = "snn.embed.convert";
        conv.steps = cfg.steps;
        conv.op_mac = H * W * 9 * 2 * C0;  // real-valued voxels
        out.blocks.push_back(conv);
        BlockOps down;
        down.name = "snn.embed.down";
        down.spiking = true;
        down.steps = cfg.steps;
        down.op_ac = H * W * 9 * C0 * C0 + (H / P) * (W / P) * P * P * C0 * C0;
        out.blocks.push_back(down);
        for (std::size_t s = 0; s < st.size(); ++s) {
            if (s > 0) {
                BlockOps d;
                d.name = "snn.stage" + std::to_string(s + 1) + ".down";
                d.spiking = true;
                d.steps = cfg.steps;
                const Real hin = static_cast<Real>(sizes[s - 1].first * sizes[s - 1].second);
                const Real hout = static_cast<Real>(sizes[s].first * sizes[s].second);
                const Real ci = static_cast<Real>(st[s - 1].snn_dim), co = static_cast<Real>(st[s].snn_dim);
                d.op_ac = hin * 9 * ci * co + hout * 4 * ci * co;
                out.blocks.push_back(d);
            }
            for (std::size_t b = 0; b < st[s].depth; ++b) {
                out.blocks.push_back(snn_block(model::Model::snn_block_name(s, b), sizes[s].first, sizes[s].second,
                                               st[s], cfg, b % 2 == 1));
            }
        }
        BlockOps f;
        f.name = "fusion";
        const Real S = static_cast<Real>(st.back().snn_dim);
        f.op_ac = static_cast<Real>(cfg.steps) * grid * S;  // time average of spikes
        f.op_mac = grid * (Cl + S) * Cl;
        out.blocks.push_back(f);
    }
    BlockOps head;
    head.name = "head";
    head.op_mac = kNonlinearMacPerElement * grid * Cl * 2 + grid * Cl * Cl + grid * Cl * model::kHeadChannels;
    out.blocks.push_back(head);
    return out;
}

EnergyReport estimate(const OpCount& counts, const std::map<std::string, Real>& rates, const EnergyConstants& consts) {
    consts.validate();
    EnergyReport rep;
    rep.constants = consts;
    for (const auto& b : counts.blocks) {
        BlockEnergy e;
        e.name = b.name;
        e.spiking = b.spiking;
        e.steps = b.steps;
        e.op_ac = b.op_ac;
        e.op_mac = b.op_mac;
        if (b.spiking) {
            auto it = rates.find(b.name);
            if (it == rates.end()) {
                if (b.op_ac > 0) throw ReportError("no firing rate recorded for block " + b.name);
                e.rate = 0;
            } else {
                e.rate = it->second;
            }
            if (e.rate < 0.0 || e.rate > 1.0) throw ReportError("firing rate of " + b.name + " lies outside [0, 1]");
        }
        const Real t = static_cast<Real>(b.steps);
        e.energy_pj = t * (e.rate * consts.e_ac * b.op_ac + consts.e_mac * b.op_mac);
        rep.total_pj += e.energy_pj;
        (b.name.rfind("snn.", 0) == 0 ? rep.snn_pj : rep.ann_pj) += e.energy_pj;
        rep.ac_gops += t * e.rate * b.op_ac / 1e9;
        rep.mac_gops += t * b.op_mac / 1e9;
        rep.blocks.push_back(e);
    }
    return rep;
}

EnergyReport estimate(const OpCount& counts, const lif::FiringMeter& meter, const EnergyConstants& consts) {
    std::map<std::string, Real> rates;
    for (const auto& b : counts.blocks) {
        if (b.spiking && meter.has_prefix(b.name + ".")) rates[b.name] = meter.firing_rate_prefix(b.name + ".");
    }
    return estimate(counts, rates, consts);
}

Real compare_ratio(Real e_ann, Real e_snn) {
    if (!(e_ann > 0.0) || !(e_snn > 0.0)) throw ParameterError("energy comparison needs two positive energies");
    return std::round(e_ann / e_snn * 100.0) / 100.0;
}

std::string EnergyReport::to_csv(const std::vector<std::string>& header) const {
    std::ostringstream os;
    os << std::setprecision(17);
    for (const auto& h : header) os << "# " << h << "\n";
    os << "block,T,f,OP_A,OP_M,pJ\n";
    for (const auto& b : blocks) {
        os << b.name << ',' << b.steps << ',' << b.rate << ',' << b.op_ac << ',' << b.op_mac << ',' << b.energy_pj << "\n";
    }
    return os.str();
}

std::string EnergyReport::summary() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "E_A = " << constants.e_ac << " pJ, E_M = " << constants.e_mac << " pJ\n";
    os << "blocks: " << blocks.size() << "\n";
    os << "AC ops (rate-weighted): " << ac_gops << " G\n";
    os << "MAC ops: " << mac_gops << " G\n";
    os << "frame branch energy: " << ann_pj / 1e9 << " mJ\n";
    os << "spiking branch energy: " << snn_pj / 1e9 << " mJ\n";
    os << "total energy: " << total_pj / 1e9 << " mJ\n";
    if (ann_pj > 0.0 && snn_pj > 0.0) {
        os << std::setprecision(2) << "frame/spiking energy ratio: " << compare_ratio(ann_pj, snn_pj) << "x\n";
    }
    return os.str();
}

}  // namespace hdi::energy
