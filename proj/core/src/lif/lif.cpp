#include "hdi/lif/lif.hpp"

#include <memory>

#include "hdi/error.hpp"
#include "hdi/numcore/tape.hpp"

namespace hdi::lif {

void LIFParams::validate() const {
    if (!(tau > 0.0)) throw ParameterError("LIF tau must be positive");
    if (!(v_th > v_reset)) throw ParameterError("LIF threshold must exceed the reset potential");
}

StepOutput lif_step(LIFState& state, std::span<const Real> x, const LIFParams& p) {
    if (state.v.size() != x.size()) {
        throw DimensionError("lif_step: state has " + std::to_string(state.v.size()) + " neurons, input " +
                             std::to_string(x.size()));
    }
    StepOutput out;
    out.spikes.resize(x.size());
    out.h.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real h = state.v[i] + (x[i] - (state.v[i] - p.v_reset)) / p.tau;
        const Real s = (h - p.v_th) >= 0.0 ? 1.0 : 0.0;
        out.h[i] = h;
        out.spikes[i] = s;
        state.v[i] = h * (1.0 - s) + p.v_reset * s;
    }
    ++state.step;
    return out;
}

void FiringMeter::record(const std::string& layer, std::span<const Real> spikes) {
    std::uint64_t n = 0;
    for (Real s : spikes) n += s != 0.0 ? 1 : 0;
    std::lock_guard<std::mutex> lock(mu_);
    auto& c = counts_[layer];
    c.spikes += n;
    c.slots += spikes.size();
}

Real FiringMeter::firing_rate(const std::string& layer) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = counts_.find(layer);
    if (it == counts_.end() || it->second.slots == 0) throw StateError("no recorded pass for layer " + layer);
    return static_cast<Real>(it->second.spikes) / static_cast<Real>(it->second.slots);
}

Real FiringMeter::firing_rate() const { return firing_rate_prefix(""); }

Real FiringMeter::firing_rate_prefix(const std::string& prefix) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::uint64_t s = 0, n = 0;
    for (const auto& [name, c] : counts_) {
        if (name.compare(0, prefix.size(), prefix) == 0) {
            s += c.spikes;
            n += c.slots;
        }
    }
    if (n == 0) throw StateError("no recorded pass" + (prefix.empty() ? std::string() : " for " + prefix));
    return static_cast<Real>(s) / static_cast<Real>(n);
}

bool FiringMeter::has_prefix(const std::string& prefix) const {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [name, c] : counts_) {
        if (c.slots > 0 && name.compare(0, prefix.size(), prefix) == 0) return true;
    }
    return false;
}

std::vector<std::string> FiringMeter::layers() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<std::string> out;
    for (const auto& [name, c] : counts_) out.push_back(name);
    return out;
}

void FiringMeter::clear() {
    std::lock_guard<std::mutex> lock(mu_);
    counts_.clear();
}

std::map<std::string, FiringMeter::Counts> FiringMeter::counts() const {
    std::lock_guard<std::mutex> lock(mu_);
    return counts_;
}

Tensor lif_sequence(const Tensor& x, const LIFParams& p, FiringMeter* meter, const std::string& layer) {
    p.validate();
    if (x.rank() < 1 || x.dim(0) < 1) throw DimensionError("lif_sequence expects a leading time axis");
    const std::size_t steps = x.dim(0);
    const std::size_t n = x.numel() / steps;
    const auto in = x.data();
    std::vector<Real> spikes(x.numel());
    auto pre = std::make_shared<std::vector<Real>>(x.numel());  // H - v_th
    std::vector<Real> v(n, p.v_reset);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = t * n + i;
            const Real h = v[i] + (in[k] - (v[i] - p.v_reset)) / p.tau;
            const Real s = (h - p.v_th) >= 0.0 ? 1.0 : 0.0;
            (*pre)[k] = h - p.v_th;
            spikes[k] = s;
            v[i] = h * (1.0 - s) + p.v_reset * s;
        }
    }
    if (meter != nullptr) meter->record(layer, spikes);
    Tensor out(x.shape(), std::move(spikes));
    auto oi = out.impl();
    const Real tau = p.tau, width = p.surrogate_width;
    return numcore::record(
        "lif", {x}, out,
        [pre, oi, steps, n, tau, width](std::span<const Real> g, std::span<const std::span<Real>> gi) {
            if (gi[0].empty()) return;
            const auto& s = oi->data;
            // dL/dV carried backwards through time.
            std::vector<Real> gv(n, 0.0);
            for (std::size_t t = steps; t-- > 0;) {
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t k = t * n + i;
                    const Real gh = g[k] * surrogate_grad((*pre)[k], width) + gv[i] * (1.0 - s[k]);
                    gi[0][k] += gh / tau;
                    gv[i] = gh * (1.0 - 1.0 / tau);
                }
            }
        });
}

}  // namespace hdi::lif
