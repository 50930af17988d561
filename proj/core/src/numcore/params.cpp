#include "hdi/numcore/params.hpp"

#include <cmath>

#include "hdi/error.hpp"

namespace hdi::numcore {

Tensor ParamStore::add(const std::string& name, Tensor value) {
    if (params_.count(name) || buffers_.count(name)) throw ConfigError("duplicate parameter name " + name);
    for (auto& v : value.mutable_data()) v = store(v);
    value.set_requires_grad(true);
    params_.emplace(name, value);
    order_.push_back(name);
    return value;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor value) {
    if (params_.count(name) || buffers_.count(name)) throw ConfigError("duplicate buffer name " + name);
    buffers_.emplace(name, value);
    buffer_order_.push_back(name);
    return value;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) != 0; }

Tensor ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
}

Tensor ParamStore::buffer(const std::string& name) const {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw ConfigError("unknown buffer " + name);
    return it->second;
}

void ParamStore::freeze(const std::string& name) {
    Tensor t = get(name);
    t.set_requires_grad(false);
    t.zero_grad();
    frozen_[name] = true;
}

bool ParamStore::frozen(const std::string& name) const {
    auto it = frozen_.find(name);
    return it != frozen_.end() && it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

std::vector<Real>& ParamStore::first_moment(const std::string& name) {
    auto& m = m_[name];
    if (m.empty()) m.assign(get(name).numel(), 0.0);
    return m;
}

std::vector<Real>& ParamStore::second_moment(const std::string& name) {
    auto& v = v_[name];
    if (v.empty()) v.assign(get(name).numel(), 0.0);
    return v;
}

void adamw_step(ParamStore& params, const AdamWConfig& cfg) {
    for (const auto& name : params.names()) {
        if (params.frozen(name)) continue;
        if (!params.get(name).has_grad()) throw StateError("adamw_step: parameter " + name + " has no gradient");
    }
    params.advance();
    const auto t = static_cast<Real>(params.step());
    const Real bc1 = 1.0 - std::pow(cfg.beta1, t);
    const Real bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& name : params.names()) {
        if (params.frozen(name)) continue;
        Tensor p = params.get(name);
        auto data = p.mutable_data();
        const auto grad = p.grad();
        auto& m = params.first_moment(name);
        auto& v = params.second_moment(name);
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] -= cfg.lr * cfg.weight_decay * data[i];
            m[i] = store(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i]);
            v[i] = store(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i]);
            const Real mhat = m[i] / bc1;
            const Real vhat = v[i] / bc2;
            data[i] = store(data[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

Tensor trunc_normal(const Shape& shape, Real std, std::mt19937_64& rng) {
    std::normal_distribution<Real> dist(0.0, 1.0);
    std::vector<Real> data(numel_of(shape));
    for (auto& v : data) {
        Real z = dist(rng);
        while (std::fabs(z) > 2.0) z = dist(rng);
        v = store(z * std);
    }
    return Tensor(shape, std::move(data));
}

}  // namespace hdi::numcore
