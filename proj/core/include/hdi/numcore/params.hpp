#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hdi/numcore/tensor.hpp"

namespace hdi::numcore {

/// Named trainable parameters, non-trainable buffers (running statistics),
/// AdamW moment arrays and the optimizer step counter.
class ParamStore {
public:
    /// Registers a trainable tensor; returns a handle aliasing the stored one.
    Tensor add(const std::string& name, Tensor value);
    Tensor add_buffer(const std::string& name, Tensor value);

    bool contains(const std::string& name) const;
    Tensor get(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    const std::vector<std::string>& buffer_names() const { return buffer_order_; }
    Tensor buffer(const std::string& name) const;

    /// Frozen parameters keep requires_grad off and are skipped by adamw_step.
    void freeze(const std::string& name);
    bool frozen(const std::string& name) const;

    void zero_grad();
    std::size_t parameter_count() const;

    // Optimizer state.
    std::vector<Real>& first_moment(const std::string& name);
    std::vector<Real>& second_moment(const std::string& name);
    const std::map<std::string, std::vector<Real>>& first_moments() const { return m_; }
    const std::map<std::string, std::vector<Real>>& second_moments() const { return v_; }
    std::uint64_t step() const { return step_; }
    void set_step(std::uint64_t s) { step_ = s; }
    void advance() { ++step_; }

private:
    std::map<std::string, Tensor> params_;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> buffers_;
    std::vector<std::string> buffer_order_;
    std::map<std::string, bool> frozen_;
    std::map<std::string, std::vector<Real>> m_;
    std::map<std::string, std::vector<Real>> v_;
    std::uint64_t step_ = 0;
};

struct AdamWConfig {
    Real lr = 1e-4;
    Real weight_decay = 0.05;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps = 1e-8;
};

/// Decoupled weight decay (p -= lr * wd * p) followed by the bias-corrected
/// Adam update. Every non-frozen parameter must hold a gradient.
void adamw_step(ParamStore& params, const AdamWConfig& cfg);

/// Truncated normal (cut at two standard deviations).
Tensor trunc_normal(const Shape& shape, Real std, std::mt19937_64& rng);

}  // namespace hdi::numcore
