#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hdi/numcore/tensor.hpp"

namespace hdi::test {

using numcore::Real;
using numcore::Shape;
using numcore::Tensor;

/// Seeded generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    Real real(Real lo, Real hi) { return std::uniform_real_distribution<Real>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    std::size_t size(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
    bool coin(Real p = 0.5) { return real(0, 1) < p; }

    Tensor tensor(const Shape& s, Real lo = -1, Real hi = 1) {
        Tensor t(s);
        for (auto& v : t.mutable_data()) v = real(lo, hi);
        return t;
    }
    Tensor binary(const Shape& s, Real p = 0.3) {
        Tensor t(s);
        for (auto& v : t.mutable_data()) v = coin(p) ? 1.0 : 0.0;
        return t;
    }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline Real max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
    Real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline bool bitwise_equal(std::span<const Real> a, std::span<const Real> b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

inline Real max_abs_diff(const numcore::Tensor& a, const numcore::Tensor& b) { return max_abs_diff(a.data(), b.data()); }

inline bool bitwise_equal(const numcore::Tensor& a, const numcore::Tensor& b) {
    return a.shape() == b.shape() && bitwise_equal(a.data(), b.data());
}

}  // namespace hdi::test
