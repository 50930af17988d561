#pragma once

#include <functional>

#include "hdi/numcore/tensor.hpp"

namespace hdi::numcore {

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Max over coordinates of |analytic - central| / (|central| + 1e-8), where
/// the analytic gradient comes from one tape backward through `f` at `x`.
/// Requires 64-bit precision; throws StateError when two evaluations of `f`
/// at the same point disagree.
Real finite_diff_check(const ScalarFn& f, const Tensor& x, Real h = 1e-5);

/// Same check for a tensor that `f` reads directly (a model parameter):
/// `param` is perturbed in place and restored afterwards. It must require
/// grad.
Real finite_diff_check_param(const std::function<Tensor()>& f, Tensor param, Real h = 1e-5);

/// Central-difference gradient of `f` at `x` (no tape involved).
std::vector<Real> central_difference(const ScalarFn& f, const Tensor& x, Real h = 1e-5);

/// Gradient of `f` at `x` by one reverse sweep.
std::vector<Real> tape_gradient(const ScalarFn& f, const Tensor& x);

}  // namespace hdi::numcore
