#include "hdi/numcore/gradcheck.hpp"

#include <cmath>

#include "hdi/error.hpp"
#include "hdi/numcore/tape.hpp"

namespace hdi::numcore {

namespace {
Real eval_at(const ScalarFn& f, const Tensor& x) {
    NoGradScope guard;
    return f(x).item();
}
}  // namespace

std::vector<Real> central_difference(const ScalarFn& f, const Tensor& x, Real h) {
    Tensor probe = x.detach();
    auto d = probe.mutable_data();
    std::vector<Real> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Real x0 = d[i];
        d[i] = x0 + h;
        const Real fp = eval_at(f, probe);
        d[i] = x0 - h;
        const Real fm = eval_at(f, probe);
        d[i] = x0;
        out[i] = (fp - fm) / (2.0 * h);
    }
    return out;
}

std::vector<Real> tape_gradient(const ScalarFn& f, const Tensor& x) {
    Tensor leaf = x.detach();
    leaf.set_requires_grad(true);
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = f(leaf);
    }
    backward(y, tape);
    return {leaf.grad().begin(), leaf.grad().end()};
}

Real finite_diff_check(const ScalarFn& f, const Tensor& x, Real h) {
    if (precision() != Precision::F64) throw StateError("finite_diff_check requires 64-bit precision");
    const Real a = eval_at(f, x.detach());
    const Real b = eval_at(f, x.detach());
    if (!(a == b) && !(std::isnan(a) && std::isnan(b))) {
        throw StateError("finite_diff_check: function is not deterministic");
    }
    const auto analytic = tape_gradient(f, x);
    const auto numeric = central_difference(f, x, h);
    Real worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const Real rel = std::fabs(analytic[i] - numeric[i]) / (std::fabs(numeric[i]) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

Real finite_diff_check_param(const std::function<Tensor()>& f, Tensor param, Real h) {
    if (precision() != Precision::F64) throw StateError("finite_diff_check requires 64-bit precision");
    if (!param.requires_grad()) throw StateError("finite_diff_check_param: tensor does not require grad");
    const auto eval = [&] {
        NoGradScope guard;
        return f().item();
    };
    const Real a = eval(), b = eval();
    if (!(a == b) && !(std::isnan(a) && std::isnan(b))) {
        throw StateError("finite_diff_check: function is not deterministic");
    }
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = f();
    }
    param.zero_grad();
    backward(y, tape);
    const std::vector<Real> analytic(param.grad().begin(), param.grad().end());
    auto d = param.mutable_data();
    Real worst = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Real x0 = d[i];
        d[i] = x0 + h;
        const Real fp = eval();
        d[i] = x0 - h;
        const Real fm = eval();
        d[i] = x0;
        const Real numeric = (fp - fm) / (2.0 * h);
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / (std::fabs(numeric) + 1e-8));
    }
    return worst;
}

}  // namespace hdi::numcore
