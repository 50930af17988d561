#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hdi::numcore {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage precision. Arithmetic always runs in double; in F32 mode every
/// value written by an op (and every parameter update) is rounded to the
/// nearest float, so results match 32-bit storage.
enum class Precision { F32, F64 };

namespace detail {
inline Precision current_precision = Precision::F32;
}

inline Precision precision() { return detail::current_precision; }
inline void set_precision(Precision p) { detail::current_precision = p; }

/// Rounds to float storage when F32 is active.
inline Real store(Real v);

class PrecisionScope {
public:
    explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
    ~PrecisionScope() { set_precision(saved_); }
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision saved_;
};

struct TensorImpl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool requires_grad = false;
    // Set when the tensor is the output of a recorded tape node.
    bool tracked = false;
};

/// Shared handle to a dense row-major array. Copies alias the same storage;
/// use clone() for a deep copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, Real fill = 0.0);
    Tensor(Shape shape, std::vector<Real> data);

    static Tensor scalar(Real v);
    static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);
    static Tensor vector(std::initializer_list<Real> values);

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl_->data.size(); }
    bool defined() const { return impl_ != nullptr; }

    std::span<const Real> data() const { return impl_->data; }
    std::span<Real> mutable_data() { return impl_->data; }
    const std::vector<Real>& values() const { return impl_->data; }
    Real operator[](std::size_t i) const { return impl_->data[i]; }
    Real item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);
    bool tracked() const { return impl_->requires_grad || impl_->tracked; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const Real> grad() const { return impl_->grad; }
    std::span<Real> mutable_grad() { return impl_->grad; }
    void zero_grad();

    Tensor clone() const;
    /// Deep copy without gradient tracking.
    Tensor detach() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

inline Real store(Real v) {
    return precision() == Precision::F32 ? static_cast<Real>(static_cast<float>(v)) : v;
}

}  // namespace hdi::numcore
