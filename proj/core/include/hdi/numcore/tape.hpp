#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hdi/numcore/tensor.hpp"

namespace hdi::numcore {

/// Backward rule of a recorded primitive. `grad_out` is dL/d(output);
/// `grad_in[i]` is the accumulation buffer for input i, or empty when that
/// input does not participate in differentiation.
using BackwardFn =
    std::function<void(std::span<const Real> grad_out, std::span<const std::span<Real>> grad_in)>;

struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
};

/// Append-only record of primitive applications. Inputs of every node are
/// either leaves or outputs of earlier nodes, so reverse order is a valid
/// topological order.
class Tape {
public:
    void record(Node node) { nodes_.push_back(std::move(node)); }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    std::vector<std::string> op_names() const;
    std::size_t count_op(const std::string& op) const;
    void clear() { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

/// Tape that receives nodes from ops on the current thread, or nullptr.
Tape* active_tape();

class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* saved_;
};

/// Suspends recording (for inference and in-place bookkeeping).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* saved_;
};

/// Records `output = op(inputs)` on the active tape when any input is
/// tracked. Returns the output (marked tracked when recorded).
Tensor record(const std::string& op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

/// Reverse-mode sweep from a scalar loss. Gradient buffers of every tensor on
/// the tape are reset first, so replaying is idempotent. Leaves that require
/// grad end up holding dLoss/dLeaf.
void backward(const Tensor& loss, const Tape& tape);

namespace testing {
/// Scales the input gradients produced by every node named `op` by `factor`.
/// Used to check that gradient verification detects a broken backward rule.
void corrupt_backward(const std::string& op, Real factor);
void clear_corruption();
}  // namespace testing

}  // namespace hdi::numcore
