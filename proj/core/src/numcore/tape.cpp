#include "hdi/numcore/tape.hpp"

#include <algorithm>
#include <unordered_set>

#include "hdi/error.hpp"

namespace hdi::numcore {

namespace {
thread_local Tape* g_active = nullptr;

struct Corruption {
    std::string op;
    Real factor = 1.0;
};
Corruption g_corruption;
}  // namespace

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.push_back(n.op);
    return out;
}

std::size_t Tape::count_op(const std::string& op) const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.op == op; }));
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : saved_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = saved_; }

NoGradScope::NoGradScope() : saved_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = saved_; }

Tensor record(const std::string& op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
    Tape* tape = g_active;
    if (tape == nullptr) return output;
    bool any = false;
    for (const auto& in : inputs) any = any || in.tracked();
    if (!any) return output;
    Node node;
    node.op = op;
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) node.inputs.push_back(in.impl());
    node.output = output.impl();
    node.output->tracked = true;
    node.backward = std::move(backward);
    tape->record(std::move(node));
    return output;
}

void backward(const Tensor& loss, const Tape& tape) {
    if (loss.numel() != 1) {
        throw DimensionError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    const auto& nodes = tape.nodes();
    const TensorImpl* loss_impl = loss.impl().get();
    const bool produced = std::any_of(nodes.begin(), nodes.end(),
                                      [&](const Node& n) { return n.output.get() == loss_impl; });
    if (!produced && !loss.requires_grad()) {
        throw StateError("loss is not reachable from the tape");
    }

    std::unordered_set<TensorImpl*> seen;
    auto reset = [&](TensorImpl* t) {
        if (seen.insert(t).second) t->grad.assign(t->data.size(), 0.0);
    };
    for (const auto& n : nodes) {
        reset(n.output.get());
        for (const auto& in : n.inputs) {
            if (in->requires_grad || in->tracked) reset(in.get());
        }
    }
    loss.impl()->grad.assign(1, 1.0);

    std::vector<std::span<Real>> grads;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        const Node& n = *it;
        grads.clear();
        for (const auto& in : n.inputs) {
            if (in->requires_grad || in->tracked) {
                grads.emplace_back(in->grad);
            } else {
                grads.emplace_back();
            }
        }
        if (!g_corruption.op.empty() && n.op == g_corruption.op) {
            // Collect the node's contribution separately so only it is scaled.
            std::vector<std::vector<Real>> local(n.inputs.size());
            std::vector<std::span<Real>> local_spans;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                if (!grads[i].empty()) local[i].assign(grads[i].size(), 0.0);
                local_spans.emplace_back(local[i]);
            }
            n.backward(n.output->grad, local_spans);
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                for (std::size_t j = 0; j < local[i].size(); ++j) grads[i][j] += g_corruption.factor * local[i][j];
            }
            continue;
        }
        n.backward(n.output->grad, grads);
    }
}

namespace testing {
void corrupt_backward(const std::string& op, Real factor) { g_corruption = {op, factor}; }
void clear_corruption() { g_corruption = {}; }
}  // namespace testing

}  // namespace hdi::numcore
