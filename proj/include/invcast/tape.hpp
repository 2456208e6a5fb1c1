#pragma once

#include <functional>
#include <vector>

#include "invcast/tensor.hpp"

namespace invcast::ad {

class Tape;

/// Handle to a node on a Tape: a forward value plus, after backward(),
/// an accumulated gradient of the same shape.
struct DiffValue {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Tensor& grad() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

/// Records an eager forward computation as a topologically ordered node
/// list and replays it in reverse for gradients. A tape is confined to a
/// single worker; distinct tapes may run in parallel.
///
/// backward() may be called repeatedly; leaf gradients accumulate across
/// calls until zero_grad().
class Tape {
public:
    using BackFn = std::function<void(Tape&, const Tensor& upstream)>;

    DiffValue param(Tensor v) { return wrap(push(std::move(v), true, nullptr)); }
    DiffValue constant(Tensor v) { return wrap(push(std::move(v), false, nullptr)); }
    DiffValue constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
    const Tensor& grad(int id);
    size_t node_count() const { return nodes_.size(); }

    void backward(DiffValue root);
    void zero_grad();

    // Op-implementation surface.
    int push(Tensor value, bool needs_grad, BackFn back);
    void adjoint_add(int id, const Tensor& g);
    void adjoint_add_elem(int id, size_t flat, double g);
    DiffValue wrap(int id) { return DiffValue{this, id}; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        bool grad_set = false;
        BackFn back;
    };

    Tensor& adjoint_slot(int id);

    std::vector<Node> nodes_;
    std::vector<Tensor> adj_;
    std::vector<char> adj_set_;
};

// ---------------------------------------------------------------------------
// Primitives. Elementwise binary ops accept equal shapes, or a rank-0
// operand on either side (broadcast). Shape violations throw Error with
// both shapes in the message.

DiffValue add(DiffValue a, DiffValue b);
DiffValue sub(DiffValue a, DiffValue b);
DiffValue mul(DiffValue a, DiffValue b);
DiffValue div(DiffValue a, DiffValue b);

DiffValue add_const(DiffValue a, double c);
DiffValue mul_const(DiffValue a, double c);
DiffValue const_sub(double c, DiffValue a);

/// (m x k)(k x n) -> (m x n), or (m x k)(k) -> (m).
DiffValue matmul(DiffValue a, DiffValue b);

DiffValue sum(DiffValue a);
DiffValue mean(DiffValue a);
DiffValue sum_axis(DiffValue a, int axis);
DiffValue mean_axis(DiffValue a, int axis);
/// Population variance of a rank-1 tensor (divides by count).
DiffValue variance(DiffValue a);

DiffValue relu(DiffValue a);
DiffValue sigmoid(DiffValue a);
DiffValue tanh(DiffValue a);
DiffValue sqrt(DiffValue a);
DiffValue square(DiffValue a);

/// Concatenate rank-0 and rank-1 parts into one rank-1 tensor.
DiffValue concat1(const std::vector<DiffValue>& parts);
DiffValue slice1(DiffValue a, int start, int len);
/// Shift a rank-1 tensor forward by k, zero-filling the front.
DiffValue shift1(DiffValue a, int k);
DiffValue reshape(DiffValue a, std::vector<int> dims);

/// Row lookup into a rank-2 table; gradient scatters back to that row.
DiffValue embed_lookup(DiffValue table, int row);

/// out[bins[i]] += vals[i]; bins[i] == -1 drops the element.
DiffValue scatter_sum(DiffValue vals, std::vector<int> bins, int out_size);
/// Inclusive prefix sum of a rank-1 tensor.
DiffValue cumsum(DiffValue a);

}  // namespace invcast::ad
