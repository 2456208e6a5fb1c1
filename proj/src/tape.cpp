#include "invcast/tape.hpp"

#include <cmath>

namespace invcast::ad {

const Tensor& DiffValue::value() const { return tape->value(id); }
const Tensor& DiffValue::grad() const { return tape->grad(id); }

int Tape::push(Tensor value, bool needs_grad, BackFn back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Tape::grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_set) {
        n.grad = Tensor::zeros(n.value.dims());
        n.grad_set = true;
    }
    return n.grad;
}

Tensor& Tape::adjoint_slot(int id) {
    const auto idx = static_cast<size_t>(id);
    if (!adj_set_[idx]) {
        adj_[idx] = Tensor::zeros(nodes_[idx].value.dims());
        adj_set_[idx] = 1;
    }
    return adj_[idx];
}

void Tape::adjoint_add(int id, const Tensor& g) {
    Tensor& slot = adjoint_slot(id);
    require(slot.same_shape(g), "tape: adjoint shape %s does not match node shape %s",
            g.shape_str().c_str(), slot.shape_str().c_str());
    auto& d = slot.data();
    const auto& s = g.data();
    for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void Tape::adjoint_add_elem(int id, size_t flat, double g) {
    adjoint_slot(id).data()[flat] += g;
}

void Tape::backward(DiffValue root) {
    require(root.valid() && root.tape == this, "tape: backward root is not on this tape");
    require(value(root.id).rank() == 0, "tape: backward root must be scalar, got shape %s",
            value(root.id).shape_str().c_str());

    adj_.assign(nodes_.size(), Tensor());
    adj_set_.assign(nodes_.size(), 0);
    adjoint_slot(root.id).data()[0] = 1.0;

    // Nodes are recorded in topological order, so one reverse sweep visits
    // every node after all of its children.
    for (int id = root.id; id >= 0; --id) {
        const auto idx = static_cast<size_t>(id);
        if (!adj_set_[idx]) continue;
        Node& n = nodes_[idx];
        if (n.back && n.needs_grad) n.back(*this, adj_[idx]);
    }

    for (int id = root.id; id >= 0; --id) {
        const auto idx = static_cast<size_t>(id);
        if (!adj_set_[idx] || !nodes_[idx].needs_grad) continue;
        Node& n = nodes_[idx];
        if (!n.grad_set) {
            n.grad = Tensor::zeros(n.value.dims());
            n.grad_set = true;
        }
        auto& d = n.grad.data();
        const auto& s = adj_[idx].data();
        for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }
    adj_.clear();
    adj_set_.clear();
}

void Tape::zero_grad() {
    for (Node& n : nodes_) {
        n.grad = Tensor();
        n.grad_set = false;
    }
}

namespace {

void check_same_tape(DiffValue a, DiffValue b) {
    require(a.valid() && b.valid() && a.tape == b.tape,
            "tape: operands live on different tapes");
}

enum class BinOp { Add, Sub, Mul, Div };

double apply(BinOp op, double x, double y) {
    switch (op) {
        case BinOp::Add: return x + y;
        case BinOp::Sub: return x - y;
        case BinOp::Mul: return x * y;
        case BinOp::Div: return x / y;
    }
    return 0.0;
}

DiffValue binary(BinOp op, DiffValue a, DiffValue b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    const Tensor& bv = t.value(b.id);
    const bool a_scalar = av.rank() == 0;
    const bool b_scalar = bv.rank() == 0;
    require(av.same_shape(bv) || a_scalar || b_scalar,
            "tape: shape mismatch %s vs %s", av.shape_str().c_str(), bv.shape_str().c_str());

    const Tensor& big = b_scalar ? av : bv;
    Tensor out = Tensor::zeros(big.dims());
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = a_scalar ? av[0] : av[i];
        const double y = b_scalar ? bv[0] : bv[i];
        out[i] = apply(op, x, y);
    }

    const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
    const int aid = a.id, bid = b.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [op, aid, bid, a_scalar, b_scalar](Tape& tp, const Tensor& g) {
            const Tensor& av2 = tp.value(aid);
            const Tensor& bv2 = tp.value(bid);
            for (size_t i = 0; i < g.size(); ++i) {
                const double x = a_scalar ? av2[0] : av2[i];
                const double y = b_scalar ? bv2[0] : bv2[i];
                double gx = 0.0, gy = 0.0;
                switch (op) {
                    case BinOp::Add: gx = g[i]; gy = g[i]; break;
                    case BinOp::Sub: gx = g[i]; gy = -g[i]; break;
                    case BinOp::Mul: gx = g[i] * y; gy = g[i] * x; break;
                    case BinOp::Div: gx = g[i] / y; gy = -g[i] * x / (y * y); break;
                }
                if (tp.needs_grad(aid)) tp.adjoint_add_elem(aid, a_scalar ? 0 : i, gx);
                if (tp.needs_grad(bid)) tp.adjoint_add_elem(bid, b_scalar ? 0 : i, gy);
            }
        };
    }
    return t.wrap(t.push(std::move(out), needs, std::move(back)));
}

template <typename Fwd, typename Bwd>
DiffValue unary(DiffValue a, Fwd fwd, Bwd bwd) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    Tensor out = Tensor::zeros(av.dims());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid, bwd](Tape& tp, const Tensor& g) {
            const Tensor& x = tp.value(aid);
            for (size_t i = 0; i < g.size(); ++i) tp.adjoint_add_elem(aid, i, g[i] * bwd(x[i]));
        };
    }
    return t.wrap(t.push(std::move(out), needs, std::move(back)));
}

}  // namespace

DiffValue add(DiffValue a, DiffValue b) { return binary(BinOp::Add, a, b); }
DiffValue sub(DiffValue a, DiffValue b) { return binary(BinOp::Sub, a, b); }
DiffValue mul(DiffValue a, DiffValue b) { return binary(BinOp::Mul, a, b); }
DiffValue div(DiffValue a, DiffValue b) { return binary(BinOp::Div, a, b); }

DiffValue add_const(DiffValue a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

DiffValue mul_const(DiffValue a, double c) {
    return unary(a, [c](double x) { return x * c; }, [c](double) { return c; });
}

DiffValue const_sub(double c, DiffValue a) {
    return unary(a, [c](double x) { return c - x; }, [](double) { return -1.0; });
}

DiffValue matmul(DiffValue a, DiffValue b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    const Tensor& bv = t.value(b.id);
    require(av.rank() == 2, "tape: matmul lhs must be rank-2, got %s", av.shape_str().c_str());
    require(bv.rank() == 2 || bv.rank() == 1, "tape: matmul rhs must be rank-1 or rank-2, got %s",
            bv.shape_str().c_str());
    const int m = av.dim(0), k = av.dim(1);
    require(bv.dim(0) == k, "tape: matmul inner dims differ, %s vs %s", av.shape_str().c_str(),
            bv.shape_str().c_str());

    const bool vec = bv.rank() == 1;
    const int n = vec ? 1 : bv.dim(1);
    Tensor out = vec ? Tensor::zeros({m}) : Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p)
                acc += av.at(i, p) * (vec ? bv.at(p) : bv.at(p, j));
            out[static_cast<size_t>(i) * n + j] = acc;
        }

    const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
    const int aid = a.id, bid = b.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid, bid, m, k, n, vec](Tape& tp, const Tensor& g) {
            const Tensor& A = tp.value(aid);
            const Tensor& B = tp.value(bid);
            if (tp.needs_grad(aid)) {
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += g[static_cast<size_t>(i) * n + j] * (vec ? B.at(p) : B.at(p, j));
                        tp.adjoint_add_elem(aid, static_cast<size_t>(i) * k + p, acc);
                    }
            }
            if (tp.needs_grad(bid)) {
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += A.at(i, p) * g[static_cast<size_t>(i) * n + j];
                        tp.adjoint_add_elem(bid, static_cast<size_t>(p) * n + j, acc);
                    }
            }
        };
    }
    return t.wrap(t.push(std::move(out), needs, std::move(back)));
}

DiffValue sum(DiffValue a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) acc += av[i];

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid](Tape& tp, const Tensor& g) {
            const size_t n = tp.value(aid).size();
            for (size_t i = 0; i < n; ++i) tp.adjoint_add_elem(aid, i, g[0]);
        };
    }
    return t.wrap(t.push(Tensor::scalar(acc), needs, std::move(back)));
}

DiffValue mean(DiffValue a) {
    const double inv = 1.0 / static_cast<double>(a.value().size());
    return mul_const(sum(a), inv);
}

namespace {

// Collapse dims into (outer, axis, inner) so one loop handles any rank.
struct AxisView {
    int outer = 1, axis = 1, inner = 1;
};

AxisView axis_view(const Tensor& v, int axis) {
    require(axis >= 0 && axis < v.rank(), "tape: axis %d out of range for shape %s", axis,
            v.shape_str().c_str());
    AxisView view;
    for (int i = 0; i < axis; ++i) view.outer *= v.dim(i);
    view.axis = v.dim(axis);
    for (int i = axis + 1; i < v.rank(); ++i) view.inner *= v.dim(i);
    return view;
}

std::vector<int> drop_axis(const Tensor& v, int axis) {
    std::vector<int> dims;
    for (int i = 0; i < v.rank(); ++i)
        if (i != axis) dims.push_back(v.dim(i));
    return dims;
}

}  // namespace

DiffValue sum_axis(DiffValue a, int axis) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    const AxisView view = axis_view(av, axis);
    const std::vector<int> out_dims = drop_axis(av, axis);
    Tensor out = out_dims.empty() ? Tensor::scalar(0.0) : Tensor::zeros(out_dims);
    for (int o = 0; o < view.outer; ++o)
        for (int x = 0; x < view.axis; ++x)
            for (int i = 0; i < view.inner; ++i)
                out[static_cast<size_t>(o) * view.inner + i] +=
                    av[(static_cast<size_t>(o) * view.axis + x) * view.inner + i];

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid, view](Tape& tp, const Tensor& g) {
            for (int o = 0; o < view.outer; ++o)
                for (int x = 0; x < view.axis; ++x)
                    for (int i = 0; i < view.inner; ++i)
                        tp.adjoint_add_elem(aid, (static_cast<size_t>(o) * view.axis + x) * view.inner + i,
                                            g[static_cast<size_t>(o) * view.inner + i]);
        };
    }
    return t.wrap(t.push(std::move(out), needs, std::move(back)));
}

DiffValue mean_axis(DiffValue a, int axis) {
    const Tensor& av = a.value();
    const double inv = 1.0 / static_cast<double>(av.dim(axis));
    return mul_const(sum_axis(a, axis), inv);
}

DiffValue variance(DiffValue a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    require(av.rank() == 1, "tape: variance expects rank-1, got %s", av.shape_str().c_str());
    const size_t n = av.size();
    double m = 0.0;
    for (size_t i = 0; i < n; ++i) m += av[i];
    m /= static_cast<double>(n);
    double v = 0.0;
    for (size_t i = 0; i < n; ++i) v += (av[i] - m) * (av[i] - m);
    v /= static_cast<double>(n);

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid, m, n](Tape& tp, const Tensor& g) {
            const Tensor& x = tp.value(aid);
            const double scale = 2.0 / static_cast<double>(n);
            for (size_t i = 0; i < n; ++i)
                tp.adjoint_add_elem(aid, i, g[0] * scale * (x[i] - m));
        };
    }
    return t.wrap(t.push(Tensor::scalar(v), needs, std::move(back)));
}

DiffValue relu(DiffValue a) {
    // Subgradient at the kink is 0.
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

DiffValue sigmoid(DiffValue a) {
    return unary(a, sigmoid_stable, [](double x) {
        const double s = sigmoid_stable(x);
        return s * (1.0 - s);
    });
}

DiffValue tanh(DiffValue a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double x) {
        const double th = std::tanh(x);
        return 1.0 - th * th;
    });
}

DiffValue sqrt(DiffValue a) {
    return unary(a, [](double x) { return std::sqrt(x); },
                 [](double x) { return 0.5 / std::sqrt(x); });
}

DiffValue square(DiffValue a) {
    return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

DiffValue concat1(const std::vector<DiffValue>& parts) {
    require(!parts.empty(), "tape: concat1 of zero parts");
    Tape& t = *parts[0].tape;
    std::vector<double> data;
    std::vector<int> ids;
    std::vector<std::pair<int, int>> extents;  // (offset, len) per part
    bool needs = false;
    for (const DiffValue& p : parts) {
        check_same_tape(parts[0], p);
        const Tensor& pv = t.value(p.id);
        require(pv.rank() <= 1, "tape: concat1 part must be rank-0 or rank-1, got %s",
                pv.shape_str().c_str());
        extents.emplace_back(static_cast<int>(data.size()), static_cast<int>(pv.size()));
        for (size_t i = 0; i < pv.size(); ++i) data.push_back(pv[i]);
        ids.push_back(p.id);
        needs = needs || t.needs_grad(p.id);
    }

    Tape::BackFn back = nullptr;
    if (needs) {
        back = [ids, extents](Tape& tp, const Tensor& g) {
            for (size_t p = 0; p < ids.size(); ++p) {
                if (!tp.needs_grad(ids[p])) continue;
                const auto [off, len] = extents[p];
                for (int i = 0; i < len; ++i)
                    tp.adjoint_add_elem(ids[p], static_cast<size_t>(i), g[static_cast<size_t>(off + i)]);
            }
        };
    }
    return t.wrap(t.push(Tensor::from_vector(std::move(data)), needs, std::move(back)));
}

DiffValue slice1(DiffValue a, int start, int len) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    require(av.rank() == 1, "tape: slice1 expects rank-1, got %s", av.shape_str().c_str());
    require(start >= 0 && len >= 1 && start + len <= av.dim(0),
            "tape: slice [%d,%d) out of range for length %d", start, start + len, av.dim(0));
    std::vector<double> data(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) data[static_cast<size_t>(i)] = av.at(start + i);

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid, start, len](Tape& tp, const Tensor& g) {
            for (int i = 0; i < len; ++i)
                tp.adjoint_add_elem(aid, static_cast<size_t>(start + i), g[static_cast<size_t>(i)]);
        };
    }
    return t.wrap(t.push(Tensor::from_vector(std::move(data)), needs, std::move(back)));
}

DiffValue shift1(DiffValue a, int k) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    require(av.rank() == 1, "tape: shift1 expects rank-1, got %s", av.shape_str().c_str());
    require(k >= 0, "tape: shift1 offset must be non-negative, got %d", k);
    const int n = av.dim(0);
    std::vector<double> data(static_cast<size_t>(n), 0.0);
    for (int i = k; i < n; ++i) data[static_cast<size_t>(i)] = av.at(i - k);

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid, k, n](Tape& tp, const Tensor& g) {
            for (int i = k; i < n; ++i)
                tp.adjoint_add_elem(aid, static_cast<size_t>(i - k), g[static_cast<size_t>(i)]);
        };
    }
    return t.wrap(t.push(Tensor::from_vector(std::move(data)), needs, std::move(back)));
}

DiffValue reshape(DiffValue a, std::vector<int> dims) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    Tensor out = Tensor::from_data(std::move(dims), av.data());
    require(out.size() == av.size(), "tape: reshape size mismatch %s -> %s",
            av.shape_str().c_str(), out.shape_str().c_str());

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid](Tape& tp, const Tensor& g) {
            for (size_t i = 0; i < g.size(); ++i) tp.adjoint_add_elem(aid, i, g[i]);
        };
    }
    return t.wrap(t.push(std::move(out), needs, std::move(back)));
}

DiffValue embed_lookup(DiffValue table, int row) {
    Tape& t = *table.tape;
    const Tensor& tv = t.value(table.id);
    require(tv.rank() == 2, "tape: embed_lookup table must be rank-2, got %s",
            tv.shape_str().c_str());
    require(row >= 0 && row < tv.dim(0), "tape: embed_lookup row %d out of range [0,%d)", row,
            tv.dim(0));
    const int e = tv.dim(1);
    std::vector<double> data(static_cast<size_t>(e));
    for (int j = 0; j < e; ++j) data[static_cast<size_t>(j)] = tv.at(row, j);

    const bool needs = t.needs_grad(table.id);
    const int tid = table.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [tid, row, e](Tape& tp, const Tensor& g) {
            for (int j = 0; j < e; ++j)
                tp.adjoint_add_elem(tid, static_cast<size_t>(row) * e + j, g[static_cast<size_t>(j)]);
        };
    }
    return t.wrap(t.push(Tensor::from_vector(std::move(data)), needs, std::move(back)));
}

DiffValue scatter_sum(DiffValue vals, std::vector<int> bins, int out_size) {
    Tape& t = *vals.tape;
    const Tensor& vv = t.value(vals.id);
    require(vv.rank() == 1, "tape: scatter_sum expects rank-1 values, got %s",
            vv.shape_str().c_str());
    require(bins.size() == vv.size(), "tape: scatter_sum bins size %zu != values size %zu",
            bins.size(), vv.size());
    require(out_size >= 1, "tape: scatter_sum output size must be positive");
    std::vector<double> data(static_cast<size_t>(out_size), 0.0);
    for (size_t i = 0; i < bins.size(); ++i) {
        if (bins[i] < 0) continue;
        require(bins[i] < out_size, "tape: scatter_sum bin %d out of range [0,%d)", bins[i],
                out_size);
        data[static_cast<size_t>(bins[i])] += vv[i];
    }

    const bool needs = t.needs_grad(vals.id);
    const int vid = vals.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [vid, bins = std::move(bins)](Tape& tp, const Tensor& g) {
            for (size_t i = 0; i < bins.size(); ++i)
                if (bins[i] >= 0) tp.adjoint_add_elem(vid, i, g[static_cast<size_t>(bins[i])]);
        };
    }
    return t.wrap(t.push(Tensor::from_vector(std::move(data)), needs, std::move(back)));
}

DiffValue cumsum(DiffValue a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a.id);
    require(av.rank() == 1, "tape: cumsum expects rank-1, got %s", av.shape_str().c_str());
    const int n = av.dim(0);
    std::vector<double> data(static_cast<size_t>(n));
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += av.at(i);
        data[static_cast<size_t>(i)] = acc;
    }

    const bool needs = t.needs_grad(a.id);
    const int aid = a.id;
    Tape::BackFn back = nullptr;
    if (needs) {
        back = [aid, n](Tape& tp, const Tensor& g) {
            double acc2 = 0.0;
            for (int i = n - 1; i >= 0; --i) {
                acc2 += g[static_cast<size_t>(i)];
                tp.adjoint_add_elem(aid, static_cast<size_t>(i), acc2);
            }
        };
    }
    return t.wrap(t.push(Tensor::from_vector(std::move(data)), needs, std::move(back)));
}

}  // namespace invcast::ad
