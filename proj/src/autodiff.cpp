#include "metadet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace metadet {

namespace {

NodePtr make_node(Tensor value, const char* op, std::vector<NodePtr> parents,
                  std::function<std::vector<NodePtr>(const NodePtr&, const NodePtr&)> vjp) {
    if (!value.all_finite())
        throw numeric_error(std::string("operation '") + op + "' produced non-finite values");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    bool rg = false;
    for (auto& p : parents) rg = rg || (p && p->requires_grad);
    n->parents = std::move(parents);
    n->requires_grad = rg;
    if (rg) n->vjp = std::move(vjp);
    return n;
}

NodePtr scalar_like(double v, const NodePtr& ref) {
    return constant(Tensor::scalar(v, ref->value.precision()));
}

// Collapses an adjoint back to a scalar parent's shape.
NodePtr reduce_to(const NodePtr& adj, const NodePtr& parent) {
    if (adj->value.numel() == parent->value.numel()) return adj;
    return reshape(reduce_sum(adj), parent->value.shape());
}

void check_binary_shapes(const char* op, const NodePtr& a, const NodePtr& b) {
    if (a->value.same_shape(b->value)) return;
    if (a->value.numel() == 1 || b->value.numel() == 1) return;
    throw numeric_error(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                        " vs " + b->value.shape_str());
}

template <typename F>
NodePtr binary_op(const char* op, const NodePtr& a, const NodePtr& b, F f,
                  std::function<std::vector<NodePtr>(const NodePtr&, const NodePtr&)> vjp) {
    check_binary_shapes(op, a, b);
    const Tensor& ta = a->value;
    const Tensor& tb = b->value;
    bool a_scalar = ta.numel() == 1 && tb.numel() > 1;
    const Tensor& big = a_scalar ? tb : ta;
    Tensor out(big.shape(), promote(ta.precision(), tb.precision()));
    int64_t n = out.numel();
    bool bs = tb.numel() == 1;
    bool as = ta.numel() == 1;
    for (int64_t i = 0; i < n; ++i)
        out.set(i, f(ta[as ? 0 : i], tb[bs ? 0 : i]));
    return make_node(std::move(out), op, {a, b}, std::move(vjp));
}

template <typename F>
NodePtr unary_op(const char* op, const NodePtr& a, F f,
                 std::function<std::vector<NodePtr>(const NodePtr&, const NodePtr&)> vjp) {
    Tensor out(a->value.shape(), a->value.precision());
    int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.set(i, f(a->value[i]));
    return make_node(std::move(out), op, {a}, std::move(vjp));
}

struct ReducePlan {
    std::vector<int64_t> out_shape;
    std::shared_ptr<std::vector<int64_t>> in_to_out;  // input flat -> output flat
    int64_t count = 0;                                // elements per output cell
};

ReducePlan plan_reduce(const Tensor& t, std::vector<int64_t> axes) {
    int64_t r = t.rank();
    if (axes.empty())
        for (int64_t i = 0; i < r; ++i) axes.push_back(i);
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    for (int64_t ax : axes)
        if (ax < 0 || ax >= r)
            throw numeric_error("reduce: axis " + std::to_string(ax) + " invalid for shape " +
                                t.shape_str());
    std::vector<bool> reduced(static_cast<size_t>(r), false);
    for (int64_t ax : axes) reduced[static_cast<size_t>(ax)] = true;

    ReducePlan plan;
    plan.count = 1;
    for (int64_t i = 0; i < r; ++i) {
        if (reduced[static_cast<size_t>(i)])
            plan.count *= t.shape()[static_cast<size_t>(i)];
        else
            plan.out_shape.push_back(t.shape()[static_cast<size_t>(i)]);
    }
    if (plan.out_shape.empty()) plan.out_shape.push_back(1);

    std::vector<int64_t> out_strides_per_dim(static_cast<size_t>(r), 0);
    int64_t stride = 1;
    for (int64_t i = r - 1; i >= 0; --i) {
        if (!reduced[static_cast<size_t>(i)]) {
            out_strides_per_dim[static_cast<size_t>(i)] = stride;
            stride *= t.shape()[static_cast<size_t>(i)];
        }
    }
    plan.in_to_out = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(t.numel()));
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    for (int64_t flat = 0; flat < t.numel(); ++flat) {
        int64_t out_flat = 0;
        for (int64_t i = 0; i < r; ++i)
            out_flat += idx[static_cast<size_t>(i)] * out_strides_per_dim[static_cast<size_t>(i)];
        (*plan.in_to_out)[static_cast<size_t>(flat)] = out_flat;
        for (int64_t i = r - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < t.shape()[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return plan;
}

}  // namespace

NodePtr constant(Tensor value) {
    if (!value.all_finite()) throw numeric_error("constant tensor contains non-finite values");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "const";
    return n;
}

NodePtr leaf(Tensor value, bool requires_grad) {
    if (!value.all_finite()) throw numeric_error("leaf tensor contains non-finite values");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "leaf";
    n->requires_grad = requires_grad;
    return n;
}

NodePtr detach(const NodePtr& a) { return constant(a->value); }

NodePtr add(const NodePtr& a, const NodePtr& b) {
    return binary_op("add", a, b, [](double x, double y) { return x + y; },
                     [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {reduce_to(adj, self->parents[0]),
                                 reduce_to(adj, self->parents[1])};
                     });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
    return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                     [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {reduce_to(adj, self->parents[0]),
                                 reduce_to(neg(adj), self->parents[1])};
                     });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                     [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {reduce_to(mul(adj, self->parents[1]), self->parents[0]),
                                 reduce_to(mul(adj, self->parents[0]), self->parents[1])};
                     });
}

NodePtr div(const NodePtr& a, const NodePtr& b) {
    return binary_op("div", a, b, [](double x, double y) { return x / y; },
                     [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                         const NodePtr& bb = self->parents[1];
                         NodePtr da = reduce_to(div(adj, bb), self->parents[0]);
                         NodePtr db = reduce_to(neg(div(mul(adj, self), bb)), bb);
                         return {da, db};
                     });
}

NodePtr neg(const NodePtr& a) {
    return unary_op("neg", a, [](double x) { return -x; },
                    [](const NodePtr&, const NodePtr& adj) -> std::vector<NodePtr> {
                        return {neg(adj)};
                    });
}

NodePtr relu(const NodePtr& a) {
    return unary_op("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                    [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        const Tensor& x = self->parents[0]->value;
                        Tensor mask(x.shape(), x.precision());
                        for (int64_t i = 0; i < x.numel(); ++i) mask.set(i, x[i] > 0 ? 1.0 : 0.0);
                        return {mul(adj, constant(std::move(mask)))};
                    });
}

NodePtr exp(const NodePtr& a) {
    return unary_op("exp", a, [](double x) { return std::exp(x); },
                    [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        return {mul(adj, self)};
                    });
}

NodePtr log(const NodePtr& a) {
    for (int64_t i = 0; i < a->value.numel(); ++i)
        if (a->value[i] < 0)
            throw numeric_error("log of negative value " + std::to_string(a->value[i]));
    return unary_op("log", a, [](double x) { return std::log(x); },
                    [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        return {div(adj, self->parents[0])};
                    });
}

NodePtr sqrt(const NodePtr& a) {
    for (int64_t i = 0; i < a->value.numel(); ++i)
        if (a->value[i] < 0)
            throw numeric_error("sqrt of negative value " + std::to_string(a->value[i]));
    return unary_op("sqrt", a, [](double x) { return std::sqrt(x); },
                    [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        return {div(mul(adj, scalar_like(0.5, self)), self)};
                    });
}

NodePtr square(const NodePtr& a) {
    return unary_op("square", a, [](double x) { return x * x; },
                    [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        return {mul(adj, mul(scalar_like(2.0, self), self->parents[0]))};
                    });
}

NodePtr sigmoid(const NodePtr& a) {
    auto sg = [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    };
    return unary_op("sigmoid", a, sg,
                    [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        NodePtr one = scalar_like(1.0, self);
                        return {mul(adj, mul(self, sub(one, self)))};
                    });
}

NodePtr abs(const NodePtr& a) {
    return unary_op("abs", a, [](double x) { return std::fabs(x); },
                    [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        const Tensor& x = self->parents[0]->value;
                        Tensor sign(x.shape(), x.precision());
                        for (int64_t i = 0; i < x.numel(); ++i)
                            sign.set(i, x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0));
                        return {mul(adj, constant(std::move(sign)))};
                    });
}

NodePtr clamp(const NodePtr& a, double lo, double hi) {
    return unary_op("clamp", a,
                    [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
                    [lo, hi](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                        const Tensor& x = self->parents[0]->value;
                        Tensor mask(x.shape(), x.precision());
                        for (int64_t i = 0; i < x.numel(); ++i)
                            mask.set(i, (x[i] > lo && x[i] < hi) ? 1.0 : 0.0);
                        return {mul(adj, constant(std::move(mask)))};
                    });
}

NodePtr elementwise(const std::string& op, const NodePtr& a, const NodePtr& b) {
    if (op == "add" || op == "sub" || op == "mul") {
        if (!b) throw numeric_error("elementwise '" + op + "' requires two operands");
        if (op == "add") return add(a, b);
        if (op == "sub") return sub(a, b);
        return mul(a, b);
    }
    if (b) throw numeric_error("elementwise '" + op + "' takes one operand");
    if (op == "relu") return relu(a);
    if (op == "exp") return exp(a);
    if (op == "log") return log(a);
    if (op == "sqrt") return sqrt(a);
    if (op == "square") return square(a);
    if (op == "sigmoid") return sigmoid(a);
    throw numeric_error("unknown elementwise operation '" + op + "'");
}

NodePtr reduce_sum(const NodePtr& a, std::vector<int64_t> axes) {
    ReducePlan plan = plan_reduce(a->value, std::move(axes));
    Tensor out(plan.out_shape, a->value.precision());
    auto& od = out.mutable_data();
    for (int64_t i = 0; i < a->value.numel(); ++i)
        od[static_cast<size_t>((*plan.in_to_out)[static_cast<size_t>(i)])] += a->value[i];
    out.finalize();
    auto map = plan.in_to_out;
    auto in_shape = a->value.shape();
    return make_node(std::move(out), "sum", {a},
                     [map, in_shape](const NodePtr&, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {gather(adj, map, in_shape)};
                     });
}

NodePtr reduce_mean(const NodePtr& a, std::vector<int64_t> axes) {
    if (a->value.numel() == 0) throw numeric_error("mean of empty tensor");
    ReducePlan plan = plan_reduce(a->value, axes);
    NodePtr s = reduce_sum(a, std::move(axes));
    return mul(s, scalar_like(1.0 / static_cast<double>(plan.count), a));
}

NodePtr reduce_max(const NodePtr& a, std::vector<int64_t> axes) {
    ReducePlan plan = plan_reduce(a->value, std::move(axes));
    int64_t out_n = shape_numel(plan.out_shape);
    Tensor out(plan.out_shape, a->value.precision());
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out_n), -1);
    std::vector<bool> seen(static_cast<size_t>(out_n), false);
    for (int64_t i = 0; i < a->value.numel(); ++i) {
        size_t o = static_cast<size_t>((*plan.in_to_out)[static_cast<size_t>(i)]);
        if (!seen[o] || a->value[i] > out[static_cast<int64_t>(o)]) {
            seen[o] = true;
            out.set(static_cast<int64_t>(o), a->value[i]);
            (*argmax)[o] = i;
        }
    }
    auto in_shape = a->value.shape();
    return make_node(std::move(out), "max", {a},
                     [argmax, in_shape](const NodePtr&, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {scatter_add(adj, argmax, in_shape)};
                     });
}

NodePtr reshape(const NodePtr& a, std::vector<int64_t> shape) {
    Tensor out = a->value.reshaped(shape);
    auto orig = a->value.shape();
    return make_node(std::move(out), "reshape", {a},
                     [orig](const NodePtr&, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {reshape(adj, orig)};
                     });
}

NodePtr gather(const NodePtr& a, std::shared_ptr<const std::vector<int64_t>> indices,
               std::vector<int64_t> out_shape) {
    int64_t out_n = shape_numel(out_shape);
    if (out_n != static_cast<int64_t>(indices->size()))
        throw numeric_error("gather: index count does not match output shape");
    Tensor out(out_shape, a->value.precision());
    auto& od = out.mutable_data();
    const auto& idx = *indices;
    for (int64_t k = 0; k < out_n; ++k) {
        int64_t i = idx[static_cast<size_t>(k)];
        od[static_cast<size_t>(k)] = i < 0 ? 0.0 : a->value[i];
    }
    out.finalize();
    auto in_shape = a->value.shape();
    return make_node(std::move(out), "gather", {a},
                     [indices, in_shape](const NodePtr&, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {scatter_add(adj, indices, in_shape)};
                     });
}

NodePtr scatter_add(const NodePtr& a, std::shared_ptr<const std::vector<int64_t>> indices,
                    std::vector<int64_t> out_shape) {
    if (a->value.numel() != static_cast<int64_t>(indices->size()))
        throw numeric_error("scatter_add: index count does not match input size");
    Tensor out(out_shape, a->value.precision());
    auto& od = out.mutable_data();
    const auto& idx = *indices;
    for (int64_t k = 0; k < a->value.numel(); ++k) {
        int64_t i = idx[static_cast<size_t>(k)];
        if (i >= 0) od[static_cast<size_t>(i)] += a->value[k];
    }
    out.finalize();
    auto in_shape = a->value.shape();
    return make_node(std::move(out), "scatter_add", {a},
                     [indices, in_shape](const NodePtr&, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {gather(adj, indices, in_shape)};
                     });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    const Tensor& ta = a->value;
    const Tensor& tb = b->value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0])
        throw numeric_error("matmul: incompatible shapes " + ta.shape_str() + " x " +
                            tb.shape_str());
    int64_t m = ta.shape()[0], k = ta.shape()[1], n = tb.shape()[1];
    Tensor out({m, n}, promote(ta.precision(), tb.precision()));
    auto& od = out.mutable_data();
    const auto& ad = ta.data();
    const auto& bd = tb.data();
    for (int64_t i = 0; i < m; ++i) {
        double* orow = od.data() + i * n;
        const double* arow = ad.data() + i * k;
        for (int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = bd.data() + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    out.finalize();
    return make_node(std::move(out), "matmul", {a, b},
                     [](const NodePtr& self, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {matmul(adj, transpose2d(self->parents[1])),
                                 matmul(transpose2d(self->parents[0]), adj)};
                     });
}

NodePtr transpose2d(const NodePtr& a) {
    const Tensor& t = a->value;
    if (t.rank() != 2) throw numeric_error("transpose2d requires rank-2, got " + t.shape_str());
    int64_t m = t.shape()[0], n = t.shape()[1];
    Tensor out({n, m}, t.precision());
    auto& od = out.mutable_data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) od[static_cast<size_t>(j * m + i)] = t[i * n + j];
    out.finalize();
    return make_node(std::move(out), "transpose", {a},
                     [](const NodePtr&, const NodePtr& adj) -> std::vector<NodePtr> {
                         return {transpose2d(adj)};
                     });
}

namespace {

using ConvKey = std::tuple<int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t>;

std::shared_ptr<const std::vector<int64_t>> im2col_indices(int64_t cin, int64_t h, int64_t w,
                                                           int64_t kh, int64_t kw,
                                                           int64_t stride, int64_t pad,
                                                           int64_t oh, int64_t ow) {
    static std::map<ConvKey, std::shared_ptr<const std::vector<int64_t>>> cache;
    ConvKey key{cin, h, w, kh, kw, stride, pad};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    int64_t rows = cin * kh * kw, cols = oh * ow;
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(rows * cols));
    int64_t p = 0;
    for (int64_t ci = 0; ci < cin; ++ci)
        for (int64_t ki = 0; ki < kh; ++ki)
            for (int64_t kj = 0; kj < kw; ++kj)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        int64_t iy = oy * stride - pad + ki;
                        int64_t ix = ox * stride - pad + kj;
                        bool in = iy >= 0 && iy < h && ix >= 0 && ix < w;
                        (*idx)[static_cast<size_t>(p++)] = in ? (ci * h + iy) * w + ix : -1;
                    }
    cache[key] = idx;
    return idx;
}

std::shared_ptr<const std::vector<int64_t>> row_broadcast_indices(int64_t rows, int64_t cols) {
    static std::map<std::pair<int64_t, int64_t>, std::shared_ptr<const std::vector<int64_t>>> cache;
    auto key = std::make_pair(rows, cols);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(rows * cols));
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) (*idx)[static_cast<size_t>(r * cols + c)] = r;
    cache[key] = idx;
    return idx;
}

}  // namespace

NodePtr conv2d(const NodePtr& input, const NodePtr& kernel, const NodePtr& bias,
               int64_t stride, int64_t padding) {
    const Tensor& x = input->value;
    const Tensor& w = kernel->value;
    const Tensor& b = bias->value;
    if (x.rank() != 3)
        throw numeric_error("conv2d: input must be [C,H,W], got " + x.shape_str());
    if (w.rank() != 4)
        throw numeric_error("conv2d: kernel must be [Cout,Cin,kh,kw], got " + w.shape_str());
    int64_t cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
    int64_t cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != cin)
        throw numeric_error("conv2d: kernel expects " + std::to_string(w.shape()[1]) +
                            " input channels but input has " + std::to_string(cin));
    if (kh % 2 == 0 || kw % 2 == 0)
        throw numeric_error("conv2d: kernel dims must be odd, got " + w.shape_str());
    if (b.rank() != 1 || b.shape()[0] != cout)
        throw numeric_error("conv2d: bias shape " + b.shape_str() + " does not match Cout=" +
                            std::to_string(cout));
    if (stride < 1) throw numeric_error("conv2d: stride must be positive");
    if (padding < 0) throw numeric_error("conv2d: padding must be non-negative");
    int64_t oh = (h + 2 * padding - kh) / stride + 1;
    int64_t ow = (wd + 2 * padding - kw) / stride + 1;
    if (oh < 1 || ow < 1)
        throw numeric_error("conv2d: output would be empty for input " + x.shape_str() +
                            " kernel " + w.shape_str());

    int64_t rows = cin * kh * kw, cols = oh * ow;
    NodePtr colsn = gather(input, im2col_indices(cin, h, wd, kh, kw, stride, padding, oh, ow),
                           {rows, cols});
    NodePtr w2 = reshape(kernel, {cout, rows});
    NodePtr out = matmul(w2, colsn);
    NodePtr bmat = gather(bias, row_broadcast_indices(cout, cols), {cout, cols});
    return reshape(add(out, bmat), {cout, oh, ow});
}

std::vector<NodePtr> grad(const NodePtr& scalar, const std::vector<NodePtr>& wrt,
                          bool create_graph) {
    if (scalar->value.numel() != 1)
        throw numeric_error("grad: output has " + std::to_string(scalar->value.numel()) +
                            " elements, expected a scalar");
    for (auto& w : wrt)
        if (!w || !w->requires_grad)
            throw numeric_error("grad: wrt node does not require gradient");

    // Reverse topological order via iterative post-order DFS over the
    // gradient-requiring subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    if (scalar->requires_grad) {
        std::vector<std::pair<Node*, size_t>> stack{{scalar.get(), 0}};
        visited.insert(scalar.get());
        while (!stack.empty()) {
            auto& [n, pi] = stack.back();
            if (pi < n->parents.size()) {
                Node* p = n->parents[pi++].get();
                if (p && p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    std::unordered_map<Node*, NodePtr> adjoint;
    adjoint[scalar.get()] =
        constant(Tensor::full(scalar->value.shape(), 1.0, scalar->value.precision()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        auto ait = adjoint.find(n);
        if (ait == adjoint.end() || !n->vjp) continue;
        std::vector<NodePtr> contribs = n->vjp(n->shared_from_this(), ait->second);
        for (size_t i = 0; i < n->parents.size(); ++i) {
            const NodePtr& p = n->parents[i];
            if (!p || !p->requires_grad || i >= contribs.size() || !contribs[i]) continue;
            auto pit = adjoint.find(p.get());
            if (pit == adjoint.end())
                adjoint[p.get()] = contribs[i];
            else
                pit->second = add(pit->second, contribs[i]);
        }
    }

    std::vector<NodePtr> result;
    result.reserve(wrt.size());
    for (auto& w : wrt) {
        auto it = adjoint.find(w.get());
        NodePtr g = it != adjoint.end()
                        ? it->second
                        : constant(Tensor::zeros(w->value.shape(), w->value.precision()));
        result.push_back(create_graph ? g : detach(g));
    }
    return result;
}

double scalar_value(const NodePtr& a) {
    if (a->value.numel() != 1) throw numeric_error("scalar_value: tensor is not a scalar");
    return a->value[0];
}

}  // namespace metadet
