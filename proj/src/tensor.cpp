#include "memvae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace memvae {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------- Tensor

namespace {

detail::NodePtr make_node(Shape shape, std::vector<double> value, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

}  // namespace

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(make_node({}, {v}, requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from(std::vector<double> values) {
    Shape s{values.size()};
    return Tensor(make_node(std::move(s), std::move(values), false));
}

Tensor Tensor::from(std::vector<double> values, Shape shape, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
    return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

double Tensor::item() const {
    if (size() != 1)
        throw ShapeError("item(): tensor of shape " + shape_str(shape()) +
                         " is not a scalar");
    return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty())
        throw std::logic_error("grad(): no gradient accumulated for this tensor");
    return node_->grad;
}

Tensor Tensor::detached() const {
    return Tensor(make_node(node_->shape, node_->value, false));
}

// ------------------------------------------------------------------ Tape

namespace {
thread_local std::vector<Tape*> g_tape_stack;
}

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
    if (!g_tape_stack.empty() && g_tape_stack.back() == this) g_tape_stack.pop_back();
}

Tape* Tape::active() {
    return g_tape_stack.empty() ? nullptr : g_tape_stack.back();
}

void Tape::record(const char* op, detail::NodePtr out,
                  std::function<void(const detail::Node&)> pull) {
    entries_.push_back(Entry{op, std::move(out), std::move(pull)});
}

void Tape::clear() { entries_.clear(); }

std::size_t Tape::count_op(std::string_view name) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
        if (name == e.op) ++n;
    return n;
}

void Tape::backward(const Tensor& root) {
    if (root.size() != 1)
        throw ShapeError("backward: root must be a scalar, got shape " +
                         shape_str(root.shape()));
    const detail::Node* root_node = root.node().get();
    bool found = false;
    for (const auto& e : entries_) {
        if (e.out.get() == root_node) {
            found = true;
            break;
        }
    }
    if (!found)
        throw std::invalid_argument("backward: root was not produced on the live tape");

    // Intermediate adjoints restart at zero each pass; leaf grads are left
    // alone so repeated calls accumulate.
    for (auto& e : entries_) e.out->grad.clear();
    root.node()->ensure_grad();
    root.node()->grad[0] = 1.0;

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->out->grad.empty()) continue;  // nothing flowed into this node
        it->pull(*it->out);
    }
}

// ----------------------------------------------------- broadcasting plan

namespace {

struct BroadcastPlan {
    Shape out_shape;
    std::vector<std::size_t> a_stride, b_stride;  // per output dim
    std::size_t out_size = 1;
};

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    BroadcastPlan p;
    p.out_shape.resize(rank);
    p.a_stride.assign(rank, 0);
    p.b_stride.assign(rank, 0);

    // Right-aligned dims; missing leading dims act as 1.
    std::vector<std::size_t> ad(rank, 1), bd(rank, 1);
    for (std::size_t i = 0; i < a.size(); ++i) ad[rank - a.size() + i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) bd[rank - b.size() + i] = b[i];

    for (std::size_t d = 0; d < rank; ++d) {
        if (ad[d] != bd[d] && ad[d] != 1 && bd[d] != 1)
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                             shape_str(b) + " are not broadcastable");
        p.out_shape[d] = std::max(ad[d], bd[d]);
    }

    std::size_t astep = 1, bstep = 1;
    for (std::size_t d = rank; d-- > 0;) {
        p.a_stride[d] = (ad[d] == 1 && p.out_shape[d] != 1) ? 0 : astep;
        p.b_stride[d] = (bd[d] == 1 && p.out_shape[d] != 1) ? 0 : bstep;
        astep *= ad[d];
        bstep *= bd[d];
    }
    p.out_size = shape_numel(p.out_shape);
    return p;
}

template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& fn) {
    const std::size_t rank = p.out_shape.size();
    if (rank == 0) {
        if (p.out_size) fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t oi = 0; oi < p.out_size; ++oi) {
        fn(oi, ai, bi);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ai += p.a_stride[d];
            bi += p.b_stride[d];
            if (idx[d] < p.out_shape[d]) break;
            ai -= p.a_stride[d] * p.out_shape[d];
            bi -= p.b_stride[d] * p.out_shape[d];
            idx[d] = 0;
        }
    }
}

void maybe_record(const char* op, const Tensor& out,
                  std::function<void(const detail::Node&)> pull) {
    if (out.requires_grad() && Tape::active())
        Tape::active()->record(op, out.node(), std::move(pull));
}

// Generic broadcasting binary op. dfda/dfdb give the local partials as a
// function of the two input values.
template <typename Fwd, typename Dfda, typename Dfdb>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd f,
                 Dfda dfda, Dfdb dfdb) {
    BroadcastPlan plan = broadcast_plan(a.shape(), b.shape(), name);
    std::vector<double> out(plan.out_size);
    const auto& av = a.values();
    const auto& bv = b.values();
    for_each_broadcast(plan, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
        out[oi] = f(av[ai], bv[bi]);
    });
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor result(make_node(plan.out_shape, std::move(out), rg));
    maybe_record(name, result,
                 [plan = std::move(plan), an = a.node(), bn = b.node(), dfda,
                  dfdb](const detail::Node& o) {
                     const bool ga = an->requires_grad;
                     const bool gb = bn->requires_grad;
                     if (ga) an->ensure_grad();
                     if (gb) bn->ensure_grad();
                     for_each_broadcast(plan, [&](std::size_t oi, std::size_t ai,
                                                  std::size_t bi) {
                         const double g = o.grad[oi];
                         if (ga) an->grad[ai] += g * dfda(an->value[ai], bn->value[bi]);
                         if (gb) bn->grad[bi] += g * dfdb(an->value[ai], bn->value[bi]);
                     });
                 });
    return result;
}

template <typename Fwd, typename Dfdx>
Tensor unary_op(const char* name, const Tensor& x, Fwd f, Dfdx dfdx) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    Tensor result(make_node(x.shape(), std::move(out), x.requires_grad()));
    maybe_record(name, result, [xn = x.node(), dfdx](const detail::Node& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            xn->grad[i] += o.grad[i] * dfdx(xn->value[i]);
    });
    return result;
}

}  // namespace

// ------------------------------------------------------ elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) {
    return unary_op(
        "neg", x, [](double v) { return -v; }, [](double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        "exp", x, [](double v) { return std::exp(v); },
        [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i)
        if (!(xv[i] > 0.0))
            throw DomainError("log: non-positive input " + std::to_string(xv[i]) +
                                  " at index " + std::to_string(i),
                              i);
    return unary_op(
        "log", x, [](double v) { return std::log(v); },
        [](double v) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i)
        if (xv[i] < 0.0)
            throw DomainError("sqrt: negative input at index " + std::to_string(i), i);
    // subgradient at 0 taken as 0, mirroring the relu convention
    return unary_op(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double v) { return v > 0.0 ? 0.5 / std::sqrt(v) : 0.0; });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double v) {
            const double t = std::tanh(v);
            return 1.0 - t * t;
        });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

namespace {
double sigmoid_stable(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x, sigmoid_stable, [](double v) {
            const double s = sigmoid_stable(v);
            return s * (1.0 - s);
        });
}

Tensor softplus(const Tensor& x) {
    return unary_op(
        "softplus", x,
        [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        sigmoid_stable);
}

Tensor clamp_min(const Tensor& x, double floor) {
    return unary_op(
        "clamp_min", x, [floor](double v) { return v < floor ? floor : v; },
        [floor](double v) { return v < floor ? 0.0 : 1.0; });
}

Tensor custom_unary(const Tensor& x, std::function<double(double)> f,
                    std::function<double(double)> dfdx, const char* name) {
    return unary_op(name, x, [&f](double v) { return f(v); },
                    [dfdx](double v) { return dfdx(v); });
}

// ------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t r = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], c = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree for shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    std::vector<double> out(r * c, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] += aip * bv[p * c + j];
        }
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor result(make_node({r, c}, std::move(out), rg));
    maybe_record("matmul", result,
                 [an = a.node(), bn = b.node(), r, k, c](const detail::Node& o) {
                     if (an->requires_grad) {
                         an->ensure_grad();  // dA = G . B^T
                         for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t p = 0; p < k; ++p) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < c; ++j)
                                     acc += o.grad[i * c + j] * bn->value[p * c + j];
                                 an->grad[i * k + p] += acc;
                             }
                     }
                     if (bn->requires_grad) {
                         bn->ensure_grad();  // dB = A^T . G
                         for (std::size_t p = 0; p < k; ++p)
                             for (std::size_t j = 0; j < c; ++j) {
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < r; ++i)
                                     acc += an->value[i * k + p] * o.grad[i * c + j];
                                 bn->grad[p * c + j] += acc;
                             }
                     }
                 });
    return result;
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2)
        throw ShapeError("transpose: expected rank-2, got " + shape_str(x.shape()));
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    std::vector<double> out(r * c);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    Tensor result(make_node({c, r}, std::move(out), x.requires_grad()));
    maybe_record("transpose", result, [xn = x.node(), r, c](const detail::Node& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += o.grad[j * r + i];
    });
    return result;
}

// ----------------------------------------------------------- reductions

namespace {

void check_nonempty(const Tensor& x, const char* op) {
    if (x.size() == 0)
        throw ShapeError(std::string(op) + ": reduction over empty tensor of shape " +
                         shape_str(x.shape()));
}

struct AxisPlan {
    std::size_t outer, n, inner;
};

AxisPlan axis_plan(const Tensor& x, std::size_t axis, const char* op) {
    if (axis >= x.rank())
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(x.shape()));
    if (x.shape()[axis] == 0)
        throw ShapeError(std::string(op) + ": reduction over empty axis " +
                         std::to_string(axis) + " of shape " + shape_str(x.shape()));
    AxisPlan p{1, x.shape()[axis], 1};
    for (std::size_t d = 0; d < axis; ++d) p.outer *= x.shape()[d];
    for (std::size_t d = axis + 1; d < x.rank(); ++d) p.inner *= x.shape()[d];
    return p;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape out;
    for (std::size_t d = 0; d < s.size(); ++d)
        if (d != axis) out.push_back(s[d]);
    return out;
}

}  // namespace

Tensor sum(const Tensor& x) {
    check_nonempty(x, "sum");
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor result(make_node({}, {acc}, x.requires_grad()));
    maybe_record("sum", result, [xn = x.node()](const detail::Node& o) {
        xn->ensure_grad();
        for (auto& g : xn->grad) g += o.grad[0];
    });
    return result;
}

Tensor sum(const Tensor& x, std::size_t axis) {
    AxisPlan p = axis_plan(x, axis, "sum");
    std::vector<double> out(p.outer * p.inner, 0.0);
    const auto& xv = x.values();
    for (std::size_t o = 0; o < p.outer; ++o)
        for (std::size_t j = 0; j < p.n; ++j)
            for (std::size_t i = 0; i < p.inner; ++i)
                out[o * p.inner + i] += xv[(o * p.n + j) * p.inner + i];
    Tensor result(make_node(drop_axis(x.shape(), axis), std::move(out), x.requires_grad()));
    maybe_record("sum", result, [xn = x.node(), p](const detail::Node& o) {
        xn->ensure_grad();
        for (std::size_t ot = 0; ot < p.outer; ++ot)
            for (std::size_t j = 0; j < p.n; ++j)
                for (std::size_t i = 0; i < p.inner; ++i)
                    xn->grad[(ot * p.n + j) * p.inner + i] += o.grad[ot * p.inner + i];
    });
    return result;
}

Tensor mean(const Tensor& x) {
    check_nonempty(x, "mean");
    return sum(x) * (1.0 / static_cast<double>(x.size()));
}

Tensor mean(const Tensor& x, std::size_t axis) {
    AxisPlan p = axis_plan(x, axis, "mean");
    return sum(x, axis) * (1.0 / static_cast<double>(p.n));
}

Tensor logsumexp(const Tensor& x) {
    check_nonempty(x, "logsumexp");
    const auto& xv = x.values();
    double m = xv[0];
    for (double v : xv) m = std::max(m, v);
    double s = 0.0;
    for (double v : xv) s += std::exp(v - m);
    const double lse = m + std::log(s);
    Tensor result(make_node({}, {lse}, x.requires_grad()));
    maybe_record("logsumexp", result, [xn = x.node(), lse](const detail::Node& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->grad.size(); ++i)
            xn->grad[i] += o.grad[0] * std::exp(xn->value[i] - lse);
    });
    return result;
}

Tensor logsumexp(const Tensor& x, std::size_t axis) {
    AxisPlan p = axis_plan(x, axis, "logsumexp");
    std::vector<double> out(p.outer * p.inner);
    const auto& xv = x.values();
    for (std::size_t o = 0; o < p.outer; ++o)
        for (std::size_t i = 0; i < p.inner; ++i) {
            double m = xv[(o * p.n) * p.inner + i];
            for (std::size_t j = 1; j < p.n; ++j)
                m = std::max(m, xv[(o * p.n + j) * p.inner + i]);
            double s = 0.0;
            for (std::size_t j = 0; j < p.n; ++j)
                s += std::exp(xv[(o * p.n + j) * p.inner + i] - m);
            out[o * p.inner + i] = m + std::log(s);
        }
    Tensor result(
        make_node(drop_axis(x.shape(), axis), std::move(out), x.requires_grad()));
    maybe_record("logsumexp", result,
                 [xn = x.node(), p, ov = result.node()](const detail::Node& o) {
                     xn->ensure_grad();
                     for (std::size_t ot = 0; ot < p.outer; ++ot)
                         for (std::size_t j = 0; j < p.n; ++j)
                             for (std::size_t i = 0; i < p.inner; ++i) {
                                 const std::size_t oi = ot * p.inner + i;
                                 xn->grad[(ot * p.n + j) * p.inner + i] +=
                                     o.grad[oi] *
                                     std::exp(xn->value[(ot * p.n + j) * p.inner + i] -
                                              ov->value[oi]);
                             }
                 });
    return result;
}

Tensor reduce_max(const Tensor& x) {
    check_nonempty(x, "reduce_max");
    const auto& xv = x.values();
    std::size_t arg = 0;
    for (std::size_t i = 1; i < xv.size(); ++i)
        if (xv[i] > xv[arg]) arg = i;
    Tensor result(make_node({}, {xv[arg]}, x.requires_grad()));
    maybe_record("reduce_max", result, [xn = x.node(), arg](const detail::Node& o) {
        xn->ensure_grad();
        xn->grad[arg] += o.grad[0];
    });
    return result;
}

Tensor reduce_max(const Tensor& x, std::size_t axis) {
    AxisPlan p = axis_plan(x, axis, "reduce_max");
    std::vector<double> out(p.outer * p.inner);
    std::vector<std::size_t> args(p.outer * p.inner, 0);
    const auto& xv = x.values();
    for (std::size_t o = 0; o < p.outer; ++o)
        for (std::size_t i = 0; i < p.inner; ++i) {
            std::size_t arg = 0;
            double m = xv[(o * p.n) * p.inner + i];
            for (std::size_t j = 1; j < p.n; ++j) {
                const double v = xv[(o * p.n + j) * p.inner + i];
                if (v > m) {
                    m = v;
                    arg = j;
                }
            }
            out[o * p.inner + i] = m;
            args[o * p.inner + i] = arg;
        }
    Tensor result(
        make_node(drop_axis(x.shape(), axis), std::move(out), x.requires_grad()));
    maybe_record("reduce_max", result,
                 [xn = x.node(), p, args = std::move(args)](const detail::Node& o) {
                     xn->ensure_grad();
                     for (std::size_t ot = 0; ot < p.outer; ++ot)
                         for (std::size_t i = 0; i < p.inner; ++i) {
                             const std::size_t oi = ot * p.inner + i;
                             xn->grad[(ot * p.n + args[oi]) * p.inner + i] += o.grad[oi];
                         }
                 });
    return result;
}

// ----------------------------------------------------------- structural

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    Tensor result(make_node(std::move(shape), x.values(), x.requires_grad()));
    maybe_record("reshape", result, [xn = x.node()](const detail::Node& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
    });
    return result;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() == 0 || a.rank() > 2)
        throw ShapeError("concat: expected equal rank 1 or 2, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    if (a.rank() == 2 && a.shape()[0] != b.shape()[0])
        throw ShapeError("concat: row counts differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    const std::size_t rows = a.rank() == 2 ? a.shape()[0] : 1;
    const std::size_t ca = a.shape().back(), cb = b.shape().back();
    std::vector<double> out(rows * (ca + cb));
    for (std::size_t rix = 0; rix < rows; ++rix) {
        for (std::size_t j = 0; j < ca; ++j)
            out[rix * (ca + cb) + j] = a.values()[rix * ca + j];
        for (std::size_t j = 0; j < cb; ++j)
            out[rix * (ca + cb) + ca + j] = b.values()[rix * cb + j];
    }
    Shape oshape = a.shape();
    oshape.back() = ca + cb;
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor result(make_node(std::move(oshape), std::move(out), rg));
    maybe_record("concat", result,
                 [an = a.node(), bn = b.node(), rows, ca, cb](const detail::Node& o) {
                     if (an->requires_grad) {
                         an->ensure_grad();
                         for (std::size_t rix = 0; rix < rows; ++rix)
                             for (std::size_t j = 0; j < ca; ++j)
                                 an->grad[rix * ca + j] += o.grad[rix * (ca + cb) + j];
                     }
                     if (bn->requires_grad) {
                         bn->ensure_grad();
                         for (std::size_t rix = 0; rix < rows; ++rix)
                             for (std::size_t j = 0; j < cb; ++j)
                                 bn->grad[rix * cb + j] +=
                                     o.grad[rix * (ca + cb) + ca + j];
                     }
                 });
    return result;
}

Tensor row(const Tensor& x, std::size_t i) {
    if (x.rank() != 2)
        throw ShapeError("row: expected rank-2, got " + shape_str(x.shape()));
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    if (i >= r)
        throw std::out_of_range("row: index " + std::to_string(i) +
                                " out of range for " + shape_str(x.shape()));
    std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(i * c),
                            x.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    Tensor result(make_node({c}, std::move(out), x.requires_grad()));
    maybe_record("row", result, [xn = x.node(), i, c](const detail::Node& o) {
        xn->ensure_grad();
        for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += o.grad[j];
    });
    return result;
}

Tensor element(const Tensor& x, std::size_t i) {
    if (i >= x.size())
        throw std::out_of_range("element: index " + std::to_string(i) +
                                " out of range for " + shape_str(x.shape()));
    Tensor result(make_node({}, {x.values()[i]}, x.requires_grad()));
    maybe_record("element", result, [xn = x.node(), i](const detail::Node& o) {
        xn->ensure_grad();
        xn->grad[i] += o.grad[0];
    });
    return result;
}

Tensor slice(const Tensor& x, std::size_t start, std::size_t len) {
    if (x.rank() != 1)
        throw ShapeError("slice: expected rank-1, got " + shape_str(x.shape()));
    if (start + len > x.size())
        throw std::out_of_range("slice: [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of range for " +
                                shape_str(x.shape()));
    std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(start),
                            x.values().begin() + static_cast<std::ptrdiff_t>(start + len));
    Tensor result(make_node({len}, std::move(out), x.requires_grad()));
    maybe_record("slice", result, [xn = x.node(), start](const detail::Node& o) {
        xn->ensure_grad();
        for (std::size_t j = 0; j < o.grad.size(); ++j) xn->grad[start + j] += o.grad[j];
    });
    return result;
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("stack_scalars: empty input");
    std::vector<double> out(xs.size());
    bool rg = false;
    std::vector<detail::NodePtr> parents;
    parents.reserve(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (xs[k].size() != 1)
            throw ShapeError("stack_scalars: element " + std::to_string(k) +
                             " has shape " + shape_str(xs[k].shape()));
        out[k] = xs[k].values()[0];
        rg = rg || xs[k].requires_grad();
        parents.push_back(xs[k].node());
    }
    Tensor result(make_node({xs.size()}, std::move(out), rg));
    maybe_record("stack_scalars", result,
                 [parents = std::move(parents)](const detail::Node& o) {
                     for (std::size_t k = 0; k < parents.size(); ++k) {
                         if (!parents[k]->requires_grad) continue;
                         parents[k]->ensure_grad();
                         parents[k]->grad[0] += o.grad[k];
                     }
                 });
    return result;
}

}  // namespace memvae
