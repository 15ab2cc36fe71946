#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "memvae/errors.hpp"

namespace memvae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;

    std::size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

// Dense row-major tensor of 64-bit floats. A Tensor is a cheap handle to a
// shared node; values are written once by the producing op. Gradients
// accumulate in the node when a Tape is active and the node requires grad.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(std::vector<double> values);  // rank-1
    static Tensor from(std::vector<double> values, Shape shape,
                       bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }

    const std::vector<double>& values() const { return node_->value; }
    double at(std::size_t flat_index) const { return node_->value[flat_index]; }
    double item() const;       // requires numel == 1
    double* data() { return node_->value.data(); }  // leaf editing only

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad() { node_->grad.clear(); }

    // Value copy detached from any gradient path.
    Tensor detached() const;

    detail::NodePtr node() const { return node_; }
    friend bool same_node(const Tensor& a, const Tensor& b) {
        return a.node_ == b.node_;
    }

private:
    detail::NodePtr node_;
};

// Reverse-mode tape. Constructing a Tape makes it the active tape for the
// current thread (ops record onto it); destruction deactivates and clears it,
// releasing every intermediate node it kept alive. One tape per worker;
// entries are recorded in creation order, so replaying them in reverse
// visits each node after all of its consumers.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // Accumulates d(root)/d(leaf) into every reachable leaf with
    // requires_grad. root must be a scalar produced on this tape. Repeated
    // calls accumulate additively into leaf grads.
    void backward(const Tensor& root);

    void clear();
    std::size_t size() const { return entries_.size(); }
    std::size_t count_op(std::string_view name) const;

    // Low-level hook: register a computed node together with the function
    // that pulls its adjoint back into its parents.
    void record(const char* op, detail::NodePtr out,
                std::function<void(const detail::Node&)> pull);

private:
    struct Entry {
        const char* op;
        detail::NodePtr out;
        std::function<void(const detail::Node&)> pull;
    };
    std::vector<Entry> entries_;
};

// ---- elementwise (trailing-dimension broadcasting for binary ops) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // DomainError on non-positive input
Tensor sqrt(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);  // adjoint at exactly 0 is 0
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);

// Test/extension hook: elementwise unary op with user-supplied forward and
// derivative functions.
Tensor custom_unary(const Tensor& x, std::function<double(double)> f,
                    std::function<double(double)> dfdx,
                    const char* name = "custom_unary");

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [r x k] . [k x c]
Tensor transpose(const Tensor& x);                // rank-2

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor logsumexp(const Tensor& x);  // max-shifted, overflow-safe
Tensor logsumexp(const Tensor& x, std::size_t axis);
Tensor reduce_max(const Tensor& x);  // adjoint routes to first argmax only
Tensor reduce_max(const Tensor& x, std::size_t axis);

// ---- structural ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const Tensor& a, const Tensor& b);   // along last axis
Tensor row(const Tensor& x, std::size_t i);        // rank-2 -> rank-1
Tensor element(const Tensor& x, std::size_t i);    // flat index -> scalar
Tensor slice(const Tensor& x, std::size_t start, std::size_t len);  // rank-1
Tensor stack_scalars(const std::vector<Tensor>& xs);  // K scalars -> [K]

}  // namespace memvae
