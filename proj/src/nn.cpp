#include "memvae/nn.hpp"

#include <cmath>

namespace memvae {

std::size_t ParamList::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
}

Tensor* ParamList::find(const std::string& name) {
    for (auto& [n, t] : items_)
        if (n == name) return &t;
    return nullptr;
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
    // He initialization; biases start at zero.
    const double scale = std::sqrt(2.0 / static_cast<double>(in > 0 ? in : 1));
    std::vector<double> wv(in * out);
    for (auto& v : wv) v = scale * rng.normal();
    Linear l;
    l.w = Tensor::from(std::move(wv), {in, out}, /*requires_grad=*/true);
    l.b = Tensor::zeros({out}, /*requires_grad=*/true);
    return l;
}

Tensor Linear::forward(const Tensor& x) const {
    const std::size_t in = w.shape()[0], out = w.shape()[1];
    if (x.rank() == 1) {
        if (x.size() != in)
            throw ShapeError("Linear: input " + shape_str(x.shape()) +
                             " does not match weight " + shape_str(w.shape()));
        Tensor y = matmul(reshape(x, {1, in}), w);
        return add(reshape(y, {out}), b);
    }
    return add(matmul(x, w), b);  // [B x in] . [in x out] + [out]
}

Mlp Mlp::init(const std::vector<std::size_t>& sizes, Rng& rng) {
    if (sizes.size() < 2) throw ShapeError("Mlp: need at least input and output sizes");
    Mlp m;
    m.in_dim_ = sizes.front();
    m.out_dim_ = sizes.back();
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
        m.layers_.push_back(Linear::init(sizes[i], sizes[i + 1], rng));
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].forward(h);
        if (i + 1 < layers_.size()) h = relu(h);
    }
    return h;
}

void Mlp::collect_params(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        out.add(prefix + ".l" + std::to_string(i) + ".w", layers_[i].w);
        out.add(prefix + ".l" + std::to_string(i) + ".b", layers_[i].b);
    }
}

}  // namespace memvae
