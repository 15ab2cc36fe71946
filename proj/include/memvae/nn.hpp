#pragma once

#include <string>
#include <utility>
#include <vector>

#include "memvae/rng.hpp"
#include "memvae/tensor.hpp"

namespace memvae {

// Ordered list of named trainable tensors. Iteration order is the
// registration order, which keeps optimizer updates and checkpoints
// deterministic.
class ParamList {
public:
    void add(std::string name, Tensor t) { items_.emplace_back(std::move(name), std::move(t)); }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    std::size_t size() const { return items_.size(); }
    std::size_t total_elements() const;

    Tensor* find(const std::string& name);

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

struct Linear {
    Tensor w;  // [in x out]
    Tensor b;  // [out]

    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    Tensor forward(const Tensor& x) const;  // x: [in] or [B x in]
};

// Fully connected network with relu between layers and a linear output.
class Mlp {
public:
    Mlp() = default;
    // sizes = {in, hidden..., out}
    static Mlp init(const std::vector<std::size_t>& sizes, Rng& rng);

    Tensor forward(const Tensor& x) const;
    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }

    void collect_params(const std::string& prefix, ParamList& out) const;

private:
    std::vector<Linear> layers_;
    std::size_t in_dim_ = 0, out_dim_ = 0;
};

}  // namespace memvae
