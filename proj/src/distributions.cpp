#include "memvae/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace memvae {

// ------------------------------------------------------------ Categorical

CategoricalDist::CategoricalDist(Tensor logits) : logits_(std::move(logits)) {
    if (logits_.rank() != 1 || logits_.size() == 0)
        throw ShapeError("CategoricalDist: logits must be a non-empty vector, got " +
                         shape_str(logits_.shape()));
    log_probs_ = sub(logits_, logsumexp(logits_));
}

CategoricalDist CategoricalDist::uniform(std::size_t support) {
    return CategoricalDist(Tensor::zeros({support}));
}

Tensor CategoricalDist::log_prob(std::size_t index) const {
    if (index >= size())
        throw std::out_of_range("CategoricalDist::log_prob: index " +
                                std::to_string(index) + " not in [0, " +
                                std::to_string(size()) + ")");
    return element(log_probs_, index);
}

std::vector<double> CategoricalDist::probs() const {
    std::vector<double> p(size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_probs_.at(i));
    return p;
}

std::size_t CategoricalDist::sample(Rng& rng) const {
    const std::vector<double> p = probs();
    return rng.categorical(p);
}

Tensor kl_categorical(const CategoricalDist& q, const CategoricalDist& p) {
    if (q.size() != p.size())
        throw ShapeError("kl_categorical: support sizes differ, " +
                         std::to_string(q.size()) + " vs " + std::to_string(p.size()));
    // sum_a q_a (log q_a - log p_a)
    return sum(mul(exp(q.log_probs()), sub(q.log_probs(), p.log_probs())));
}

// ---------------------------------------------------------- DiagGaussian

DiagGaussianDist::DiagGaussianDist(Tensor mean, Tensor log_var)
    : mean_(std::move(mean)), log_var_(std::move(log_var)) {
    if (mean_.shape() != log_var_.shape() || mean_.rank() != 1)
        throw ShapeError("DiagGaussianDist: mean " + shape_str(mean_.shape()) +
                         " and log_var " + shape_str(log_var_.shape()) +
                         " must be equal-length vectors");
}

DiagGaussianDist DiagGaussianDist::standard(std::size_t dim) {
    return DiagGaussianDist(Tensor::zeros({dim}), Tensor::zeros({dim}));
}

Tensor DiagGaussianDist::log_prob(const Tensor& z) const {
    if (z.shape() != mean_.shape())
        throw ShapeError("DiagGaussianDist::log_prob: z " + shape_str(z.shape()) +
                         " does not match mean " + shape_str(mean_.shape()));
    if (dim() == 0) return Tensor::scalar(0.0);
    constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
    Tensor diff = sub(z, mean_);
    Tensor quad = mul(mul(diff, diff), exp(neg(log_var_)));
    return sum(-0.5 * (add(add(quad, log_var_), Tensor::scalar(kLog2Pi))));
}

Tensor DiagGaussianDist::sample_reparam(Rng& rng) const {
    return sample_with(rng.normal_vec(dim()));
}

Tensor DiagGaussianDist::sample_with(const std::vector<double>& eps) const {
    if (eps.size() != dim())
        throw ShapeError("DiagGaussianDist: noise size " + std::to_string(eps.size()) +
                         " does not match dim " + std::to_string(dim()));
    if (dim() == 0) return Tensor::zeros({0});
    Tensor e = Tensor::from(eps);
    return add(mean_, mul(exp(0.5 * log_var_), e));
}

Tensor kl_diag_gaussian(const DiagGaussianDist& q, const DiagGaussianDist& p) {
    if (q.dim() != p.dim())
        throw ShapeError("kl_diag_gaussian: dims differ, " + std::to_string(q.dim()) +
                         " vs " + std::to_string(p.dim()));
    if (q.dim() == 0) return Tensor::scalar(0.0);
    // 0.5 * sum( exp(lq - lp) + (mq - mp)^2 exp(-lp) - 1 + lp - lq )
    Tensor dmean = sub(q.mean(), p.mean());
    Tensor t = add(exp(sub(q.log_var(), p.log_var())),
                   mul(mul(dmean, dmean), exp(neg(p.log_var()))));
    t = add(sub(t, Tensor::scalar(1.0)), sub(p.log_var(), q.log_var()));
    return 0.5 * sum(t);
}

// ------------------------------------------------------------- Bernoulli

BernoulliDist::BernoulliDist(Tensor logits) : logits_(std::move(logits)) {
    if (logits_.rank() != 1)
        throw ShapeError("BernoulliDist: logits must be a vector, got " +
                         shape_str(logits_.shape()));
}

Tensor BernoulliDist::log_prob(const Tensor& x) const {
    if (x.shape() != logits_.shape())
        throw ShapeError("BernoulliDist::log_prob: x " + shape_str(x.shape()) +
                         " does not match logits " + shape_str(logits_.shape()));
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i)
        if (xv[i] != 0.0 && xv[i] != 1.0)
            throw DomainError("BernoulliDist::log_prob: non-binary pixel " +
                                  std::to_string(xv[i]) + " at index " +
                                  std::to_string(i),
                              i);
    // sum_i [ x_i * l_i - softplus(l_i) ]
    return sum(sub(mul(x, logits_), softplus(logits_)));
}

std::vector<double> BernoulliDist::sample(Rng& rng) const {
    std::vector<double> out(dim());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits_.at(i)));
        out[i] = rng.bernoulli(p) ? 1.0 : 0.0;
    }
    return out;
}

}  // namespace memvae
