#pragma once

#include <cstddef>
#include <vector>

#include "memvae/rng.hpp"
#include "memvae/tensor.hpp"

namespace memvae {

// Categorical over memory addresses. Immutable after construction; the
// normalized log-probabilities are derived from the logits on the live tape,
// so log_prob and KL terms stay differentiable w.r.t. the logits.
class CategoricalDist {
public:
    explicit CategoricalDist(Tensor logits);
    static CategoricalDist uniform(std::size_t support);

    std::size_t size() const { return log_probs_.size(); }
    const Tensor& logits() const { return logits_; }
    const Tensor& log_probs() const { return log_probs_; }

    Tensor log_prob(std::size_t index) const;  // out_of_range on bad index
    std::vector<double> probs() const;

    // Inverse-CDF over a single uniform draw; deterministic given rng state.
    std::size_t sample(Rng& rng) const;

private:
    Tensor logits_;
    Tensor log_probs_;
};

Tensor kl_categorical(const CategoricalDist& q, const CategoricalDist& p);

// Diagonal Gaussian parameterized by mean and log-variance.
class DiagGaussianDist {
public:
    DiagGaussianDist(Tensor mean, Tensor log_var);
    static DiagGaussianDist standard(std::size_t dim);

    std::size_t dim() const { return mean_.size(); }
    const Tensor& mean() const { return mean_; }
    const Tensor& log_var() const { return log_var_; }

    Tensor log_prob(const Tensor& z) const;
    // z = mean + exp(log_var / 2) * eps with eps ~ N(0, I); gradients flow
    // to mean and log_var through the tape.
    Tensor sample_reparam(Rng& rng) const;
    Tensor sample_with(const std::vector<double>& eps) const;  // fixed noise

private:
    Tensor mean_;
    Tensor log_var_;
};

Tensor kl_diag_gaussian(const DiagGaussianDist& q, const DiagGaussianDist& p);

// Factorized Bernoulli over pixels, parameterized by logits so the
// log-likelihood stays finite when the decoder saturates.
class BernoulliDist {
public:
    explicit BernoulliDist(Tensor logits);

    std::size_t dim() const { return logits_.size(); }
    const Tensor& logits() const { return logits_; }
    Tensor mean() const { return sigmoid(logits_); }

    Tensor log_prob(const Tensor& x) const;  // DomainError on non-binary x
    std::vector<double> sample(Rng& rng) const;

private:
    Tensor logits_;
};

}  // namespace memvae
