#pragma once

#include <optional>
#include <vector>

#include "memvae/distributions.hpp"
#include "memvae/memory.hpp"
#include "memvae/nn.hpp"
#include "memvae/rng.hpp"
#include "memvae/tensor.hpp"

namespace memvae {

// One draw (a, z) from the joint approximate posterior together with all
// five log-density factors of the importance weight
// log w = log p(a) + log p(z|m_a) + log p(x|z,m_a) - log q(a|x) - log q(z|m_a,x).
struct JointSample {
    std::size_t a = 0;
    Tensor z;    // [z_dim]; empty when z_dim == 0
    Tensor m;    // the retrieved memory row
    Tensor log_q_a, log_q_z, log_p_a, log_p_z, log_p_x;

    CategoricalDist q_a, p_a;
    std::optional<DiagGaussianDist> q_z, p_z;  // absent when z_dim == 0

    Tensor log_weight() const;  // log-importance weight, on the tape
};

struct ElboTerms {
    Tensor recon, kl_a, kl_z;
    Tensor elbo() const;  // recon - kl_a - kl_z
};

struct GeneratedSample {
    std::size_t address = 0;
    std::vector<double> pixels;       // binary draw
    std::vector<double> mean_pixels;  // decoder mean, for inspection grids
};

struct MemVaeConfig {
    std::size_t d_x = 64;
    std::size_t z_dim = 8;
    std::size_t e_dim = 32;
    std::vector<std::size_t> enc_hidden{64, 32};      // q(z|m_a, x)
    std::vector<std::size_t> dec_hidden{64, 32};      // p(x|z, m_a)
    std::vector<std::size_t> prior_z_hidden{32};      // p(z|m_a)
    std::vector<std::size_t> emb_hidden{128};         // h_mem / h_query
    SimilarityKind similarity = SimilarityKind::normalized_inner;
    PriorMode prior_mode = PriorMode::learned;
};

// Hard-attention memory model: p(x|M) = sum_a p(a|M) int p(z|m_a) p(x|z,m_a) dz
// with posterior q(a|M,x) q(z|m_a,x).
class MemVae {
public:
    MemVae(MemVaeConfig cfg, MemoryBuffer mem, Rng& rng);

    const MemVaeConfig& config() const { return cfg_; }
    MemoryBuffer& memory() { return mem_; }
    const MemoryBuffer& memory() const { return mem_; }
    void set_memory(MemoryBuffer mem);
    EmbeddingNets& nets() { return nets_; }

    // Embeds the current memory once; callers reuse the result for every
    // query of the step.
    Tensor embed_memory() const;

    CategoricalDist address_posterior(const Tensor& emem, const Tensor& x) const;
    CategoricalDist address_prior(const Tensor& emem) const;

    DiagGaussianDist z_prior(const Tensor& m) const;                      // p(z|m_a)
    DiagGaussianDist z_posterior(const Tensor& x, const Tensor& m) const; // q(z|m_a,x)
    BernoulliDist decode(const Tensor& z, const Tensor& m) const;         // p(x|z,m_a)

    JointSample joint_sample(const Tensor& emem, const Tensor& x, Rng& rng) const;
    // Same factor evaluation with the stochastic draws pinned; used by the
    // finite-difference checks and the IWAE reference path.
    JointSample joint_sample_at(const Tensor& emem, const Tensor& x, std::size_t a,
                                const std::vector<double>& eps) const;

    // Enumeration-over-addresses estimate of log p(x|M) with z_draws
    // importance samples per address; exact when z_dim == 0. Test oracle for
    // the variational bounds.
    double marginal_log_likelihood(const Tensor& x, std::size_t z_draws,
                                   Rng& rng) const;

    // Ancestral sampling; with fixed_address set, every sample reuses that
    // memory slot (row-sampling mode for sample grids).
    std::vector<GeneratedSample> generate(Rng& rng, std::size_t n,
                                          std::optional<std::size_t> fixed_address = {}) const;

    ParamList params();  // includes memory entries when trainable

private:
    JointSample finish_sample(const Tensor& emem, const Tensor& x,
                              CategoricalDist q_a, std::size_t a,
                              const std::vector<double>& eps) const;

    MemVaeConfig cfg_;
    MemoryBuffer mem_;
    EmbeddingNets nets_;
    Mlp prior_z_net_;      // m_a -> (mu, log_var) of p(z|m_a)
    Mlp posterior_z_net_;  // concat(x, m_a) -> (mu, log_var) of q(z|m_a, x)
    Mlp decoder_;          // concat(z, m_a) -> Bernoulli logits
};

ElboTerms elbo_terms(const JointSample& s);

// ------------------------------------------------------------------------

struct BaselineVaeConfig {
    std::size_t d_x = 64;
    std::size_t z_dim = 8;
    std::vector<std::size_t> enc_hidden{64, 32};
    std::vector<std::size_t> dec_hidden{64, 32};
};

// Plain unconditioned VAE with a standard-normal prior.
class BaselineVae {
public:
    BaselineVae(BaselineVaeConfig cfg, Rng& rng);

    const BaselineVaeConfig& config() const { return cfg_; }
    DiagGaussianDist posterior(const Tensor& x) const;
    BernoulliDist decode(const Tensor& z) const;

    // recon - kl_z with a single reparameterized draw and analytic KL.
    ElboTerms forward(const Tensor& x, Rng& rng) const;
    Tensor sample_log_weight(const Tensor& x, Rng& rng) const;

    ParamList params();

private:
    BaselineVaeConfig cfg_;
    Mlp encoder_, decoder_;
};

// ------------------------------------------------------------------------

struct SoftAttentionConfig {
    std::size_t d_x = 64;
    std::size_t z_dim = 8;
    std::size_t e_dim = 32;
    std::vector<std::size_t> enc_hidden{64, 32};
    std::vector<std::size_t> dec_hidden{64, 32};
    std::vector<std::size_t> attn_hidden{32};  // z -> query and m -> embedding
    SimilarityKind similarity = SimilarityKind::normalized_inner;
};

// Soft-attention baseline: the readout weights depend only on the generative
// variable z, m(z) = sum_a softmax(S(e_a, g(z)))_a m_a, and the decoder sees
// the convex blend. Queries are similarity-based so the same net works for
// any memory size.
class SoftAttentionVae {
public:
    SoftAttentionVae(SoftAttentionConfig cfg, MemoryBuffer mem, Rng& rng);

    const SoftAttentionConfig& config() const { return cfg_; }
    MemoryBuffer& memory() { return mem_; }
    void set_memory(MemoryBuffer mem);

    Tensor embed_memory() const;  // [M x e]
    DiagGaussianDist posterior(const Tensor& x) const;
    // Attention weights over slots; a valid categorical by construction.
    Tensor attention_weights(const Tensor& emem, const Tensor& z) const;  // [M]
    Tensor memory_readout(const Tensor& emem, const Tensor& z) const;     // [D_x]
    BernoulliDist decode(const Tensor& z, const Tensor& readout) const;

    ElboTerms forward(const Tensor& emem, const Tensor& x, Rng& rng) const;
    Tensor sample_log_weight(const Tensor& emem, const Tensor& x, Rng& rng) const;

    ParamList params();

private:
    SoftAttentionConfig cfg_;
    MemoryBuffer mem_;
    Mlp encoder_;    // x -> (mu, log_var)
    Mlp z_query_;    // z -> e
    Mlp mem_embed_;  // m -> e
    Mlp decoder_;    // concat(z, m(z)) -> logits
};

}  // namespace memvae
