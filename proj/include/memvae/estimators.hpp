#pragma once

#include <map>
#include <string>
#include <vector>

#include "memvae/models.hpp"

namespace memvae {

// K posterior draws with everything the multi-sample bound and the VIMCO
// update need: log importance weights (on the tape), normalized weights and
// leave-one-out learning signals (held as constants), and the bound
// logsumexp(log_w) - log K.
struct SampleSet {
    std::vector<JointSample> samples;
    Tensor log_w;            // [K], differentiable
    Tensor norm_w;           // [K], constants summing to 1
    Tensor learning_signal;  // [K], constants; only defined for K >= 2
    Tensor bound;            // scalar, differentiable

    std::size_t k() const { return samples.size(); }
};

// Draws K samples from q(a|x) q(z|m_a, x) and assembles the K-sample bound.
SampleSet multi_sample_bound(const MemVae& model, const Tensor& emem,
                             const Tensor& x, std::size_t k, Rng& rng);

// Per-sample learning signal
//   w_phi^(k) = log(1/K sum_k' w~) - log(1/(K-1) sum_{k'!=k} w~) - w^(k)
// computed in log space with max-shifted exclusion of sample k. Requires
// K >= 2 (the leave-one-out term is undefined at K = 1).
Tensor vimco_learning_signal(const Tensor& log_w);

// The scalar surrogate whose tape gradient realizes the VIMCO estimator:
//   sum_k [ w^(k) (log p(a,z,x)^(k) - log q(z|.)^(k)) + w_phi^(k) log q(a^(k)|x) ]
// with w and w_phi treated as constants. z-path gradients flow pathwise
// through the reparameterized samples.
Tensor vimco_surrogate(const SampleSet& set);

using GradMap = std::map<std::string, std::vector<double>>;

GradMap snapshot_grads(ParamList& params);

// One full gradient evaluation on a fresh tape: K samples, surrogate,
// backward. Parameter grads are zeroed first; the returned map holds the
// gradients of this single draw.
GradMap step_gradients(MemVae& model, const Tensor& x, std::size_t k, Rng& rng);

// Exact E[bound] over all |M|^K ordered address tuples, on the live tape.
// Requires z_dim == 0 and |M|^K <= 10^4. Test oracle for the VIMCO path.
Tensor enumerate_bound_expectation(const MemVae& model, const Tensor& emem,
                                   const Tensor& x, std::size_t k);

// Exact gradient of E[bound] for the addressing toy model.
GradMap enumerate_bound_gradient(MemVae& model, const Tensor& x, std::size_t k);

}  // namespace memvae
