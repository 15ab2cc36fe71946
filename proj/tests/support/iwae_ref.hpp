#pragma once

// Direct IWAE implementation for a single-slot memory: an independent
// gradient route that step_gradients must reproduce exactly at |M| = 1.
// Kept in test code so it can never share assembly logic with the
// estimator it checks.

#include <cmath>

#include "memvae/estimators.hpp"

namespace memvae::test {

inline GradMap iwae_reference_gradients(MemVae& model, const Tensor& x,
                                        std::size_t k, Rng& rng) {
    ParamList params = model.params();
    for (auto& [name, t] : params) t.zero_grad();
    {
        Tape tape;
        Tensor m = model.memory().read(0);
        std::vector<Tensor> log_ws;
        log_ws.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            (void)rng.uniform01();  // mirror the trivial address draw
            DiagGaussianDist q = model.z_posterior(x, m);
            DiagGaussianDist p = model.z_prior(m);
            Tensor z = q.sample_with(rng.normal_vec(model.config().z_dim));
            log_ws.push_back(
                sub(add(p.log_prob(z), model.decode(z, m).log_prob(x)), q.log_prob(z)));
        }
        Tensor bound = sub(logsumexp(stack_scalars(log_ws)),
                           Tensor::scalar(std::log(static_cast<double>(k))));
        tape.backward(bound);
    }
    return snapshot_grads(params);
}

}  // namespace memvae::test
