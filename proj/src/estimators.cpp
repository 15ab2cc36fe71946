#include "memvae/estimators.hpp"

#include <cmath>
#include <limits>

namespace memvae {

SampleSet multi_sample_bound(const MemVae& model, const Tensor& emem,
                             const Tensor& x, std::size_t k, Rng& rng) {
    if (k < 1) throw std::invalid_argument("multi_sample_bound: K must be >= 1");
    SampleSet set;
    set.samples.reserve(k);
    std::vector<Tensor> log_ws;
    log_ws.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        set.samples.push_back(model.joint_sample(emem, x, rng));
        log_ws.push_back(set.samples.back().log_weight());
    }
    set.log_w = stack_scalars(log_ws);
    set.bound = sub(logsumexp(set.log_w), Tensor::scalar(std::log(static_cast<double>(k))));

    // normalized weights as constants (stop-grad)
    const double lse = logsumexp(set.log_w.detached()).item();
    std::vector<double> w(k);
    for (std::size_t i = 0; i < k; ++i) w[i] = std::exp(set.log_w.at(i) - lse);
    set.norm_w = Tensor::from(std::move(w));

    if (k >= 2) set.learning_signal = vimco_learning_signal(set.log_w);
    return set;
}

Tensor vimco_learning_signal(const Tensor& log_w) {
    if (log_w.rank() != 1)
        throw ShapeError("vimco_learning_signal: expected a vector of log weights");
    const std::size_t k = log_w.size();
    if (k < 2)
        throw std::invalid_argument(
            "vimco_learning_signal: K must be >= 2, the leave-one-out term is "
            "undefined at K = 1");
    const auto& lw = log_w.values();

    double m_all = lw[0];
    for (double v : lw) m_all = std::max(m_all, v);
    double s_all = 0.0;
    for (double v : lw) s_all += std::exp(v - m_all);
    const double lse_all = m_all + std::log(s_all);
    const double log_avg_all = lse_all - std::log(static_cast<double>(k));

    std::vector<double> signal(k);
    for (std::size_t i = 0; i < k; ++i) {
        // leave-one-out logsumexp by max-shifted exclusion, not by
        // subtracting exponentials
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j)
            if (j != i) m = std::max(m, lw[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            if (j != i) s += std::exp(lw[j] - m);
        const double log_avg_loo =
            m + std::log(s) - std::log(static_cast<double>(k - 1));
        const double omega = std::exp(lw[i] - lse_all);
        signal[i] = log_avg_all - log_avg_loo - omega;
    }
    return Tensor::from(std::move(signal));
}

Tensor vimco_surrogate(const SampleSet& set) {
    if (set.k() < 2)
        throw std::invalid_argument("vimco_surrogate: K must be >= 2");
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < set.k(); ++i) {
        const JointSample& s = set.samples[i];
        Tensor path_terms =
            sub(add(add(s.log_p_a, s.log_p_z), s.log_p_x), s.log_q_z);
        Tensor term = add(mul(Tensor::scalar(set.norm_w.at(i)), path_terms),
                          mul(Tensor::scalar(set.learning_signal.at(i)), s.log_q_a));
        total = add(total, term);
    }
    return total;
}

GradMap snapshot_grads(ParamList& params) {
    GradMap out;
    for (auto& [name, t] : params)
        out[name] = t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0);
    return out;
}

GradMap step_gradients(MemVae& model, const Tensor& x, std::size_t k, Rng& rng) {
    if (k < 2) throw std::invalid_argument("step_gradients: K must be >= 2");
    ParamList params = model.params();
    for (auto& [name, t] : params) t.zero_grad();
    {
        Tape tape;
        Tensor emem = model.embed_memory();
        SampleSet set = multi_sample_bound(model, emem, x, k, rng);
        tape.backward(vimco_surrogate(set));
    }
    return snapshot_grads(params);
}

Tensor enumerate_bound_expectation(const MemVae& model, const Tensor& emem,
                                   const Tensor& x, std::size_t k) {
    if (model.config().z_dim != 0)
        throw std::invalid_argument(
            "enumerate_bound_expectation: requires a z_dim == 0 model");
    const std::size_t m = model.memory().slots();
    double tuples = std::pow(static_cast<double>(m), static_cast<double>(k));
    if (tuples > 1e4)
        throw std::invalid_argument("enumerate_bound_expectation: |M|^K = " +
                                    std::to_string(tuples) + " exceeds the 10^4 limit");

    CategoricalDist q = model.address_posterior(emem, x);
    CategoricalDist p = model.address_prior(emem);

    // per-address factors, each computed once
    std::vector<Tensor> log_q(m), log_p(m), log_px(m), log_w(m);
    for (std::size_t a = 0; a < m; ++a) {
        log_q[a] = q.log_prob(a);
        log_p[a] = p.log_prob(a);
        log_px[a] = model.decode(Tensor::zeros({0}), model.memory().read(a)).log_prob(x);
        log_w[a] = sub(add(log_p[a], log_px[a]), log_q[a]);
    }

    const Tensor log_k = Tensor::scalar(std::log(static_cast<double>(k)));
    Tensor expectation = Tensor::scalar(0.0);
    std::vector<std::size_t> tuple(k, 0);
    while (true) {
        Tensor tuple_log_prob = Tensor::scalar(0.0);
        std::vector<Tensor> ws;
        ws.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            tuple_log_prob = add(tuple_log_prob, log_q[tuple[i]]);
            ws.push_back(log_w[tuple[i]]);
        }
        Tensor bound = sub(logsumexp(stack_scalars(ws)), log_k);
        expectation = add(expectation, mul(exp(tuple_log_prob), bound));

        // next ordered tuple
        std::size_t d = 0;
        for (; d < k; ++d) {
            if (++tuple[d] < m) break;
            tuple[d] = 0;
        }
        if (d == k) break;
    }
    return expectation;
}

GradMap enumerate_bound_gradient(MemVae& model, const Tensor& x, std::size_t k) {
    ParamList params = model.params();
    for (auto& [name, t] : params) t.zero_grad();
    {
        Tape tape;
        Tensor emem = model.embed_memory();
        tape.backward(enumerate_bound_expectation(model, emem, x, k));
    }
    return snapshot_grads(params);
}

}  // namespace memvae
