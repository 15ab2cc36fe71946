#pragma once

// Test-only oracles, independent of the library's gradient path:
//  - central finite differences over named parameter lists
//  - Monte Carlo mean/stderr accumulation
// Keep these free of any dependency on Tape::backward so they stay a
// trustworthy second route.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "memvae/nn.hpp"
#include "memvae/tensor.hpp"

namespace memvae::test {

// Relative error with the guarded denominator used throughout the suite.
inline double rel_err(double analytic, double numeric) {
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

struct FdResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0, worst_numeric = 0.0;
};

// Central finite differences of f() w.r.t. every element of every parameter,
// compared against the grads already accumulated in the parameters.
// f must re-run the full forward pass from the current parameter values.
inline FdResult fd_check(ParamList& params, const std::function<double()>& f,
                         double step = 1e-5) {
    FdResult res;
    for (auto& [name, p] : params) {
        const std::vector<double>& g = p.grad();
        for (std::size_t i = 0; i < p.size(); ++i) {
            double* v = p.data() + i;
            const double saved = *v;
            *v = saved + step;
            const double up = f();
            *v = saved - step;
            const double down = f();
            *v = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double e = rel_err(g[i], numeric);
            if (e > res.max_rel_err) {
                res.max_rel_err = e;
                res.worst_param = name;
                res.worst_index = i;
                res.worst_analytic = g[i];
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

// Finite differences for a single tensor treated as the only variable.
inline std::vector<double> fd_grad(Tensor& x, const std::function<double()>& f,
                                   double step = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double* v = x.data() + i;
        const double saved = *v;
        *v = saved + step;
        const double up = f();
        *v = saved - step;
        const double down = f();
        *v = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

// Streaming mean / standard error (Welford).
class MeanAccumulator {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stderror() const {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
};

// Per-coordinate mean / stderr over vector-valued samples.
class VectorMeanAccumulator {
public:
    explicit VectorMeanAccumulator(std::size_t dim) : acc_(dim) {}
    void add(const std::vector<double>& x) {
        for (std::size_t i = 0; i < acc_.size(); ++i) acc_[i].add(x[i]);
    }
    std::size_t dim() const { return acc_.size(); }
    const MeanAccumulator& coord(std::size_t i) const { return acc_[i]; }

private:
    std::vector<MeanAccumulator> acc_;
};

}  // namespace memvae::test
