#include "memvae/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "memvae/checkpoint.hpp"

namespace memvae {

std::string metrics_csv_header() { return "step,nll_bound,kl_a,kl_z,recon,wall_ms"; }

std::string to_csv(const MetricsRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%lld", row.step,
                  row.nll_bound, row.kl_a, row.kl_z, row.recon,
                  static_cast<long long>(row.wall_ms));
    return buf;
}

void adam_step(ParamList& params, AdamState& state, const AdamOptions& opts,
               const std::set<std::string>& exclude) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        auto& mom = state.moments[name];
        if (mom.m.empty()) {
            mom.m.assign(p.size(), 0.0);
            mom.v.assign(p.size(), 0.0);
        }
        if (mom.m.size() != p.size())
            throw ShapeError("adam_step: state size mismatch for " + name);
        const bool decay = opts.weight_decay != 0.0 && !exclude.count(name);
        const std::vector<double>* grad = p.has_grad() ? &p.grad() : nullptr;
        double* pv = p.data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = grad ? (*grad)[i] : 0.0;
            mom.m[i] = opts.beta1 * mom.m[i] + (1.0 - opts.beta1) * g;
            mom.v[i] = opts.beta2 * mom.v[i] + (1.0 - opts.beta2) * g * g;
            const double m_hat = mom.m[i] / bc1;
            const double v_hat = mom.v[i] / bc2;
            double step = m_hat / (std::sqrt(v_hat) + opts.eps);
            if (decay) step += opts.weight_decay * pv[i];
            pv[i] -= opts.lr * step;
        }
    }
}

// ------------------------------------------------------------------ Trainer

Trainer::Trainer(TrainConfig cfg, Dataset dataset)
    : cfg_(std::move(cfg)), dataset_(std::move(dataset)) {
    if (dataset_.d_x != cfg_.d_x())
        throw ConfigError("dataset pixel dim " + std::to_string(dataset_.d_x) +
                          " does not match config img_side^2 = " +
                          std::to_string(cfg_.d_x()));
    Rng init(cfg_.seed, 1);
    switch (cfg_.model) {
        case ModelKind::memvae: {
            MemoryBuffer mem;
            if (cfg_.mode == TrainMode::learned_memory) {
                mem = MemoryBuffer::learned(cfg_.mem_size, cfg_.d_x(), init);
            } else {
                const std::size_t slots = cfg_.mode == TrainMode::few_shot
                                              ? cfg_.episode_classes * cfg_.mem_per_class
                                              : cfg_.mem_size;
                mem = MemoryBuffer::fixed(
                    std::vector<std::vector<double>>(slots, std::vector<double>(cfg_.d_x(), 0.0)));
            }
            model_.emplace<MemVae>(cfg_.memvae_config(), std::move(mem), init);
            break;
        }
        case ModelKind::baseline_vae:
            model_.emplace<BaselineVae>(cfg_.baseline_config(), init);
            break;
        case ModelKind::soft_attention: {
            const std::size_t slots = cfg_.mode == TrainMode::few_shot
                                          ? cfg_.episode_classes * cfg_.mem_per_class
                                          : cfg_.mem_size;
            MemoryBuffer mem = MemoryBuffer::fixed(
                std::vector<std::vector<double>>(slots, std::vector<double>(cfg_.d_x(), 0.0)));
            model_.emplace<SoftAttentionVae>(cfg_.soft_config(), std::move(mem), init);
            break;
        }
    }
}

ParamList Trainer::params() {
    switch (cfg_.model) {
        case ModelKind::memvae: return memvae().params();
        case ModelKind::baseline_vae: return baseline().params();
        case ModelKind::soft_attention: return soft().params();
    }
    throw std::logic_error("Trainer::params: unhandled model kind");
}

void Trainer::save_checkpoint(const std::filesystem::path& path) {
    ParamList p = params();
    memvae::save_checkpoint(path, p);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
    ParamList p = params();
    load_checkpoint_into(path, p);
}

namespace {

std::vector<std::size_t> sample_indices_without_replacement(std::size_t n,
                                                            std::size_t k, Rng& rng) {
    if (k > n)
        throw ConfigError("cannot draw " + std::to_string(k) + " distinct items from " +
                          std::to_string(n));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_int(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace

void Trainer::prepare_memory(std::size_t step, Rng& data_rng,
                             std::vector<std::size_t>& target_indices) {
    (void)step;
    const bool has_memory = cfg_.model != ModelKind::baseline_vae;
    switch (cfg_.mode) {
        case TrainMode::recall: {
            if (!has_memory) break;
            const auto mem_idx =
                sample_indices_without_replacement(dataset_.size(), cfg_.mem_size, data_rng);
            std::vector<std::vector<double>> rows;
            rows.reserve(mem_idx.size());
            for (std::size_t i : mem_idx) rows.push_back(dataset_.images[i]);
            if (cfg_.model == ModelKind::memvae)
                memvae().memory().refresh(std::move(rows));
            else
                soft().memory().refresh(std::move(rows));
            // targets are drawn from the memory itself: x ~ M
            target_indices.clear();
            for (std::size_t b = 0; b < cfg_.batch; ++b)
                target_indices.push_back(mem_idx[data_rng.uniform_int(mem_idx.size())]);
            return;
        }
        case TrainMode::few_shot: {
            if (!has_memory) break;
            Episode ep = sample_episode(dataset_, cfg_.episode_classes,
                                        cfg_.targets_per_class, cfg_.mem_per_class,
                                        data_rng);
            MemoryBuffer mem = episode_memory(dataset_, ep);
            if (cfg_.model == ModelKind::memvae)
                memvae().set_memory(std::move(mem));
            else
                soft().set_memory(std::move(mem));
            target_indices = ep.target_indices;
            return;
        }
        case TrainMode::learned_memory:
            break;
    }
    // learned memory / baseline: plain minibatch from the dataset
    target_indices = sample_indices_without_replacement(
        dataset_.size(), std::min(cfg_.batch, dataset_.size()), data_rng);
}

MetricsRow Trainer::train_step(std::size_t step, Rng& data_rng, Rng& sample_rng) {
    std::vector<std::size_t> target_indices;
    prepare_memory(step, data_rng, target_indices);
    const std::size_t batch = target_indices.size();

    ParamList plist = params();
    for (auto& [name, t] : plist) t.zero_grad();

    MetricsRow row;
    row.step = step;

    Tape tape;
    Tensor objective = Tensor::scalar(0.0);
    Tensor emem;
    if (cfg_.model == ModelKind::memvae)
        emem = memvae().embed_memory();
    else if (cfg_.model == ModelKind::soft_attention)
        emem = soft().embed_memory();

    for (std::size_t bi = 0; bi < batch; ++bi) {
        Tensor x = Tensor::from(dataset_.images[target_indices[bi]]);
        switch (cfg_.model) {
            case ModelKind::memvae: {
                SampleSet set = multi_sample_bound(memvae(), emem, x, cfg_.k, sample_rng);
                objective = add(objective, vimco_surrogate(set));
                row.nll_bound += -set.bound.item();
                ElboTerms terms = elbo_terms(set.samples[0]);
                row.kl_a += terms.kl_a.item();
                row.kl_z += terms.kl_z.item();
                double recon = 0;
                for (const auto& s : set.samples) recon += s.log_p_x.item();
                row.recon += recon / static_cast<double>(set.k());
                break;
            }
            case ModelKind::baseline_vae: {
                ElboTerms t = baseline().forward(x, sample_rng);
                objective = add(objective, t.elbo());
                row.nll_bound += -t.elbo().item();
                row.kl_z += t.kl_z.item();
                row.recon += t.recon.item();
                break;
            }
            case ModelKind::soft_attention: {
                ElboTerms t = soft().forward(emem, x, sample_rng);
                objective = add(objective, t.elbo());
                row.nll_bound += -t.elbo().item();
                row.kl_z += t.kl_z.item();
                row.recon += t.recon.item();
                break;
            }
        }
    }

    const double bnorm = static_cast<double>(batch);
    row.nll_bound /= bnorm;
    row.kl_a /= bnorm;
    row.kl_z /= bnorm;
    row.recon /= bnorm;

    Tensor loss = neg(mul(objective, Tensor::scalar(1.0 / bnorm)));
    if (!std::isfinite(loss.item()))
        throw NumericalError("non-finite loss at step " + std::to_string(step) +
                             " (minibatch id " + std::to_string(step) + ")");
    tape.backward(loss);

    if (cfg_.grad_clip > 0.0) {
        double sq = 0.0;
        for (auto& [name, t] : plist)
            if (t.has_grad())
                for (double g : t.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg_.grad_clip) {
            const double scale = cfg_.grad_clip / norm;
            for (auto& [name, t] : plist)
                if (t.has_grad())
                    for (double& g : t.node()->grad) g *= scale;
        }
    }

    AdamOptions opts;
    opts.lr = cfg_.lr;
    opts.weight_decay = cfg_.weight_decay;
    adam_step(plist, adam_, opts, {"memory.entries"});
    return row;
}

std::vector<MetricsRow> Trainer::run(std::ostream* metrics_csv) {
    Rng data_rng(cfg_.seed, 2);
    Rng sample_rng(cfg_.seed, 3);
    const auto start = std::chrono::steady_clock::now();

    if (metrics_csv) (*metrics_csv) << metrics_csv_header() << "\n";
    std::vector<MetricsRow> rows;
    for (std::size_t step = 0; step < cfg_.steps; ++step) {
        MetricsRow row = train_step(step, data_rng, sample_rng);
        if (step % cfg_.log_interval == 0 || step + 1 == cfg_.steps) {
            if (cfg_.wall_clock)
                row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
            rows.push_back(row);
            if (metrics_csv) (*metrics_csv) << to_csv(row) << "\n";
        }
    }
    return rows;
}

}  // namespace memvae
