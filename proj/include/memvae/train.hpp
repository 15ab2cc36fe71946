#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "memvae/config.hpp"
#include "memvae/data.hpp"
#include "memvae/estimators.hpp"
#include "memvae/models.hpp"

namespace memvae {

struct MetricsRow {
    std::size_t step = 0;
    double nll_bound = 0, kl_a = 0, kl_z = 0, recon = 0;
    std::int64_t wall_ms = 0;
};

std::string metrics_csv_header();  // step,nll_bound,kl_a,kl_z,recon,wall_ms
std::string to_csv(const MetricsRow& row);

struct AdamOptions {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; skipped for excluded parameters
};

// Per-parameter first/second moment estimates plus the shared step counter.
struct AdamState {
    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> moments;
    std::size_t t = 0;
};

// One bias-corrected Adam update from the grads accumulated in params.
// Parameters named in `exclude` skip the weight-decay term (the memory M).
void adam_step(ParamList& params, AdamState& state, const AdamOptions& opts,
               const std::set<std::string>& exclude = {});

// The training loop for all three model kinds and the three memory regimes:
//   recall:         M resampled from the data each step, targets drawn from M
//   few_shot:       per-step episodes; M holds labeled same-class examples
//   learned_memory: M is a trainable parameter, targets are minibatches
class Trainer {
public:
    Trainer(TrainConfig cfg, Dataset dataset);

    // Runs cfg.steps optimization steps. Rows are appended to the returned
    // vector and, when a stream is given, written as CSV (header included).
    std::vector<MetricsRow> run(std::ostream* metrics_csv = nullptr);

    const TrainConfig& config() const { return cfg_; }
    const Dataset& dataset() const { return dataset_; }

    ModelKind kind() const { return cfg_.model; }
    MemVae& memvae() { return std::get<MemVae>(model_); }
    BaselineVae& baseline() { return std::get<BaselineVae>(model_); }
    SoftAttentionVae& soft() { return std::get<SoftAttentionVae>(model_); }

    ParamList params();
    void save_checkpoint(const std::filesystem::path& path);
    void load_checkpoint(const std::filesystem::path& path);

private:
    MetricsRow train_step(std::size_t step, Rng& data_rng, Rng& sample_rng);
    void prepare_memory(std::size_t step, Rng& data_rng,
                        std::vector<std::size_t>& target_indices);

    TrainConfig cfg_;
    Dataset dataset_;
    std::variant<std::monostate, MemVae, BaselineVae, SoftAttentionVae> model_;
    AdamState adam_;
};

}  // namespace memvae
