#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memvae/data.hpp"
#include "memvae/estimators.hpp"
#include "memvae/models.hpp"

namespace memvae {

// Mean K-sample NLL bound over a target set, with the KL decomposition and a
// per-class breakdown where labels exist.
struct EvalReport {
    double nll_mean = 0.0;
    double nll_stderr = 0.0;  // from per-example variation
    double kl_a = 0.0;
    double kl_z = 0.0;
    std::size_t k = 0;
    std::size_t mem_classes = 0;    // 0 when the memory is unlabeled
    std::size_t mem_per_class = 0;  // slots per class when labeled and balanced
    std::vector<std::pair<int, double>> per_class_nll;  // label -> mean nll
};

EvalReport eval_nll(const MemVae& model, const std::vector<std::vector<double>>& targets,
                    const std::vector<int>* target_classes, std::size_t k, Rng& rng);
EvalReport eval_nll(const BaselineVae& model,
                    const std::vector<std::vector<double>>& targets,
                    const std::vector<int>* target_classes, std::size_t k, Rng& rng);
EvalReport eval_nll(const SoftAttentionVae& model,
                    const std::vector<std::vector<double>>& targets,
                    const std::vector<int>* target_classes, std::size_t k, Rng& rng);

// ------------------------------------------------------------------ sweeps

struct SweepRow {
    std::size_t c = 0, n = 0;
    double nll = 0, stderr_ = 0, kl_a = 0, kl_z = 0;
    double ref_log_c = 0;  // nll at C=1 (same N) + log C, the optimal-model law
};

std::string sweep_csv_header();  // C,N,nll,stderr,kl_a,kl_z,ref_logC
std::string to_csv(const SweepRow& row);

// Test-time memory-size sweep: for each (C, N) builds a fresh held-out
// memory of C classes x N entries, evaluates the K-sample NLL bound on
// disjoint targets of the same classes, and reports the log C reference law.
// The model's memory is restored afterwards.
std::vector<SweepRow> memory_sweep(MemVae& model, const Dataset& heldout,
                                   const std::vector<std::size_t>& c_list,
                                   std::size_t n_per_class, std::size_t k,
                                   std::size_t targets_per_class, Rng& rng);
std::vector<SweepRow> memory_sweep(SoftAttentionVae& model, const Dataset& heldout,
                                   const std::vector<std::size_t>& c_list,
                                   std::size_t n_per_class, std::size_t k,
                                   std::size_t targets_per_class, Rng& rng);

// ------------------------------------------------------- posterior dumps

struct PosteriorInspection {
    std::vector<double> probs;           // q(a|x) over slots
    std::vector<int> labels;             // -1 where the memory is unlabeled
    std::vector<std::size_t> top_slots;  // top-n slots by probability
};

PosteriorInspection inspect_posterior(const MemVae& model, const Tensor& x,
                                      std::size_t top_n);
// CSV schema: slot,prob,class_id
void write_posterior_csv(const std::filesystem::path& path,
                         const PosteriorInspection& insp);
// Target followed by the top-n entries as one PGM strip.
void write_posterior_strip(const std::filesystem::path& path, const MemVae& model,
                           const Tensor& x, const PosteriorInspection& insp,
                           std::size_t img_width, std::size_t img_height);

// -------------------------------------------------------- classification

enum class ClassifyRule { feedforward, weighted };
ClassifyRule classify_rule_from_string(const std::string& s);
std::string to_string(ClassifyRule r);

struct ClassificationResult {
    std::size_t way = 0;
    std::size_t shot = 0;
    double accuracy = 0.0;
    ClassifyRule rule = ClassifyRule::feedforward;
};

// Label scores for one query against the model's labeled memory.
// feedforward: p(c|x) ~ sum_{label(a)=c} q(a|x). weighted: normalized
// importance weights of K joint samples summed by the label of the sampled
// address. Ties resolve to the lowest label id.
int classify_query(const MemVae& model, const Tensor& emem, const Tensor& x,
                   ClassifyRule rule, std::size_t k, Rng& rng);

// Accuracy over a labeled query set with the model's current memory.
ClassificationResult fewshot_classify(const MemVae& model,
                                      const std::vector<std::vector<double>>& queries,
                                      const std::vector<int>& query_labels,
                                      ClassifyRule rule, std::size_t k, Rng& rng);

// ------------------------------------------------------------- gradcheck

// Finite-difference checks of every differentiable path on desk-size
// instances of all three models, plus the enumeration oracle on the
// discrete path. Reports the worst offender by name.
struct GradcheckReport {
    struct Section {
        std::string name;
        double max_rel_err = 0.0;
        std::string worst_param;
    };
    std::vector<Section> sections;
    double tolerance = 1e-4;
    double max_rel_err = 0.0;
    std::string worst_param;
    bool pass = false;
};

GradcheckReport gradcheck(double tolerance, std::uint64_t seed);
std::string format_report(const GradcheckReport& report);

// The checking machinery behind one gradcheck section: tape gradients of
// build_loss() against central differences of objective() over params.
// Exposed so test fixtures (e.g. a deliberately corrupted adjoint) can be
// run through the same report path.
GradcheckReport::Section gradcheck_function(const std::string& name, ParamList& params,
                                            const std::function<double()>& objective,
                                            const std::function<Tensor()>& build_loss,
                                            double step = 1e-5);

}  // namespace memvae
