#include "memvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "memvae/pgm.hpp"

namespace memvae {

namespace {

struct PerExample {
    double nll = 0, kl_a = 0, kl_z = 0;
};

EvalReport assemble_report(const std::vector<PerExample>& rows,
                           const std::vector<int>* classes, std::size_t k) {
    EvalReport rep;
    rep.k = k;
    const double n = static_cast<double>(rows.size());
    if (rows.empty()) return rep;
    for (const auto& r : rows) {
        rep.nll_mean += r.nll;
        rep.kl_a += r.kl_a;
        rep.kl_z += r.kl_z;
    }
    rep.nll_mean /= n;
    rep.kl_a /= n;
    rep.kl_z /= n;
    double var = 0.0;
    for (const auto& r : rows) var += (r.nll - rep.nll_mean) * (r.nll - rep.nll_mean);
    rep.nll_stderr = rows.size() > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;

    if (classes) {
        std::map<int, std::pair<double, std::size_t>> by_class;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto& [total, count] = by_class[(*classes)[i]];
            total += rows[i].nll;
            ++count;
        }
        for (const auto& [label, tc] : by_class)
            rep.per_class_nll.emplace_back(label,
                                           tc.first / static_cast<double>(tc.second));
    }
    return rep;
}

void fill_memory_spec(EvalReport& rep, const MemoryBuffer& mem) {
    if (!mem.labels()) return;
    std::set<int> distinct(mem.labels()->begin(), mem.labels()->end());
    rep.mem_classes = distinct.size();
    if (!distinct.empty() && mem.slots() % distinct.size() == 0)
        rep.mem_per_class = mem.slots() / distinct.size();
}

}  // namespace

EvalReport eval_nll(const MemVae& model, const std::vector<std::vector<double>>& targets,
                    const std::vector<int>* target_classes, std::size_t k, Rng& rng) {
    if (k < 1) throw std::invalid_argument("eval_nll: K must be >= 1");
    Tensor emem = model.embed_memory();
    std::vector<PerExample> rows;
    rows.reserve(targets.size());
    for (const auto& img : targets) {
        Tensor x = Tensor::from(img);
        std::vector<double> log_w(k);
        PerExample pe;
        double kl_z_acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            JointSample s = model.joint_sample(emem, x, rng);
            log_w[i] = s.log_weight().item();
            if (i == 0) pe.kl_a = kl_categorical(s.q_a, s.p_a).item();
            kl_z_acc += (s.q_z && s.p_z) ? kl_diag_gaussian(*s.q_z, *s.p_z).item() : 0.0;
        }
        pe.kl_z = kl_z_acc / static_cast<double>(k);
        pe.nll = -(logsumexp(Tensor::from(log_w)).item() -
                   std::log(static_cast<double>(k)));
        rows.push_back(pe);
    }
    EvalReport rep = assemble_report(rows, target_classes, k);
    fill_memory_spec(rep, model.memory());
    return rep;
}

namespace {

EvalReport eval_with_sampler(
    const std::vector<std::vector<double>>& targets, const std::vector<int>* classes,
    std::size_t k, Rng& rng,
    const std::function<double(const Tensor&, Rng&)>& sample_log_w,
    const std::function<double(const Tensor&)>& analytic_kl_z) {
    if (k < 1) throw std::invalid_argument("eval_nll: K must be >= 1");
    std::vector<PerExample> rows;
    rows.reserve(targets.size());
    for (const auto& img : targets) {
        Tensor x = Tensor::from(img);
        std::vector<double> log_w(k);
        for (std::size_t i = 0; i < k; ++i) log_w[i] = sample_log_w(x, rng);
        PerExample pe;
        pe.kl_z = analytic_kl_z(x);
        pe.nll = -(logsumexp(Tensor::from(log_w)).item() -
                   std::log(static_cast<double>(k)));
        rows.push_back(pe);
    }
    return assemble_report(rows, classes, k);
}

}  // namespace

EvalReport eval_nll(const BaselineVae& model,
                    const std::vector<std::vector<double>>& targets,
                    const std::vector<int>* target_classes, std::size_t k, Rng& rng) {
    return eval_with_sampler(
        targets, target_classes, k, rng,
        [&](const Tensor& x, Rng& r) { return model.sample_log_weight(x, r).item(); },
        [&](const Tensor& x) {
            return kl_diag_gaussian(model.posterior(x),
                                    DiagGaussianDist::standard(model.config().z_dim))
                .item();
        });
}

EvalReport eval_nll(const SoftAttentionVae& model,
                    const std::vector<std::vector<double>>& targets,
                    const std::vector<int>* target_classes, std::size_t k, Rng& rng) {
    Tensor emem = model.embed_memory();
    return eval_with_sampler(
        targets, target_classes, k, rng,
        [&](const Tensor& x, Rng& r) {
            return model.sample_log_weight(emem, x, r).item();
        },
        [&](const Tensor& x) {
            return kl_diag_gaussian(model.posterior(x),
                                    DiagGaussianDist::standard(model.config().z_dim))
                .item();
        });
}

// -------------------------------------------------------------------- sweeps

std::string sweep_csv_header() { return "C,N,nll,stderr,kl_a,kl_z,ref_logC"; }

std::string to_csv(const SweepRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g", row.c,
                  row.n, row.nll, row.stderr_, row.kl_a, row.kl_z, row.ref_log_c);
    return buf;
}

namespace {

template <typename Model>
std::vector<SweepRow> memory_sweep_impl(Model& model, const Dataset& heldout,
                                        const std::vector<std::size_t>& c_list,
                                        std::size_t n_per_class, std::size_t k,
                                        std::size_t targets_per_class, Rng& rng) {
    MemoryBuffer saved = model.memory();
    std::vector<SweepRow> rows;
    double base_nll = 0.0;
    bool have_base = false;

    auto eval_cell = [&](std::size_t c) {
        SweepSet set = test_memory_sweep(heldout, c, n_per_class, targets_per_class, rng);
        model.set_memory(std::move(set.memory));
        std::vector<std::vector<double>> targets;
        std::vector<int> classes;
        for (std::size_t i : set.target_indices) {
            targets.push_back(heldout.images[i]);
            classes.push_back(heldout.class_ids[i]);
        }
        EvalReport rep = eval_nll(model, targets, &classes, k, rng);
        SweepRow row;
        row.c = c;
        row.n = n_per_class;
        row.nll = rep.nll_mean;
        row.stderr_ = rep.nll_stderr;
        row.kl_a = rep.kl_a;
        row.kl_z = rep.kl_z;
        return row;
    };

    for (std::size_t c : c_list) {
        SweepRow row = eval_cell(c);
        if (!have_base) {
            // the C = 1 cell defines the per-class reference; compute it if
            // the sweep does not start there
            base_nll = (c == 1) ? row.nll : eval_cell(1).nll;
            have_base = true;
        }
        row.ref_log_c = base_nll + std::log(static_cast<double>(c));
        rows.push_back(row);
    }
    model.set_memory(std::move(saved));
    return rows;
}

}  // namespace

std::vector<SweepRow> memory_sweep(MemVae& model, const Dataset& heldout,
                                   const std::vector<std::size_t>& c_list,
                                   std::size_t n_per_class, std::size_t k,
                                   std::size_t targets_per_class, Rng& rng) {
    return memory_sweep_impl(model, heldout, c_list, n_per_class, k,
                             targets_per_class, rng);
}

std::vector<SweepRow> memory_sweep(SoftAttentionVae& model, const Dataset& heldout,
                                   const std::vector<std::size_t>& c_list,
                                   std::size_t n_per_class, std::size_t k,
                                   std::size_t targets_per_class, Rng& rng) {
    return memory_sweep_impl(model, heldout, c_list, n_per_class, k,
                             targets_per_class, rng);
}

// ----------------------------------------------------------- posterior dumps

PosteriorInspection inspect_posterior(const MemVae& model, const Tensor& x,
                                      std::size_t top_n) {
    Tensor emem = model.embed_memory();
    PosteriorInspection insp;
    insp.probs = model.address_posterior(emem, x).probs();
    const auto& labels = model.memory().labels();
    insp.labels.resize(insp.probs.size(), -1);
    if (labels)
        for (std::size_t a = 0; a < labels->size(); ++a) insp.labels[a] = (*labels)[a];

    std::vector<std::size_t> order(insp.probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return insp.probs[i] > insp.probs[j];
    });
    order.resize(std::min(top_n, order.size()));
    insp.top_slots = std::move(order);
    return insp;
}

void write_posterior_csv(const std::filesystem::path& path,
                         const PosteriorInspection& insp) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f << "slot,prob,class_id\n";
    for (std::size_t a = 0; a < insp.probs.size(); ++a) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%d", a, insp.probs[a],
                      insp.labels[a]);
        f << buf << "\n";
    }
}

void write_posterior_strip(const std::filesystem::path& path, const MemVae& model,
                           const Tensor& x, const PosteriorInspection& insp,
                           std::size_t img_width, std::size_t img_height) {
    std::vector<std::vector<double>> images;
    images.push_back(x.values());
    for (std::size_t slot : insp.top_slots)
        images.push_back(model.memory().read(slot).values());
    write_pgm_grid(path, images, img_width, img_height, images.size());
}

// ------------------------------------------------------------ classification

ClassifyRule classify_rule_from_string(const std::string& s) {
    if (s == "feedforward") return ClassifyRule::feedforward;
    if (s == "weighted") return ClassifyRule::weighted;
    throw ConfigError("unknown classification rule: " + s);
}

std::string to_string(ClassifyRule r) {
    return r == ClassifyRule::feedforward ? "feedforward" : "weighted";
}

int classify_query(const MemVae& model, const Tensor& emem, const Tensor& x,
                   ClassifyRule rule, std::size_t k, Rng& rng) {
    const auto& labels = model.memory().labels();
    if (!labels)
        throw std::invalid_argument("classify_query: memory slots are unlabeled");

    std::map<int, double> scores;
    if (rule == ClassifyRule::feedforward) {
        const std::vector<double> probs = model.address_posterior(emem, x).probs();
        for (std::size_t a = 0; a < probs.size(); ++a)
            scores[(*labels)[a]] += probs[a];
    } else {
        // normalized importance weights of the K joint samples, summed by
        // the label of each sampled address
        std::vector<JointSample> samples;
        std::vector<double> log_w(k);
        samples.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            samples.push_back(model.joint_sample(emem, x, rng));
            log_w[i] = samples.back().log_weight().item();
        }
        const double lse = logsumexp(Tensor::from(log_w)).item();
        for (std::size_t i = 0; i < k; ++i)
            scores[(*labels)[samples[i].a]] += std::exp(log_w[i] - lse);
    }

    int best_label = scores.begin()->first;
    double best = scores.begin()->second;
    for (const auto& [label, score] : scores) {
        if (score > best) {  // ties keep the lowest label id (map order)
            best = score;
            best_label = label;
        }
    }
    return best_label;
}

ClassificationResult fewshot_classify(const MemVae& model,
                                      const std::vector<std::vector<double>>& queries,
                                      const std::vector<int>& query_labels,
                                      ClassifyRule rule, std::size_t k, Rng& rng) {
    if (queries.size() != query_labels.size())
        throw std::invalid_argument("fewshot_classify: query/label count mismatch");
    const auto& labels = model.memory().labels();
    if (!labels)
        throw std::invalid_argument("fewshot_classify: memory slots are unlabeled");

    Tensor emem = model.embed_memory();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const int predicted =
            classify_query(model, emem, Tensor::from(queries[i]), rule, k, rng);
        if (predicted == query_labels[i]) ++correct;
    }
    ClassificationResult res;
    std::set<int> distinct(labels->begin(), labels->end());
    res.way = distinct.size();
    res.shot = res.way ? model.memory().slots() / res.way : 0;
    res.rule = rule;
    res.accuracy =
        queries.empty() ? 0.0 : static_cast<double>(correct) / queries.size();
    return res;
}

// ---------------------------------------------------------------- gradcheck

GradcheckReport::Section gradcheck_function(const std::string& name, ParamList& params,
                                            const std::function<double()>& objective,
                                            const std::function<Tensor()>& build_loss,
                                            double step) {
    // Central differences at two step sizes, keeping the better agreement:
    // the larger step averages away f64 roundoff, the smaller one steps
    // around relu kinks. Coordinates whose analytic and numeric values are
    // both below kAbsFloor are noise, not evidence: one ulp of the objective
    // already exceeds what central differences can resolve there.
    constexpr double kAbsFloor = 1e-5;
    for (auto& [pname, t] : params) t.zero_grad();
    {
        Tape tape;
        tape.backward(build_loss());
    }
    GradcheckReport::Section section;
    section.name = name;
    for (auto& [pname, t] : params) {
        const std::vector<double> g =
            t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0);
        for (std::size_t i = 0; i < t.size(); ++i) {
            double* v = t.data() + i;
            const double saved = *v;
            double rel = std::numeric_limits<double>::infinity();
            bool negligible = false;
            for (double h : {step, step / 10.0}) {
                *v = saved + h;
                const double up = objective();
                *v = saved - h;
                const double down = objective();
                *v = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double denom = std::max({std::abs(g[i]), std::abs(numeric), 1e-8});
                rel = std::min(rel, std::abs(g[i] - numeric) / denom);
                negligible = negligible || (std::abs(g[i]) <= kAbsFloor &&
                                            std::abs(numeric) <= kAbsFloor);
            }
            if (negligible) continue;
            if (rel > section.max_rel_err) {
                section.max_rel_err = rel;
                section.worst_param = pname + "[" + std::to_string(i) + "]";
            }
        }
    }
    return section;
}

namespace {

void fd_section(GradcheckReport& report, const std::string& name, ParamList& params,
                const std::function<double()>& objective,
                const std::function<Tensor()>& build_loss, double step = 1e-5) {
    report.sections.push_back(
        gradcheck_function(name, params, objective, build_loss, step));
}

MemoryBuffer gradcheck_memory(std::size_t slots, std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> rows(slots, std::vector<double>(d));
    for (auto& r : rows)
        for (auto& v : r) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return MemoryBuffer::fixed(std::move(rows));
}

// Finite differences are only meaningful away from the 1/||e_a|| blow-up of
// the normalized similarity, so reject draws whose memory embeddings come
// out nearly degenerate and build again from the next slice of the stream.
double min_embedding_row_norm(const Tensor& emem) {
    const std::size_t m = emem.shape()[0], e = emem.shape()[1];
    double min_norm = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < m; ++a) {
        double sq = 0.0;
        for (std::size_t j = 0; j < e; ++j) sq += emem.at(a * e + j) * emem.at(a * e + j);
        min_norm = std::min(min_norm, std::sqrt(sq));
    }
    return min_norm;
}

template <typename ModelT>
ModelT well_conditioned(Rng& rng, const std::function<ModelT(Rng&)>& build) {
    for (int attempt = 0; attempt < 16; ++attempt) {
        ModelT model = build(rng);
        if (min_embedding_row_norm(model.embed_memory()) > 0.1) return model;
    }
    throw NumericalError("gradcheck: could not draw a well-conditioned model");
}

std::vector<double> random_pixels(std::size_t d, Rng& rng) {
    std::vector<double> v(d);
    for (auto& p : v) p = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return v;
}

}  // namespace

GradcheckReport gradcheck(double tolerance, std::uint64_t seed) {
    GradcheckReport report;
    report.tolerance = tolerance;
    Rng init(seed, 101);
    const std::size_t d_x = 16, z_dim = 2, k = 2;

    {  // hard-attention model, stochastic draws pinned
        MemVaeConfig cfg;
        cfg.d_x = d_x;
        cfg.z_dim = z_dim;
        cfg.e_dim = 4;
        cfg.enc_hidden = {8};
        cfg.dec_hidden = {8};
        cfg.prior_z_hidden = {4};
        cfg.emb_hidden = {6};
        MemVae model = well_conditioned<MemVae>(init, [&](Rng& rng) {
            return MemVae(cfg, gradcheck_memory(4, d_x, rng), rng);
        });
        Tensor x = Tensor::from(random_pixels(d_x, init));
        const std::vector<std::size_t> addrs{1, 3};
        std::vector<std::vector<double>> eps(k);
        for (auto& e : eps) e = init.normal_vec(z_dim);

        auto bound = [&]() -> Tensor {
            Tensor emem = model.embed_memory();
            std::vector<Tensor> log_ws;
            for (std::size_t i = 0; i < k; ++i)
                log_ws.push_back(
                    model.joint_sample_at(emem, x, addrs[i], eps[i]).log_weight());
            return sub(logsumexp(stack_scalars(log_ws)),
                       Tensor::scalar(std::log(static_cast<double>(k))));
        };
        ParamList params = model.params();
        fd_section(report, "memvae", params, [&] { return bound().item(); }, bound);
    }

    {  // unconditioned baseline VAE
        BaselineVaeConfig cfg;
        cfg.d_x = d_x;
        cfg.z_dim = z_dim;
        cfg.enc_hidden = {8};
        cfg.dec_hidden = {8};
        BaselineVae model(cfg, init);
        Tensor x = Tensor::from(random_pixels(d_x, init));
        auto loss = [&]() -> Tensor {
            Rng rng(seed, 202);
            return model.forward(x, rng).elbo();
        };
        ParamList params = model.params();
        fd_section(report, "baseline_vae", params, [&] { return loss().item(); }, loss);
    }

    {  // soft-attention baseline
        SoftAttentionConfig cfg;
        cfg.d_x = d_x;
        cfg.z_dim = z_dim;
        cfg.e_dim = 4;
        cfg.enc_hidden = {8};
        cfg.dec_hidden = {8};
        cfg.attn_hidden = {4};
        SoftAttentionVae model = well_conditioned<SoftAttentionVae>(init, [&](Rng& rng) {
            return SoftAttentionVae(cfg, gradcheck_memory(3, d_x, rng), rng);
        });
        Tensor x = Tensor::from(random_pixels(d_x, init));
        auto loss = [&]() -> Tensor {
            Rng rng(seed, 303);
            return model.forward(model.embed_memory(), x, rng).elbo();
        };
        ParamList params = model.params();
        fd_section(report, "soft_attention", params, [&] { return loss().item(); },
                   loss);
    }

    {  // discrete path: exact enumerated expectation of the K-sample bound
        MemVaeConfig cfg;
        cfg.d_x = 8;
        cfg.z_dim = 0;
        cfg.e_dim = 3;
        cfg.dec_hidden = {6};
        cfg.emb_hidden = {4};
        MemVae model = well_conditioned<MemVae>(init, [&](Rng& rng) {
            return MemVae(cfg, gradcheck_memory(3, 8, rng), rng);
        });
        Tensor x = Tensor::from(random_pixels(8, init));
        auto expectation = [&]() -> Tensor {
            return enumerate_bound_expectation(model, model.embed_memory(), x, 2);
        };
        ParamList params = model.params();
        fd_section(report, "discrete_enumeration", params,
                   [&] { return expectation().item(); }, expectation);
    }

    for (const auto& s : report.sections) {
        if (s.max_rel_err > report.max_rel_err) {
            report.max_rel_err = s.max_rel_err;
            report.worst_param = s.name + "/" + s.worst_param;
        }
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

std::string format_report(const GradcheckReport& report) {
    std::string out;
    char buf[256];
    for (const auto& s : report.sections) {
        std::snprintf(buf, sizeof(buf), "%-22s max_rel_err %.3e  worst %s\n",
                      s.name.c_str(), s.max_rel_err, s.worst_param.c_str());
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "overall %s: max_rel_err %.3e (tolerance %.1e) at %s\n",
                  report.pass ? "PASS" : "FAIL", report.max_rel_err, report.tolerance,
                  report.worst_param.c_str());
    out += buf;
    return out;
}

}  // namespace memvae
