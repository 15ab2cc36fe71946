#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "memvae/eval.hpp"
#include "support/oracles.hpp"

using namespace memvae;

namespace {

MemVaeConfig tiny_config(std::size_t d_x = 8, std::size_t z_dim = 2) {
    MemVaeConfig cfg;
    cfg.d_x = d_x;
    cfg.z_dim = z_dim;
    cfg.e_dim = 4;
    cfg.enc_hidden = {8};
    cfg.dec_hidden = {8};
    cfg.prior_z_hidden = {4};
    cfg.emb_hidden = {6};
    return cfg;
}

MemoryBuffer binary_memory(std::size_t slots, std::size_t d, Rng& rng,
                           std::vector<int> labels = {}) {
    std::vector<std::vector<double>> rows(slots, std::vector<double>(d));
    for (auto& r : rows)
        for (auto& v : r) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return MemoryBuffer::fixed(std::move(rows), std::move(labels));
}

std::vector<std::vector<double>> binary_targets(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> out(n, std::vector<double>(d));
    for (auto& t : out)
        for (auto& v : t) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return out;
}

// MemVae whose posterior is sharply peaked on the memory row equal to the
// query: single-layer identity embeddings scaled up, inner-product scores.
MemVae peaked_model(const MemoryBuffer& mem, std::size_t d) {
    MemVaeConfig cfg = tiny_config(d, 2);
    cfg.similarity = SimilarityKind::inner;
    cfg.emb_hidden = {};
    cfg.e_dim = d;
    Rng rng(321);
    MemVae model(cfg, mem, rng);
    ParamList params = model.params();
    for (auto& [name, t] : params) {
        if (name.starts_with("nets.h_mem.") || name.starts_with("nets.h_query.")) {
            for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 0.0;
            if (name.ends_with(".w"))
                for (std::size_t i = 0; i < d; ++i) t.data()[i * d + i] = 12.0;
        }
    }
    return model;
}

}  // namespace

TEST_CASE("eval_nll reports mean, stderr and the KL decomposition") {
    Rng init(1);
    MemVae model(tiny_config(), binary_memory(4, 8, init), init);
    auto targets = binary_targets(6, 8, init);
    std::vector<int> classes{0, 0, 1, 1, 2, 2};

    Rng rng(2);
    EvalReport rep = eval_nll(model, targets, &classes, 8, rng);
    CHECK(rep.k == 8);
    CHECK(std::isfinite(rep.nll_mean));
    CHECK(rep.nll_stderr > 0.0);
    CHECK(rep.kl_a >= -1e-12);
    CHECK(rep.kl_z >= -1e-12);
    REQUIRE(rep.per_class_nll.size() == 3);
    double weighted = 0.0;
    for (const auto& [label, nll] : rep.per_class_nll) weighted += 2 * nll;
    CHECK(weighted / 6 == doctest::Approx(rep.nll_mean));

    // deterministic given (model, seed, K)
    Rng r2(2);
    EvalReport again = eval_nll(model, targets, &classes, 8, r2);
    CHECK(again.nll_mean == rep.nll_mean);
}

TEST_CASE("eval_nll at K = 1 matches the mean single-sample ELBO estimate") {
    Rng init(3);
    MemVae model(tiny_config(), binary_memory(4, 8, init), init);
    auto targets = binary_targets(4, 8, init);

    Rng r1(4);
    test::MeanAccumulator direct;
    Tensor emem = model.embed_memory();
    for (int rep = 0; rep < 3000; ++rep)
        for (const auto& t : targets)
            direct.add(-model.joint_sample(emem, Tensor::from(t), r1).log_weight().item());

    Rng r2(5);
    test::MeanAccumulator via_eval;
    for (int rep = 0; rep < 500; ++rep)
        via_eval.add(eval_nll(model, targets, nullptr, 1, r2).nll_mean);

    const double se =
        std::sqrt(direct.stderror() * direct.stderror() +
                  via_eval.stderror() * via_eval.stderror());
    CHECK(std::abs(direct.mean() - via_eval.mean()) < 3 * se);
}

TEST_CASE("eval_nll is non-increasing in K") {
    Rng init(6);
    MemVae model(tiny_config(), binary_memory(4, 8, init), init);
    auto targets = binary_targets(8, 8, init);

    const std::size_t ks[] = {1, 4, 16};
    double means[3];
    double errs[3];
    for (int i = 0; i < 3; ++i) {
        Rng rng(7);
        test::MeanAccumulator acc;
        for (int rep = 0; rep < 60; ++rep)
            acc.add(eval_nll(model, targets, nullptr, ks[i], rng).nll_mean);
        means[i] = acc.mean();
        errs[i] = acc.stderror();
    }
    for (int i = 0; i + 1 < 3; ++i) {
        const double se = std::sqrt(errs[i] * errs[i] + errs[i + 1] * errs[i + 1]);
        CHECK(means[i + 1] <= means[i] + 3 * se);
    }
}

TEST_CASE("memory sweep emits the reference law and restores memory") {
    Rng init(8);
    MemVae model(tiny_config(16, 2), binary_memory(3, 16, init), init);
    const auto before = model.memory().entries().values();

    Rng corpus_rng(9);
    Dataset heldout = synth_pattern_corpus(20, 10, 16, 0.05, corpus_rng);

    Rng rng(10);
    auto rows = memory_sweep(model, heldout, {1, 2, 4}, 2, 4, 3, rng);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].c == 1);
    // the C=1 cell is its own reference
    CHECK(rows[0].ref_log_c == doctest::Approx(rows[0].nll));
    CHECK(rows[1].ref_log_c == doctest::Approx(rows[0].nll + std::log(2.0)));
    CHECK(rows[2].ref_log_c == doctest::Approx(rows[0].nll + std::log(4.0)));
    for (const auto& r : rows) {
        CHECK(r.n == 2);
        CHECK(std::isfinite(r.nll));
    }
    CHECK(model.memory().entries().values() == before);

    // csv schema
    CHECK(sweep_csv_header() == "C,N,nll,stderr,kl_a,kl_z,ref_logC");
    std::stringstream ss(to_csv(rows[1]));
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    CHECK(fields.size() == 7);
    CHECK(std::stoul(fields[0]) == 2);
    CHECK(std::stod(fields[2]) == doctest::Approx(rows[1].nll));
}

TEST_CASE("posterior inspection") {
    // identical entries give a flat histogram
    Rng init(11);
    MemVaeConfig cfg = tiny_config(6, 2);
    MemoryBuffer mem = MemoryBuffer::fixed(
        {{1, 0, 1, 0, 1, 0}, {1, 0, 1, 0, 1, 0}, {1, 0, 1, 0, 1, 0}, {1, 0, 1, 0, 1, 0}},
        {0, 1, 2, 3});
    MemVae model(cfg, std::move(mem), init);
    Tensor x = Tensor::from({1.0, 1.0, 0.0, 0.0, 1.0, 0.0});

    PosteriorInspection insp = inspect_posterior(model, x, 2);
    REQUIRE(insp.probs.size() == 4);
    double total = 0.0;
    for (double p : insp.probs) {
        CHECK(p == doctest::Approx(0.25));
        total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(insp.top_slots.size() == 2);
    CHECK(insp.labels == std::vector<int>{0, 1, 2, 3});

    namespace fs = std::filesystem;
    const fs::path csv = fs::temp_directory_path() / "memvae_inspect.csv";
    const fs::path strip = fs::temp_directory_path() / "memvae_inspect.pgm";
    write_posterior_csv(csv, insp);
    write_posterior_strip(strip, model, x, insp, 3, 2);
    std::ifstream f(csv);
    std::string header;
    std::getline(f, header);
    CHECK(header == "slot,prob,class_id");
    std::string line;
    double prob_total = 0.0;
    int rows = 0;
    while (std::getline(f, line)) {
        ++rows;
        const auto c1 = line.find(','), c2 = line.rfind(',');
        prob_total += std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    }
    CHECK(rows == 4);
    CHECK(prob_total == doctest::Approx(1.0).epsilon(1e-9));
    fs::remove(csv);
    fs::remove(strip);
}

TEST_CASE("few-shot classification rules") {
    Rng init(12);
    // distinctive rows, one slot per class
    MemoryBuffer mem = MemoryBuffer::fixed(
        {{1, 1, 1, 1, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1}, {1, 0, 1, 0, 1, 0, 1, 0}},
        {10, 20, 30});
    MemVae model = peaked_model(mem, 8);

    std::vector<std::vector<double>> queries{{1, 1, 1, 1, 0, 0, 0, 0},
                                             {0, 0, 0, 0, 1, 1, 1, 1},
                                             {1, 0, 1, 0, 1, 0, 1, 0}};
    std::vector<int> labels{10, 20, 30};

    Rng rng(13);
    ClassificationResult ff =
        fewshot_classify(model, queries, labels, ClassifyRule::feedforward, 4, rng);
    CHECK(ff.way == 3);
    CHECK(ff.shot == 1);
    CHECK(ff.accuracy == doctest::Approx(1.0));

    // sharply peaked posterior: the weighted rule agrees with feedforward
    Tensor emem = model.embed_memory();
    for (std::size_t i = 0; i < queries.size(); ++i) {
        Tensor x = Tensor::from(queries[i]);
        const auto probs = model.address_posterior(emem, x).probs();
        CHECK(*std::max_element(probs.begin(), probs.end()) >= 0.99);
        const int a = classify_query(model, emem, x, ClassifyRule::feedforward, 4, rng);
        const int b = classify_query(model, emem, x, ClassifyRule::weighted, 4, rng);
        CHECK(a == b);
        CHECK(a == labels[i]);
    }

    // unlabeled memory is an error
    Rng init2(14);
    MemVae unlabeled(tiny_config(), binary_memory(3, 8, init2), init2);
    CHECK_THROWS_AS(
        fewshot_classify(unlabeled, queries, labels, ClassifyRule::feedforward, 4, rng),
        std::invalid_argument);
}

TEST_CASE("classification ties break to the lowest label id") {
    Rng init(15);
    MemoryBuffer mem = MemoryBuffer::fixed(
        {{1, 0, 1, 0, 1, 0, 1, 0}, {1, 0, 1, 0, 1, 0, 1, 0}}, {7, 3});
    MemVaeConfig cfg = tiny_config(8, 2);
    MemVae model(cfg, std::move(mem), init);
    // identical rows: q is exactly uniform, both labels score 0.5
    Rng rng(16);
    const int label = classify_query(model, model.embed_memory(),
                                     Tensor::from({1, 1, 0, 0, 1, 1, 0, 0}),
                                     ClassifyRule::feedforward, 4, rng);
    CHECK(label == 3);
}

TEST_CASE("gradcheck passes on fresh random models") {
    GradcheckReport report = gradcheck(1e-4, 99);
    CAPTURE(format_report(report));
    CHECK(report.pass);
    CHECK(report.max_rel_err <= 1e-4);
    REQUIRE(report.sections.size() == 4);
    for (const auto& s : report.sections) CHECK_FALSE(s.worst_param.empty());
    CHECK(format_report(report).find("PASS") != std::string::npos);
    CHECK_FALSE(report.worst_param.empty());  // names the worst offender
}

TEST_CASE("gradcheck flags a corrupted adjoint (negative control)") {
    Tensor w = Tensor::from({0.4, -0.7, 1.1}, {3}, true);
    ParamList params;
    params.add("w", w);
    // tanh with a deliberately wrong derivative
    auto corrupted = [&]() -> Tensor {
        Tensor h = custom_unary(
            w, [](double v) { return std::tanh(v); },
            [](double v) { return 0.5 * (1.0 - std::tanh(v) * std::tanh(v)); },
            "corrupted_tanh");
        return sum(mul(h, h));
    };
    auto section = gradcheck_function(
        "corrupted", params, [&] { return corrupted().item(); }, corrupted);
    CHECK(section.max_rel_err > 1e-4);
    CHECK(section.worst_param.starts_with("w["));
}
