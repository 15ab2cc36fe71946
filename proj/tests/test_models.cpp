#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "memvae/models.hpp"
#include "support/oracles.hpp"

using namespace memvae;

namespace {

MemVaeConfig tiny_config(std::size_t d_x = 6, std::size_t z_dim = 2) {
    MemVaeConfig cfg;
    cfg.d_x = d_x;
    cfg.z_dim = z_dim;
    cfg.e_dim = 4;
    cfg.enc_hidden = {8};
    cfg.dec_hidden = {8};
    cfg.prior_z_hidden = {6};
    cfg.emb_hidden = {6};
    return cfg;
}

MemoryBuffer random_memory(std::size_t slots, std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> rows(slots, std::vector<double>(d));
    for (auto& r : rows)
        for (auto& v : r) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return MemoryBuffer::fixed(std::move(rows));
}

Tensor random_binary(std::size_t d, Rng& rng) {
    std::vector<double> v(d);
    for (auto& p : v) p = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return Tensor::from(std::move(v));
}

}  // namespace

TEST_CASE("joint_sample is deterministic given the seed") {
    Rng init(1);
    MemVae model(tiny_config(), random_memory(4, 6, init), init);
    Tensor x = random_binary(6, init);
    Tensor emem = model.embed_memory();

    Rng r1(7), r2(7);
    JointSample s1 = model.joint_sample(emem, x, r1);
    JointSample s2 = model.joint_sample(emem, x, r2);
    CHECK(s1.a == s2.a);
    CHECK(s1.z.values() == s2.z.values());
    CHECK(s1.log_weight().item() == s2.log_weight().item());
    CHECK(std::isfinite(s1.log_weight().item()));
}

TEST_CASE("single-slot memory forces zero address log-probabilities") {
    Rng init(2);
    MemVae model(tiny_config(), random_memory(1, 6, init), init);
    Tensor x = random_binary(6, init);
    Rng rng(3);
    JointSample s = model.joint_sample(model.embed_memory(), x, rng);
    CHECK(s.a == 0);
    CHECK(s.log_q_a.item() == 0.0);
    CHECK(s.log_p_a.item() == 0.0);
}

TEST_CASE("elbo decomposition identity") {
    Rng init(4);
    MemVae model(tiny_config(), random_memory(4, 6, init), init);
    Tensor x = random_binary(6, init);
    Tensor emem = model.embed_memory();
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        JointSample s = model.joint_sample(emem, x, rng);
        ElboTerms t = elbo_terms(s);
        const double assembled = t.elbo().item();
        const double manual = t.recon.item() - t.kl_a.item() - t.kl_z.item();
        CHECK(std::abs(assembled - manual) <= 1e-12 * std::max(1.0, std::abs(manual)));
        CHECK(t.kl_a.item() >= -1e-12);
        CHECK(t.kl_z.item() >= -1e-12);
    }
}

TEST_CASE("q == p collapses the ELBO to the reconstruction term") {
    // identical memory entries + flat prior + z_dim 0: both KLs vanish
    MemVaeConfig cfg = tiny_config(6, 0);
    cfg.prior_mode = PriorMode::flat;
    Rng init(6);
    MemoryBuffer mem =
        MemoryBuffer::fixed({{1, 0, 1, 0, 1, 0}, {1, 0, 1, 0, 1, 0}, {1, 0, 1, 0, 1, 0}});
    MemVae model(cfg, std::move(mem), init);
    Tensor x = random_binary(6, init);
    Rng rng(7);
    JointSample s = model.joint_sample(model.embed_memory(), x, rng);
    ElboTerms t = elbo_terms(s);
    CHECK(std::abs(t.kl_a.item()) < 1e-10);
    CHECK(t.kl_z.item() == 0.0);
    CHECK(t.elbo().item() == doctest::Approx(t.recon.item()).epsilon(1e-12));
}

TEST_CASE("marginal likelihood: z_dim 0 enumeration is exact") {
    MemVaeConfig cfg = tiny_config(6, 0);
    Rng init(8);
    MemVae model(cfg, random_memory(3, 6, init), init);
    Tensor x = random_binary(6, init);

    Rng rng(9);
    const double got = model.marginal_log_likelihood(x, 1, rng);

    Tensor emem = model.embed_memory();
    CategoricalDist prior = model.address_prior(emem);
    std::vector<double> terms;
    for (std::size_t a = 0; a < 3; ++a)
        terms.push_back(prior.log_prob(a).item() +
                        model.decode(Tensor::zeros({0}), model.memory().read(a))
                            .log_prob(x)
                            .item());
    const double expect = logsumexp(Tensor::from(terms)).item();
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("marginal likelihood with one slot equals a plain IWAE estimate") {
    Rng init(10);
    MemVae model(tiny_config(6, 2), random_memory(1, 6, init), init);
    Tensor x = random_binary(6, init);

    const std::size_t draws = 64;
    Rng r1(11);
    const double got = model.marginal_log_likelihood(x, draws, r1);

    // independent IWAE estimate over the single conditional VAE
    Rng r2(11);
    Tensor m = model.memory().read(0);
    DiagGaussianDist q = model.z_posterior(x, m);
    DiagGaussianDist p = model.z_prior(m);
    std::vector<double> logw(draws);
    for (auto& w : logw) {
        Tensor z = q.sample_reparam(r2);
        w = p.log_prob(z).item() + model.decode(z, m).log_prob(x).item() -
            q.log_prob(z).item();
    }
    const double expect =
        logsumexp(Tensor::from(logw)).item() - std::log(static_cast<double>(draws));
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("single-sample ELBO lower-bounds the marginal likelihood") {
    Rng init(12);
    MemVae model(tiny_config(6, 2), random_memory(4, 6, init), init);
    Tensor x = random_binary(6, init);
    Tensor emem = model.embed_memory();

    Rng rng(13);
    test::MeanAccumulator elbo_acc;
    for (int i = 0; i < 4000; ++i) {
        JointSample s = model.joint_sample(emem, x, rng);
        elbo_acc.add(s.log_weight().item());
    }
    const double marginal = model.marginal_log_likelihood(x, 2048, rng);
    CHECK(elbo_acc.mean() <= marginal + 3 * elbo_acc.stderror());
}

TEST_CASE("joint_sample address frequencies match the posterior") {
    MemVaeConfig cfg = tiny_config(6, 0);
    Rng init(14);
    MemVae model(cfg, random_memory(3, 6, init), init);
    Tensor x = random_binary(6, init);
    Tensor emem = model.embed_memory();
    const std::vector<double> probs = model.address_posterior(emem, x).probs();

    Rng rng(15);
    const int n = 100000;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < n; ++i) ++counts[model.joint_sample(emem, x, rng).a];
    for (std::size_t a = 0; a < 3; ++a) {
        const double p = probs[a];
        const double sigma = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(counts[a] / static_cast<double>(n) - p) < 4 * sigma + 1e-9);
    }
}

TEST_CASE("decoder output depends on the retrieved memory row") {
    Rng init(16);
    MemVae model(tiny_config(6, 2), random_memory(2, 6, init), init);
    Tensor z = Tensor::from({0.3, -0.4});
    Tensor m = model.memory().read(0);
    std::vector<double> perturbed = m.values();
    for (auto& v : perturbed) v += 0.37;
    Tensor logits_a = model.decode(z, m).logits();
    Tensor logits_b = model.decode(z, Tensor::from(perturbed)).logits();
    double delta = 0.0;
    for (std::size_t i = 0; i < logits_a.size(); ++i)
        delta += std::abs(logits_a.at(i) - logits_b.at(i));
    CHECK(delta > 1e-6);
}

TEST_CASE("generate") {
    Rng init(17);
    MemVae model(tiny_config(6, 2), random_memory(4, 6, init), init);

    CHECK(model.generate(init, 0).empty());

    Rng r1(18), r2(18);
    auto g1 = model.generate(r1, 5);
    auto g2 = model.generate(r2, 5);
    REQUIRE(g1.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(g1[i].address == g2[i].address);
        CHECK(g1[i].pixels == g2[i].pixels);
    }

    // fixed-address row sampling
    auto fixed = model.generate(r1, 4, 2);
    for (const auto& g : fixed) CHECK(g.address == 2);
}

TEST_CASE("gradients of the full hard model match finite differences") {
    Rng init(19);
    MemVae model(tiny_config(5, 2), random_memory(3, 5, init), init);
    Tensor x = random_binary(5, init);
    ParamList params = model.params();

    // pin the stochastic draws so the objective is deterministic
    const std::size_t a = 1;
    const std::vector<double> eps{0.3, -0.8};
    auto objective = [&] {
        Tensor emem = model.embed_memory();
        JointSample s = model.joint_sample_at(emem, x, a, eps);
        return s.log_weight().item();
    };
    {
        Tape tape;
        Tensor emem = model.embed_memory();
        JointSample s = model.joint_sample_at(emem, x, a, eps);
        tape.backward(s.log_weight());
    }
    auto res = test::fd_check(params, objective, 1e-5);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("baseline VAE forward and gradients") {
    BaselineVaeConfig cfg;
    cfg.d_x = 5;
    cfg.z_dim = 2;
    cfg.enc_hidden = {6};
    cfg.dec_hidden = {6};
    Rng init(20);
    BaselineVae model(cfg, init);
    Tensor x = random_binary(5, init);

    Rng r1(21), r2(21);
    ElboTerms t = model.forward(x, r1);
    CHECK(std::isfinite(t.elbo().item()));
    CHECK(t.kl_a.item() == 0.0);
    CHECK(t.kl_z.item() >= -1e-12);
    CHECK(model.forward(x, r2).elbo().item() == t.elbo().item());

    ParamList params = model.params();
    auto objective = [&] {
        Rng rng(33);
        return model.forward(x, rng).elbo().item();
    };
    {
        Tape tape;
        Rng rng(33);
        tape.backward(model.forward(x, rng).elbo());
    }
    auto res = test::fd_check(params, objective, 1e-5);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("soft attention readout") {
    SoftAttentionConfig cfg;
    cfg.d_x = 4;
    cfg.z_dim = 2;
    cfg.e_dim = 3;
    cfg.enc_hidden = {6};
    cfg.dec_hidden = {6};
    cfg.attn_hidden = {5};
    Rng init(22);
    MemoryBuffer mem = MemoryBuffer::fixed({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 1}});
    SoftAttentionVae model(cfg, std::move(mem), init);

    // zero the query net output: all attention logits equal, so the readout
    // is the memory mean
    ParamList params = model.params();
    for (auto& [name, t] : params) {
        if (name.starts_with("z_query.l1")) {
            for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 0.0;
        }
    }
    Tensor emem = model.embed_memory();
    Tensor z = Tensor::from({0.5, -0.5});
    Tensor w = model.attention_weights(emem, z);
    double wsum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) wsum += w.at(i);
    CHECK(wsum == doctest::Approx(1.0));
    Tensor readout = model.memory_readout(emem, z);
    CHECK(readout.values() ==
          std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3});

    // a single slot reduces to a conditional VAE on that entry
    SoftAttentionVae single(cfg, MemoryBuffer::fixed({{0, 1, 1, 0}}), init);
    Tensor r1 = single.memory_readout(single.embed_memory(), z);
    CHECK(r1.values() == std::vector<double>{0, 1, 1, 0});
}

TEST_CASE("soft attention model gradients match finite differences") {
    SoftAttentionConfig cfg;
    cfg.d_x = 4;
    cfg.z_dim = 2;
    cfg.e_dim = 3;
    cfg.enc_hidden = {5};
    cfg.dec_hidden = {5};
    cfg.attn_hidden = {4};
    Rng init(23);
    MemoryBuffer mem = MemoryBuffer::fixed({{1, 0, 1, 0}, {0, 1, 0, 1}});
    SoftAttentionVae model(cfg, std::move(mem), init);
    Tensor x = Tensor::from({1.0, 0.0, 0.0, 1.0});
    ParamList params = model.params();

    auto objective = [&] {
        Rng rng(44);
        return model.forward(model.embed_memory(), x, rng).elbo().item();
    };
    {
        Tape tape;
        Rng rng(44);
        tape.backward(model.forward(model.embed_memory(), x, rng).elbo());
    }
    auto res = test::fd_check(params, objective, 1e-5);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_err <= 1e-4);
}
