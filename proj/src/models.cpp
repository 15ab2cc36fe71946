#include "memvae/models.hpp"

#include <cmath>

namespace memvae {

namespace {

std::vector<std::size_t> net_sizes(std::size_t in,
                                   const std::vector<std::size_t>& hidden,
                                   std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

DiagGaussianDist gaussian_from_packed(const Tensor& packed, std::size_t z_dim) {
    return DiagGaussianDist(slice(packed, 0, z_dim), slice(packed, z_dim, z_dim));
}

}  // namespace

Tensor JointSample::log_weight() const {
    return sub(add(add(log_p_a, log_p_z), log_p_x), add(log_q_a, log_q_z));
}

Tensor ElboTerms::elbo() const { return sub(recon, add(kl_a, kl_z)); }

ElboTerms elbo_terms(const JointSample& s) {
    ElboTerms t;
    t.recon = s.log_p_x;
    t.kl_a = kl_categorical(s.q_a, s.p_a);
    t.kl_z = (s.q_z && s.p_z) ? kl_diag_gaussian(*s.q_z, *s.p_z) : Tensor::scalar(0.0);
    return t;
}

// ----------------------------------------------------------------- MemVae

MemVae::MemVae(MemVaeConfig cfg, MemoryBuffer mem, Rng& rng)
    : cfg_(cfg), mem_(std::move(mem)) {
    if (mem_.dim() != cfg_.d_x)
        throw ShapeError("MemVae: memory dim " + std::to_string(mem_.dim()) +
                         " does not match d_x " + std::to_string(cfg_.d_x));
    nets_ = EmbeddingNets::init(cfg_.d_x, cfg_.e_dim, cfg_.emb_hidden, rng);
    if (cfg_.z_dim > 0) {
        prior_z_net_ = Mlp::init(net_sizes(cfg_.d_x, cfg_.prior_z_hidden, 2 * cfg_.z_dim), rng);
        posterior_z_net_ =
            Mlp::init(net_sizes(2 * cfg_.d_x, cfg_.enc_hidden, 2 * cfg_.z_dim), rng);
        decoder_ =
            Mlp::init(net_sizes(cfg_.z_dim + cfg_.d_x, cfg_.dec_hidden, cfg_.d_x), rng);
    } else {
        decoder_ = Mlp::init(net_sizes(cfg_.d_x, cfg_.dec_hidden, cfg_.d_x), rng);
    }
}

void MemVae::set_memory(MemoryBuffer mem) {
    if (mem.dim() != cfg_.d_x)
        throw ShapeError("MemVae::set_memory: entry dim does not match d_x");
    mem_ = std::move(mem);
}

Tensor MemVae::embed_memory() const { return memvae::embed_memory(nets_, mem_); }

CategoricalDist MemVae::address_posterior(const Tensor& emem, const Tensor& x) const {
    return memvae::address_posterior(nets_, emem, x, cfg_.similarity);
}

CategoricalDist MemVae::address_prior(const Tensor& emem) const {
    return memvae::address_prior(nets_, emem, cfg_.prior_mode, cfg_.similarity);
}

DiagGaussianDist MemVae::z_prior(const Tensor& m) const {
    if (cfg_.z_dim == 0)
        throw std::logic_error("MemVae::z_prior: model has z_dim == 0");
    return gaussian_from_packed(prior_z_net_.forward(m), cfg_.z_dim);
}

DiagGaussianDist MemVae::z_posterior(const Tensor& x, const Tensor& m) const {
    if (cfg_.z_dim == 0)
        throw std::logic_error("MemVae::z_posterior: model has z_dim == 0");
    return gaussian_from_packed(posterior_z_net_.forward(concat(x, m)), cfg_.z_dim);
}

BernoulliDist MemVae::decode(const Tensor& z, const Tensor& m) const {
    Tensor in = cfg_.z_dim > 0 ? concat(z, m) : m;
    return BernoulliDist(decoder_.forward(in));
}

JointSample MemVae::joint_sample(const Tensor& emem, const Tensor& x, Rng& rng) const {
    CategoricalDist q_a = address_posterior(emem, x);
    const std::size_t a = q_a.sample(rng);
    const std::vector<double> eps = rng.normal_vec(cfg_.z_dim);
    return finish_sample(emem, x, std::move(q_a), a, eps);
}

JointSample MemVae::joint_sample_at(const Tensor& emem, const Tensor& x, std::size_t a,
                                    const std::vector<double>& eps) const {
    return finish_sample(emem, x, address_posterior(emem, x), a, eps);
}

JointSample MemVae::finish_sample(const Tensor& emem, const Tensor& x,
                                  CategoricalDist q_a, std::size_t a,
                                  const std::vector<double>& eps) const {
    JointSample s{.a = a,
                  .z = {},
                  .m = {},
                  .log_q_a = {},
                  .log_q_z = {},
                  .log_p_a = {},
                  .log_p_z = {},
                  .log_p_x = {},
                  .q_a = std::move(q_a),
                  .p_a = address_prior(emem),
                  .q_z = {},
                  .p_z = {}};
    s.m = mem_.read(a);
    s.log_q_a = s.q_a.log_prob(a);
    s.log_p_a = s.p_a.log_prob(a);
    if (cfg_.z_dim > 0) {
        s.q_z = z_posterior(x, s.m);
        s.p_z = z_prior(s.m);
        s.z = s.q_z->sample_with(eps);
        s.log_q_z = s.q_z->log_prob(s.z);
        s.log_p_z = s.p_z->log_prob(s.z);
    } else {
        s.z = Tensor::zeros({0});
        s.log_q_z = Tensor::scalar(0.0);
        s.log_p_z = Tensor::scalar(0.0);
    }
    s.log_p_x = decode(s.z, s.m).log_prob(x);
    return s;
}

double MemVae::marginal_log_likelihood(const Tensor& x, std::size_t z_draws,
                                       Rng& rng) const {
    if (mem_.slots() > 256)
        throw ShapeError("marginal_log_likelihood: |M| = " +
                         std::to_string(mem_.slots()) +
                         " is too large for address enumeration");
    Tensor emem = embed_memory();
    CategoricalDist prior = address_prior(emem);
    std::vector<double> per_address(mem_.slots());
    for (std::size_t a = 0; a < mem_.slots(); ++a) {
        Tensor m = mem_.read(a);
        double inner;
        if (cfg_.z_dim == 0) {
            inner = decode(Tensor::zeros({0}), m).log_prob(x).item();
        } else {
            // importance sampling with q(z|m_a, x) as the proposal
            DiagGaussianDist q = z_posterior(x, m);
            DiagGaussianDist p = z_prior(m);
            std::vector<double> logw(z_draws);
            for (std::size_t j = 0; j < z_draws; ++j) {
                Tensor z = q.sample_reparam(rng);
                logw[j] = p.log_prob(z).item() + decode(z, m).log_prob(x).item() -
                          q.log_prob(z).item();
            }
            inner = logsumexp(Tensor::from(logw)).item() -
                    std::log(static_cast<double>(z_draws));
        }
        per_address[a] = prior.log_prob(a).item() + inner;
    }
    return logsumexp(Tensor::from(per_address)).item();
}

std::vector<GeneratedSample> MemVae::generate(
    Rng& rng, std::size_t n, std::optional<std::size_t> fixed_address) const {
    std::vector<GeneratedSample> out;
    if (n == 0) return out;
    Tensor emem = embed_memory();
    CategoricalDist prior = address_prior(emem);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        GeneratedSample g;
        g.address = fixed_address ? *fixed_address : prior.sample(rng);
        if (g.address >= mem_.slots())
            throw std::out_of_range("generate: fixed address out of range");
        Tensor m = mem_.read(g.address);
        Tensor z = cfg_.z_dim > 0 ? z_prior(m).sample_reparam(rng) : Tensor::zeros({0});
        BernoulliDist px = decode(z, m);
        g.pixels = px.sample(rng);
        g.mean_pixels = px.mean().values();
        out.push_back(std::move(g));
    }
    return out;
}

ParamList MemVae::params() {
    ParamList p;
    nets_.collect_params("nets", p);
    if (cfg_.z_dim > 0) {
        prior_z_net_.collect_params("prior_z", p);
        posterior_z_net_.collect_params("posterior_z", p);
    }
    decoder_.collect_params("decoder", p);
    if (mem_.trainable()) p.add("memory.entries", mem_.entries());
    return p;
}

// ------------------------------------------------------------ BaselineVae

BaselineVae::BaselineVae(BaselineVaeConfig cfg, Rng& rng) : cfg_(cfg) {
    encoder_ = Mlp::init(net_sizes(cfg_.d_x, cfg_.enc_hidden, 2 * cfg_.z_dim), rng);
    decoder_ = Mlp::init(net_sizes(cfg_.z_dim, cfg_.dec_hidden, cfg_.d_x), rng);
}

DiagGaussianDist BaselineVae::posterior(const Tensor& x) const {
    return gaussian_from_packed(encoder_.forward(x), cfg_.z_dim);
}

BernoulliDist BaselineVae::decode(const Tensor& z) const {
    return BernoulliDist(decoder_.forward(z));
}

ElboTerms BaselineVae::forward(const Tensor& x, Rng& rng) const {
    DiagGaussianDist q = posterior(x);
    Tensor z = q.sample_reparam(rng);
    ElboTerms t;
    t.recon = decode(z).log_prob(x);
    t.kl_a = Tensor::scalar(0.0);
    t.kl_z = kl_diag_gaussian(q, DiagGaussianDist::standard(cfg_.z_dim));
    return t;
}

Tensor BaselineVae::sample_log_weight(const Tensor& x, Rng& rng) const {
    DiagGaussianDist q = posterior(x);
    DiagGaussianDist p = DiagGaussianDist::standard(cfg_.z_dim);
    Tensor z = q.sample_reparam(rng);
    return sub(add(p.log_prob(z), decode(z).log_prob(x)), q.log_prob(z));
}

ParamList BaselineVae::params() {
    ParamList p;
    encoder_.collect_params("encoder", p);
    decoder_.collect_params("decoder", p);
    return p;
}

// -------------------------------------------------------- SoftAttentionVae

SoftAttentionVae::SoftAttentionVae(SoftAttentionConfig cfg, MemoryBuffer mem, Rng& rng)
    : cfg_(cfg), mem_(std::move(mem)) {
    if (mem_.dim() != cfg_.d_x)
        throw ShapeError("SoftAttentionVae: memory dim does not match d_x");
    if (mem_.trainable())
        throw std::logic_error("SoftAttentionVae: expects non-trainable memory");
    encoder_ = Mlp::init(net_sizes(cfg_.d_x, cfg_.enc_hidden, 2 * cfg_.z_dim), rng);
    z_query_ = Mlp::init(net_sizes(cfg_.z_dim, cfg_.attn_hidden, cfg_.e_dim), rng);
    mem_embed_ = Mlp::init(net_sizes(cfg_.d_x, cfg_.attn_hidden, cfg_.e_dim), rng);
    decoder_ = Mlp::init(net_sizes(cfg_.z_dim + cfg_.d_x, cfg_.dec_hidden, cfg_.d_x), rng);
}

void SoftAttentionVae::set_memory(MemoryBuffer mem) {
    if (mem.dim() != cfg_.d_x)
        throw ShapeError("SoftAttentionVae::set_memory: entry dim does not match d_x");
    mem_ = std::move(mem);
}

Tensor SoftAttentionVae::embed_memory() const {
    return mem_embed_.forward(mem_.entries());
}

DiagGaussianDist SoftAttentionVae::posterior(const Tensor& x) const {
    return gaussian_from_packed(encoder_.forward(x), cfg_.z_dim);
}

Tensor SoftAttentionVae::attention_weights(const Tensor& emem, const Tensor& z) const {
    Tensor scores = similarity_scores(emem, z_query_.forward(z), cfg_.similarity);
    return exp(CategoricalDist(scores).log_probs());  // softmax, sums to 1
}

Tensor SoftAttentionVae::memory_readout(const Tensor& emem, const Tensor& z) const {
    Tensor w = attention_weights(emem, z);  // [M]
    const std::size_t m = mem_.slots(), d = mem_.dim();
    return reshape(matmul(reshape(w, {1, m}), mem_.entries()), {d});
}

BernoulliDist SoftAttentionVae::decode(const Tensor& z, const Tensor& readout) const {
    return BernoulliDist(decoder_.forward(concat(z, readout)));
}

ElboTerms SoftAttentionVae::forward(const Tensor& emem, const Tensor& x,
                                    Rng& rng) const {
    DiagGaussianDist q = posterior(x);
    Tensor z = q.sample_reparam(rng);
    ElboTerms t;
    t.recon = decode(z, memory_readout(emem, z)).log_prob(x);
    t.kl_a = Tensor::scalar(0.0);
    t.kl_z = kl_diag_gaussian(q, DiagGaussianDist::standard(cfg_.z_dim));
    return t;
}

Tensor SoftAttentionVae::sample_log_weight(const Tensor& emem, const Tensor& x,
                                           Rng& rng) const {
    DiagGaussianDist q = posterior(x);
    DiagGaussianDist p = DiagGaussianDist::standard(cfg_.z_dim);
    Tensor z = q.sample_reparam(rng);
    Tensor log_p_x = decode(z, memory_readout(emem, z)).log_prob(x);
    return sub(add(p.log_prob(z), log_p_x), q.log_prob(z));
}

ParamList SoftAttentionVae::params() {
    ParamList p;
    encoder_.collect_params("encoder", p);
    z_query_.collect_params("z_query", p);
    mem_embed_.collect_params("mem_embed", p);
    decoder_.collect_params("decoder", p);
    return p;
}

}  // namespace memvae
