#include "memvae/memory.hpp"

#include <cmath>

#include "memvae/pgm.hpp"

namespace memvae {

SimilarityKind similarity_kind_from_string(const std::string& s) {
    if (s == "normalized_inner") return SimilarityKind::normalized_inner;
    if (s == "inner") return SimilarityKind::inner;
    if (s == "cosine") return SimilarityKind::cosine;
    throw ConfigError("unknown similarity kind: " + s);
}

std::string to_string(SimilarityKind k) {
    switch (k) {
        case SimilarityKind::normalized_inner: return "normalized_inner";
        case SimilarityKind::inner: return "inner";
        case SimilarityKind::cosine: return "cosine";
    }
    return "?";
}

PriorMode prior_mode_from_string(const std::string& s) {
    if (s == "learned") return PriorMode::learned;
    if (s == "flat") return PriorMode::flat;
    throw ConfigError("unknown prior mode: " + s);
}

std::string to_string(PriorMode m) {
    return m == PriorMode::learned ? "learned" : "flat";
}

// ---------------------------------------------------------- MemoryBuffer

MemoryBuffer MemoryBuffer::learned(std::size_t slots, std::size_t dim, Rng& rng) {
    if (slots == 0) throw ShapeError("MemoryBuffer: need at least one slot");
    std::vector<double> v(slots * dim);
    for (auto& x : v) x = 0.05 * rng.normal();
    MemoryBuffer m;
    m.entries_ = Tensor::from(std::move(v), {slots, dim}, /*requires_grad=*/true);
    m.trainable_ = true;
    return m;
}

MemoryBuffer MemoryBuffer::fixed(std::vector<std::vector<double>> rows,
                                 std::vector<int> labels) {
    MemoryBuffer m;
    m.refresh(std::move(rows), std::move(labels));
    return m;
}

int MemoryBuffer::label_of(std::size_t slot) const {
    if (!labels_) throw std::logic_error("MemoryBuffer: memory has no labels");
    return (*labels_)[slot];
}

Tensor MemoryBuffer::read(std::size_t a) const {
    if (a >= slots())
        throw std::out_of_range("MemoryBuffer::read: slot " + std::to_string(a) +
                                " not in [0, " + std::to_string(slots()) + ")");
    return row(entries_, a);
}

void MemoryBuffer::refresh(std::vector<std::vector<double>> rows,
                           std::vector<int> labels) {
    if (trainable_)
        throw std::logic_error("MemoryBuffer::refresh: learned memory is not refreshed");
    if (rows.empty()) throw ShapeError("MemoryBuffer: need at least one slot");
    const std::size_t dim = rows[0].size();
    std::vector<double> flat;
    flat.reserve(rows.size() * dim);
    for (const auto& r : rows) {
        if (r.size() != dim)
            throw ShapeError("MemoryBuffer: rows have inconsistent dimensions");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    if (!labels.empty() && labels.size() != rows.size())
        throw ShapeError("MemoryBuffer: label count does not match row count");
    entries_ = Tensor::from(std::move(flat), {rows.size(), dim});
    labels_ = labels.empty() ? std::optional<std::vector<int>>{}
                             : std::optional<std::vector<int>>{std::move(labels)};
}

// --------------------------------------------------------- EmbeddingNets

EmbeddingNets EmbeddingNets::init(std::size_t d_x, std::size_t e_dim,
                                  const std::vector<std::size_t>& hidden, Rng& rng) {
    std::vector<std::size_t> sizes{d_x};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(e_dim);
    EmbeddingNets nets;
    nets.h_mem = Mlp::init(sizes, rng);
    nets.h_query = Mlp::init(sizes, rng);
    std::vector<double> ep(e_dim);
    for (auto& v : ep) v = 0.05 * rng.normal();
    nets.e_prior = Tensor::from(std::move(ep), {e_dim}, /*requires_grad=*/true);
    return nets;
}

void EmbeddingNets::collect_params(const std::string& prefix, ParamList& out) const {
    h_mem.collect_params(prefix + ".h_mem", out);
    h_query.collect_params(prefix + ".h_query", out);
    out.add(prefix + ".e_prior", e_prior);
}

// ------------------------------------------------------------ similarity

Tensor embed_memory(const EmbeddingNets& nets, const MemoryBuffer& mem) {
    return nets.h_mem.forward(mem.entries());  // [M x e]
}

namespace {
constexpr double kNormFloor = 1e-8;

Tensor row_norms(const Tensor& emem) {  // [M]
    return clamp_min(sqrt(sum(mul(emem, emem), 1)), kNormFloor);
}
}  // namespace

Tensor similarity(const Tensor& e_a, const Tensor& e_q, SimilarityKind kind) {
    if (e_a.shape() != e_q.shape() || e_a.rank() != 1)
        throw ShapeError("similarity: embeddings " + shape_str(e_a.shape()) + " and " +
                         shape_str(e_q.shape()) + " must be equal-length vectors");
    Tensor ip = sum(mul(e_a, e_q));
    switch (kind) {
        case SimilarityKind::inner:
            return ip;
        case SimilarityKind::normalized_inner:
            return div(ip, clamp_min(sqrt(sum(mul(e_a, e_a))), kNormFloor));
        case SimilarityKind::cosine:
            return div(ip, mul(clamp_min(sqrt(sum(mul(e_a, e_a))), kNormFloor),
                               clamp_min(sqrt(sum(mul(e_q, e_q))), kNormFloor)));
    }
    throw std::logic_error("similarity: unreachable");
}

Tensor similarity_scores(const Tensor& emem, const Tensor& e_q, SimilarityKind kind) {
    if (emem.rank() != 2 || e_q.rank() != 1 || emem.shape()[1] != e_q.size())
        throw ShapeError("similarity_scores: incompatible shapes " +
                         shape_str(emem.shape()) + " and " + shape_str(e_q.shape()));
    const std::size_t m = emem.shape()[0], e = emem.shape()[1];
    Tensor ip = reshape(matmul(emem, reshape(e_q, {e, 1})), {m});  // [M]
    switch (kind) {
        case SimilarityKind::inner:
            return ip;
        case SimilarityKind::normalized_inner:
            return div(ip, row_norms(emem));
        case SimilarityKind::cosine:
            return div(ip, mul(row_norms(emem),
                               clamp_min(sqrt(sum(mul(e_q, e_q))), kNormFloor)));
    }
    throw std::logic_error("similarity_scores: unreachable");
}

Tensor batch_similarity(const Tensor& emem, const Tensor& e_queries,
                        SimilarityKind kind) {
    if (emem.rank() != 2 || e_queries.rank() != 2 ||
        emem.shape()[1] != e_queries.shape()[1])
        throw ShapeError("batch_similarity: incompatible shapes " +
                         shape_str(emem.shape()) + " and " +
                         shape_str(e_queries.shape()));
    Tensor scores = matmul(e_queries, transpose(emem));  // [B x M], one product
    switch (kind) {
        case SimilarityKind::inner:
            return scores;
        case SimilarityKind::normalized_inner:
            return div(scores, row_norms(emem));  // [M] broadcasts over rows
        case SimilarityKind::cosine: {
            const std::size_t b = e_queries.shape()[0];
            Tensor qn = clamp_min(sqrt(sum(mul(e_queries, e_queries), 1)), kNormFloor);
            return div(div(scores, row_norms(emem)), reshape(qn, {b, 1}));
        }
    }
    throw std::logic_error("batch_similarity: unreachable");
}

CategoricalDist address_posterior(const EmbeddingNets& nets, const Tensor& emem,
                                  const Tensor& x, SimilarityKind kind) {
    return CategoricalDist(similarity_scores(emem, nets.h_query.forward(x), kind));
}

CategoricalDist address_prior(const EmbeddingNets& nets, const Tensor& emem,
                              PriorMode mode, SimilarityKind kind) {
    if (mode == PriorMode::flat) return CategoricalDist::uniform(emem.shape()[0]);
    return CategoricalDist(similarity_scores(emem, nets.e_prior, kind));
}

void write_memory_pgm(const MemoryBuffer& mem, const std::filesystem::path& path,
                      std::size_t img_width, std::size_t img_height,
                      std::size_t cols) {
    if (img_width * img_height != mem.dim())
        throw ShapeError("write_memory_pgm: image dims do not match entry dim");
    std::vector<std::vector<double>> rows;
    rows.reserve(mem.slots());
    for (std::size_t a = 0; a < mem.slots(); ++a) rows.push_back(mem.read(a).values());
    write_pgm_grid(path, rows, img_width, img_height, cols);
}

}  // namespace memvae
