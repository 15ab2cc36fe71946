#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memvae/distributions.hpp"
#include "memvae/nn.hpp"
#include "memvae/rng.hpp"
#include "memvae/tensor.hpp"

namespace memvae {

enum class SimilarityKind { normalized_inner, inner, cosine };
enum class PriorMode { learned, flat };

SimilarityKind similarity_kind_from_string(const std::string& s);
std::string to_string(SimilarityKind k);
PriorMode prior_mode_from_string(const std::string& s);
std::string to_string(PriorMode m);

// The memory buffer M: |M| raw pixel-space entries. In trainable mode the
// entries are model parameters updated by the optimizer; otherwise they are
// refreshed between steps (few-shot / recall) and carry no gradient.
class MemoryBuffer {
public:
    MemoryBuffer() = default;

    // Learned-memory mode: entries drawn from N(0, 0.05^2) so that initial
    // similarities are small and addressing starts near uniform.
    static MemoryBuffer learned(std::size_t slots, std::size_t dim, Rng& rng);

    // Fixed contents (few-shot / recall / evaluation), optionally labeled.
    static MemoryBuffer fixed(std::vector<std::vector<double>> rows,
                              std::vector<int> labels = {});

    std::size_t slots() const { return entries_.defined() ? entries_.shape()[0] : 0; }
    std::size_t dim() const { return entries_.defined() ? entries_.shape()[1] : 0; }
    bool trainable() const { return trainable_; }

    const Tensor& entries() const { return entries_; }
    Tensor& entries() { return entries_; }
    const std::optional<std::vector<int>>& labels() const { return labels_; }
    int label_of(std::size_t slot) const;

    // Deterministic read of row a. In trainable mode the read is recorded on
    // the live tape so decoder gradients update the memory contents.
    Tensor read(std::size_t a) const;

    // Replaces the contents between steps. Only valid for non-trainable
    // memory; the embedding cache held by callers must be recomputed.
    void refresh(std::vector<std::vector<double>> rows, std::vector<int> labels = {});

private:
    Tensor entries_;  // [slots x dim]
    bool trainable_ = false;
    std::optional<std::vector<int>> labels_;
};

// The two embedding MLPs and the learned prior query point. h_mem is shared
// between the prior p(a) and the posterior q(a|x); h_query embeds targets.
// Their parameters are untied.
struct EmbeddingNets {
    Mlp h_mem;       // R^{D_x} -> R^{|e|}
    Mlp h_query;     // R^{D_x} -> R^{|e|}
    Tensor e_prior;  // [|e|]

    static EmbeddingNets init(std::size_t d_x, std::size_t e_dim,
                              const std::vector<std::size_t>& hidden, Rng& rng);
    std::size_t e_dim() const { return e_prior.size(); }
    void collect_params(const std::string& prefix, ParamList& out) const;
};

// Embeds every memory row once; the result is reused for all queries of a
// minibatch, which keeps the per-batch similarity cost at O(|M||B||e|).
Tensor embed_memory(const EmbeddingNets& nets, const MemoryBuffer& mem);  // [M x e]

// Similarity between one memory embedding and one query embedding.
// normalized_inner is <e_a, e_q> / max(||e_a||, 1e-8), the model default.
Tensor similarity(const Tensor& e_a, const Tensor& e_q, SimilarityKind kind);

// Scores of one query embedding against all memory embeddings. [M]
Tensor similarity_scores(const Tensor& emem, const Tensor& e_q, SimilarityKind kind);

// Scores of a batch of query embeddings against all memory embeddings,
// computed with a single [B x e] . [e x M] product. [B x M]
Tensor batch_similarity(const Tensor& emem, const Tensor& e_queries,
                        SimilarityKind kind);

// q(a|x): softmax over S^q(m_a, x).
CategoricalDist address_posterior(const EmbeddingNets& nets, const Tensor& emem,
                                  const Tensor& x, SimilarityKind kind);

// p(a): learned mode scores the memory embeddings against the trained query
// point e^p; flat mode is uniform over the slots.
CategoricalDist address_prior(const EmbeddingNets& nets, const Tensor& emem,
                              PriorMode mode, SimilarityKind kind);

// Memory snapshot as a PGM grid for visual inspection.
void write_memory_pgm(const MemoryBuffer& mem, const std::filesystem::path& path,
                      std::size_t img_width, std::size_t img_height,
                      std::size_t cols = 8);

}  // namespace memvae
