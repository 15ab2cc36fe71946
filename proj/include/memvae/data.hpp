#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memvae/memory.hpp"
#include "memvae/rng.hpp"

namespace memvae {

// Binary image dataset. Pixels are in [0,1] after ingestion and in {0,1}
// after binarize(); D_x is constant across the dataset.
struct Dataset {
    std::size_t d_x = 0;
    std::vector<std::vector<double>> images;
    std::vector<int> class_ids;  // empty when unlabeled
    std::string split;           // "train" or "test"

    std::size_t size() const { return images.size(); }
    bool has_labels() const { return !class_ids.empty(); }
    std::vector<int> distinct_classes() const;
    std::vector<std::size_t> indices_of_class(int c) const;
};

// ------------------------------------------------------------- IDX format

struct IdxArray {
    std::vector<std::size_t> dims;
    std::vector<double> data;  // unsigned bytes scaled to [0,1]
};

// Parses an IDX stream: two zero magic bytes, a data-type code (only 0x08,
// unsigned byte, is accepted), a rank byte, big-endian u32 dimension sizes,
// then the payload. Rejects truncated or over-long input with the byte
// offset of the failure.
IdxArray parse_idx(const unsigned char* bytes, std::size_t len);
IdxArray parse_idx_file(const std::filesystem::path& path);

// Rank-3 IDX images (+ optional rank-1 labels) to a Dataset.
Dataset dataset_from_idx(const IdxArray& images, const IdxArray* labels,
                         std::string split);

// --------------------------------------------------------------- binarize

enum class BinarizeMode { threshold, stochastic };
BinarizeMode binarize_mode_from_string(const std::string& s);
std::string to_string(BinarizeMode m);

// threshold: pixel >= 0.5 -> 1 (deterministic); stochastic: Bernoulli(pixel).
// Pixels must already be in [0,1].
void binarize(Dataset& ds, BinarizeMode mode, Rng* rng = nullptr);

// -------------------------------------------------------- synthetic corpus

// Deterministic class-structured corpus: each class is a random binary
// template; examples are the template with i.i.d. pixel flips at flip_rate.
Dataset synth_pattern_corpus(std::size_t n_classes, std::size_t per_class,
                             std::size_t d_x, double flip_rate, Rng& rng);

// ----------------------------------------------------------- episodes

// One few-shot training unit: indices into the dataset for the examples that
// populate M and the disjoint targets, sharing the same sampled classes.
struct Episode {
    std::vector<std::size_t> memory_indices;
    std::vector<std::size_t> target_indices;
    std::vector<int> classes;
};

// Samples n_classes classes without replacement, then per class
// mem_per_class memory examples and targets_per_class disjoint targets.
// Errors name the class that has too few examples.
Episode sample_episode(const Dataset& ds, std::size_t n_classes,
                       std::size_t targets_per_class, std::size_t mem_per_class,
                       Rng& rng);

// Labeled memory built from an episode's memory examples.
MemoryBuffer episode_memory(const Dataset& ds, const Episode& episode);

// ------------------------------------------------- test-time memory sweeps

struct SweepSet {
    MemoryBuffer memory;                      // C*N labeled entries
    std::vector<std::size_t> target_indices;  // evaluation targets, disjoint
};

// Builds an evaluation memory of C classes x N entries from held-out data
// and reserves targets_per_class disjoint examples of the same classes as
// evaluation targets.
SweepSet test_memory_sweep(const Dataset& ds, std::size_t c_classes,
                           std::size_t n_per_class, std::size_t targets_per_class,
                           Rng& rng);

// ----------------------------------------------- class-directory image tree

// Loads an Omniglot-style tree: one subdirectory per class containing PGM
// images, max-pooled by pool_factor in each direction. Class ids follow the
// sorted directory names. Pixels stay in [0,1]; callers binarize.
Dataset load_class_image_tree(const std::filesystem::path& root,
                              std::size_t pool_factor, std::string split);

}  // namespace memvae
