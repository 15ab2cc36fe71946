#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "memvae/data.hpp"
#include "memvae/memory.hpp"
#include "memvae/models.hpp"

namespace memvae {

enum class ModelKind { memvae, baseline_vae, soft_attention };
enum class TrainMode { learned_memory, few_shot, recall };
enum class DataSource { synthetic, idx, image_tree };

ModelKind model_kind_from_string(const std::string& s);
TrainMode train_mode_from_string(const std::string& s);
DataSource data_source_from_string(const std::string& s);
std::string to_string(ModelKind k);
std::string to_string(TrainMode m);
std::string to_string(DataSource d);

// Flat key=value run configuration. Unknown keys are errors; the effective
// configuration (defaults included) is echoed into the run directory.
struct TrainConfig {
    ModelKind model = ModelKind::memvae;
    TrainMode mode = TrainMode::recall;

    double lr = 3e-4;
    std::size_t k = 4;
    std::size_t batch = 32;
    std::size_t mem_size = 16;  // |M| for recall / learned-memory modes
    double weight_decay = 0.0;  // never applied to the memory M
    std::size_t steps = 2000;
    std::uint64_t seed = 0;
    double grad_clip = 0.0;  // 0 disables clipping
    std::size_t log_interval = 50;
    bool wall_clock = true;  // off: wall_ms logged as 0 for byte-identical runs

    PriorMode prior = PriorMode::learned;
    SimilarityKind similarity = SimilarityKind::normalized_inner;

    std::size_t z_dim = 8;
    std::size_t e_dim = 32;
    std::vector<std::size_t> enc_hidden{64, 32};
    std::vector<std::size_t> dec_hidden{64, 32};
    std::vector<std::size_t> prior_z_hidden{32};
    std::vector<std::size_t> emb_hidden{128};
    std::vector<std::size_t> attn_hidden{32};

    DataSource data = DataSource::synthetic;
    std::size_t data_classes = 16;
    std::size_t data_per_class = 32;
    std::size_t img_side = 8;
    double flip_rate = 0.05;
    std::string idx_images, idx_labels;  // idx source
    std::string tree_root;               // image_tree source
    std::size_t pool_factor = 4;
    BinarizeMode binarize_mode = BinarizeMode::threshold;

    std::size_t episode_classes = 8;
    std::size_t targets_per_class = 4;
    std::size_t mem_per_class = 1;

    std::size_t eval_k = 100;

    std::size_t d_x() const { return img_side * img_side; }

    static TrainConfig from_text(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    std::string echo() const;  // sorted key=value lines

    MemVaeConfig memvae_config() const;
    BaselineVaeConfig baseline_config() const;
    SoftAttentionConfig soft_config() const;

    // Loads or synthesizes the training dataset named by the data keys.
    Dataset load_train_dataset() const;
    // Held-out data from the same source family (fresh classes for the
    // synthetic corpus, the test IDX pair when given, the same tree split).
    Dataset load_eval_dataset() const;
};

// Raw key=value parsing (comment lines start with '#').
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace memvae
