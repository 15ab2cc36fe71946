#include "memvae/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace memvae {

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "memvae") return ModelKind::memvae;
    if (s == "baseline_vae") return ModelKind::baseline_vae;
    if (s == "soft_attention") return ModelKind::soft_attention;
    throw ConfigError("unknown model: " + s);
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "learned_memory") return TrainMode::learned_memory;
    if (s == "few_shot") return TrainMode::few_shot;
    if (s == "recall") return TrainMode::recall;
    throw ConfigError("unknown mode: " + s);
}

DataSource data_source_from_string(const std::string& s) {
    if (s == "synthetic") return DataSource::synthetic;
    if (s == "idx") return DataSource::idx;
    if (s == "image_tree") return DataSource::image_tree;
    throw ConfigError("unknown data source: " + s);
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::memvae: return "memvae";
        case ModelKind::baseline_vae: return "baseline_vae";
        case ModelKind::soft_attention: return "soft_attention";
    }
    return "?";
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::learned_memory: return "learned_memory";
        case TrainMode::few_shot: return "few_shot";
        case TrainMode::recall: return "recall";
    }
    return "?";
}

std::string to_string(DataSource d) {
    switch (d) {
        case DataSource::synthetic: return "synthetic";
        case DataSource::idx: return "idx";
        case DataSource::image_tree: return "image_tree";
    }
    return "?";
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(std::stoul(item));
    }
    return out;
}

std::string size_list_to_string(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw ConfigError("expected a boolean (on/off), got: " + s);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              " is not key=value: " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + " has no key");
        if (kv.count(key))
            throw ConfigError("duplicate config key: " + key);
        kv[key] = value;
    }
    return kv;
}

TrainConfig TrainConfig::from_text(const std::string& text) {
    auto kv = parse_key_values(text);
    TrainConfig cfg;

    std::set<std::string> seen;
    auto take = [&](const std::string& key,
                    const std::function<void(const std::string&)>& apply) {
        seen.insert(key);
        auto it = kv.find(key);
        if (it == kv.end()) return;
        try {
            apply(it->second);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("bad value for " + key + ": " + it->second + " (" +
                              e.what() + ")");
        }
    };

    take("model", [&](const std::string& v) { cfg.model = model_kind_from_string(v); });
    take("mode", [&](const std::string& v) { cfg.mode = train_mode_from_string(v); });
    take("lr", [&](const std::string& v) { cfg.lr = std::stod(v); });
    take("k", [&](const std::string& v) { cfg.k = std::stoul(v); });
    take("batch", [&](const std::string& v) { cfg.batch = std::stoul(v); });
    take("mem_size", [&](const std::string& v) { cfg.mem_size = std::stoul(v); });
    take("weight_decay", [&](const std::string& v) { cfg.weight_decay = std::stod(v); });
    take("steps", [&](const std::string& v) { cfg.steps = std::stoul(v); });
    take("seed", [&](const std::string& v) { cfg.seed = std::stoull(v); });
    take("grad_clip", [&](const std::string& v) { cfg.grad_clip = std::stod(v); });
    take("log_interval", [&](const std::string& v) { cfg.log_interval = std::stoul(v); });
    take("wall_clock", [&](const std::string& v) { cfg.wall_clock = parse_bool(v); });
    take("prior", [&](const std::string& v) { cfg.prior = prior_mode_from_string(v); });
    take("similarity",
         [&](const std::string& v) { cfg.similarity = similarity_kind_from_string(v); });
    take("z_dim", [&](const std::string& v) { cfg.z_dim = std::stoul(v); });
    take("e_dim", [&](const std::string& v) { cfg.e_dim = std::stoul(v); });
    take("enc_hidden", [&](const std::string& v) { cfg.enc_hidden = parse_size_list(v); });
    take("dec_hidden", [&](const std::string& v) { cfg.dec_hidden = parse_size_list(v); });
    take("prior_z_hidden",
         [&](const std::string& v) { cfg.prior_z_hidden = parse_size_list(v); });
    take("emb_hidden", [&](const std::string& v) { cfg.emb_hidden = parse_size_list(v); });
    take("attn_hidden", [&](const std::string& v) { cfg.attn_hidden = parse_size_list(v); });
    take("data", [&](const std::string& v) { cfg.data = data_source_from_string(v); });
    take("data_classes", [&](const std::string& v) { cfg.data_classes = std::stoul(v); });
    take("data_per_class",
         [&](const std::string& v) { cfg.data_per_class = std::stoul(v); });
    take("img_side", [&](const std::string& v) { cfg.img_side = std::stoul(v); });
    take("flip_rate", [&](const std::string& v) { cfg.flip_rate = std::stod(v); });
    take("idx_images", [&](const std::string& v) { cfg.idx_images = v; });
    take("idx_labels", [&](const std::string& v) { cfg.idx_labels = v; });
    take("tree_root", [&](const std::string& v) { cfg.tree_root = v; });
    take("pool_factor", [&](const std::string& v) { cfg.pool_factor = std::stoul(v); });
    take("binarize",
         [&](const std::string& v) { cfg.binarize_mode = binarize_mode_from_string(v); });
    take("episode_classes",
         [&](const std::string& v) { cfg.episode_classes = std::stoul(v); });
    take("targets_per_class",
         [&](const std::string& v) { cfg.targets_per_class = std::stoul(v); });
    take("mem_per_class", [&](const std::string& v) { cfg.mem_per_class = std::stoul(v); });
    take("eval_k", [&](const std::string& v) { cfg.eval_k = std::stoul(v); });

    for (const auto& [key, value] : kv)
        if (!seen.count(key)) throw ConfigError("unknown config key: " + key);

    if (!(cfg.lr > 0)) throw ConfigError("lr must be > 0");
    if (cfg.model == ModelKind::memvae && cfg.k < 2)
        throw ConfigError("k must be >= 2 (the VIMCO learning signal needs K >= 2)");
    if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
    return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return from_text(ss.str());
}

std::string TrainConfig::echo() const {
    std::map<std::string, std::string> kv;
    kv["model"] = to_string(model);
    kv["mode"] = to_string(mode);
    kv["lr"] = std::to_string(lr);
    kv["k"] = std::to_string(k);
    kv["batch"] = std::to_string(batch);
    kv["mem_size"] = std::to_string(mem_size);
    kv["weight_decay"] = std::to_string(weight_decay);
    kv["steps"] = std::to_string(steps);
    kv["seed"] = std::to_string(seed);
    kv["grad_clip"] = std::to_string(grad_clip);
    kv["log_interval"] = std::to_string(log_interval);
    kv["wall_clock"] = wall_clock ? "on" : "off";
    kv["prior"] = to_string(prior);
    kv["similarity"] = to_string(similarity);
    kv["z_dim"] = std::to_string(z_dim);
    kv["e_dim"] = std::to_string(e_dim);
    kv["enc_hidden"] = size_list_to_string(enc_hidden);
    kv["dec_hidden"] = size_list_to_string(dec_hidden);
    kv["prior_z_hidden"] = size_list_to_string(prior_z_hidden);
    kv["emb_hidden"] = size_list_to_string(emb_hidden);
    kv["attn_hidden"] = size_list_to_string(attn_hidden);
    kv["data"] = to_string(data);
    kv["data_classes"] = std::to_string(data_classes);
    kv["data_per_class"] = std::to_string(data_per_class);
    kv["img_side"] = std::to_string(img_side);
    kv["flip_rate"] = std::to_string(flip_rate);
    kv["idx_images"] = idx_images;
    kv["idx_labels"] = idx_labels;
    kv["tree_root"] = tree_root;
    kv["pool_factor"] = std::to_string(pool_factor);
    kv["binarize"] = to_string(binarize_mode);
    kv["episode_classes"] = std::to_string(episode_classes);
    kv["targets_per_class"] = std::to_string(targets_per_class);
    kv["mem_per_class"] = std::to_string(mem_per_class);
    kv["eval_k"] = std::to_string(eval_k);
    std::string out;
    for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
    return out;
}

MemVaeConfig TrainConfig::memvae_config() const {
    MemVaeConfig m;
    m.d_x = d_x();
    m.z_dim = z_dim;
    m.e_dim = e_dim;
    m.enc_hidden = enc_hidden;
    m.dec_hidden = dec_hidden;
    m.prior_z_hidden = prior_z_hidden;
    m.emb_hidden = emb_hidden;
    m.similarity = similarity;
    m.prior_mode = prior;
    return m;
}

BaselineVaeConfig TrainConfig::baseline_config() const {
    BaselineVaeConfig b;
    b.d_x = d_x();
    b.z_dim = z_dim;
    b.enc_hidden = enc_hidden;
    b.dec_hidden = dec_hidden;
    return b;
}

SoftAttentionConfig TrainConfig::soft_config() const {
    SoftAttentionConfig s;
    s.d_x = d_x();
    s.z_dim = z_dim;
    s.e_dim = e_dim;
    s.enc_hidden = enc_hidden;
    s.dec_hidden = dec_hidden;
    s.attn_hidden = attn_hidden;
    s.similarity = similarity;
    return s;
}

namespace {

Dataset load_idx_pair(const std::string& images, const std::string& labels,
                      BinarizeMode mode, std::uint64_t seed, std::string split) {
    if (images.empty()) throw ConfigError("idx data source needs idx_images");
    IdxArray imgs = parse_idx_file(images);
    Dataset ds;
    if (!labels.empty()) {
        IdxArray lbls = parse_idx_file(labels);
        ds = dataset_from_idx(imgs, &lbls, std::move(split));
    } else {
        ds = dataset_from_idx(imgs, nullptr, std::move(split));
    }
    Rng rng(seed, 0xB1AA);
    binarize(ds, mode, &rng);
    return ds;
}

}  // namespace

Dataset TrainConfig::load_train_dataset() const {
    switch (data) {
        case DataSource::synthetic: {
            Rng rng(seed, 0xDA7A);
            return synth_pattern_corpus(data_classes, data_per_class, d_x(), flip_rate,
                                        rng);
        }
        case DataSource::idx:
            return load_idx_pair(idx_images, idx_labels, binarize_mode, seed, "train");
        case DataSource::image_tree: {
            Dataset ds = load_class_image_tree(tree_root, pool_factor, "train");
            Rng rng(seed, 0xB1AA);
            binarize(ds, binarize_mode, &rng);
            return ds;
        }
    }
    throw ConfigError("unhandled data source");
}

Dataset TrainConfig::load_eval_dataset() const {
    switch (data) {
        case DataSource::synthetic: {
            // fresh templates: unseen character classes at evaluation time
            Rng rng(seed, 0xE7A1);
            Dataset ds = synth_pattern_corpus(data_classes, data_per_class, d_x(),
                                              flip_rate, rng);
            for (auto& c : ds.class_ids) c += static_cast<int>(data_classes);
            ds.split = "test";
            return ds;
        }
        case DataSource::idx:
            return load_idx_pair(idx_images, idx_labels, binarize_mode, seed + 1, "test");
        case DataSource::image_tree: {
            Dataset ds = load_class_image_tree(tree_root, pool_factor, "test");
            Rng rng(seed + 1, 0xB1AA);
            binarize(ds, binarize_mode, &rng);
            return ds;
        }
    }
    throw ConfigError("unhandled data source");
}

}  // namespace memvae
