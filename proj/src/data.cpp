#include "memvae/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "memvae/pgm.hpp"

namespace memvae {

std::vector<int> Dataset::distinct_classes() const {
    std::vector<int> cs(class_ids);
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    return cs;
}

std::vector<std::size_t> Dataset::indices_of_class(int c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < class_ids.size(); ++i)
        if (class_ids[i] == c) out.push_back(i);
    return out;
}

// ------------------------------------------------------------- IDX format

IdxArray parse_idx(const unsigned char* bytes, std::size_t len) {
    if (len < 4) throw ParseError("idx: header shorter than 4 bytes", len);
    if (bytes[0] != 0 || bytes[1] != 0)
        throw ParseError("idx: bad magic, first two bytes must be zero",
                         bytes[0] == 0 ? 1 : 0);
    const unsigned type = bytes[2];
    if (type != 0x08)
        throw ParseError("idx: unsupported data type code " + std::to_string(type) +
                             " (only 0x08 unsigned byte is supported)",
                         2);
    const std::size_t rank = bytes[3];
    if (rank == 0 || rank > 4)
        throw ParseError("idx: unsupported rank " + std::to_string(rank), 3);

    IdxArray arr;
    std::size_t offset = 4;
    std::size_t numel = 1;
    for (std::size_t d = 0; d < rank; ++d) {
        if (offset + 4 > len)
            throw ParseError("idx: truncated dimension " + std::to_string(d), offset);
        std::size_t dim = 0;
        for (int b = 0; b < 4; ++b) dim = (dim << 8) | bytes[offset + b];
        offset += 4;
        arr.dims.push_back(dim);
        if (dim != 0 && numel > (len / dim) + 1)
            throw ParseError("idx: dimensions overflow the payload", offset - 4);
        numel *= dim;
    }
    if (offset + numel > len)
        throw ParseError("idx: truncated payload, expected " + std::to_string(numel) +
                             " bytes",
                         len);
    if (offset + numel < len)
        throw ParseError("idx: " + std::to_string(len - offset - numel) +
                             " trailing bytes after payload",
                         offset + numel);
    arr.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i)
        arr.data[i] = static_cast<double>(bytes[offset + i]) / 255.0;
    return arr;
}

IdxArray parse_idx_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open IDX file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return parse_idx(bytes.data(), bytes.size());
}

Dataset dataset_from_idx(const IdxArray& images, const IdxArray* labels,
                         std::string split) {
    if (images.dims.size() != 3)
        throw ParseError("idx images: expected rank 3, got rank " +
                             std::to_string(images.dims.size()),
                         3);
    Dataset ds;
    ds.split = std::move(split);
    const std::size_t n = images.dims[0];
    ds.d_x = images.dims[1] * images.dims[2];
    ds.images.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        ds.images.emplace_back(images.data.begin() + static_cast<std::ptrdiff_t>(i * ds.d_x),
                               images.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * ds.d_x));
    if (labels) {
        if (labels->dims.size() != 1 || labels->dims[0] != n)
            throw ParseError("idx labels: expected rank 1 with " + std::to_string(n) +
                                 " entries",
                             3);
        ds.class_ids.reserve(n);
        for (double v : labels->data)
            ds.class_ids.push_back(static_cast<int>(v * 255.0 + 0.5));
    }
    return ds;
}

// --------------------------------------------------------------- binarize

BinarizeMode binarize_mode_from_string(const std::string& s) {
    if (s == "threshold") return BinarizeMode::threshold;
    if (s == "stochastic") return BinarizeMode::stochastic;
    throw ConfigError("unknown binarize mode: " + s);
}

std::string to_string(BinarizeMode m) {
    return m == BinarizeMode::threshold ? "threshold" : "stochastic";
}

void binarize(Dataset& ds, BinarizeMode mode, Rng* rng) {
    if (mode == BinarizeMode::stochastic && rng == nullptr)
        throw std::invalid_argument("binarize: stochastic mode needs an rng");
    for (auto& img : ds.images)
        for (std::size_t i = 0; i < img.size(); ++i) {
            const double p = img[i];
            if (p < 0.0 || p > 1.0)
                throw DomainError("binarize: pixel " + std::to_string(p) +
                                      " outside [0,1] at index " + std::to_string(i),
                                  i);
            img[i] = (mode == BinarizeMode::threshold) ? (p >= 0.5 ? 1.0 : 0.0)
                                                       : (rng->bernoulli(p) ? 1.0 : 0.0);
        }
}

// -------------------------------------------------------- synthetic corpus

Dataset synth_pattern_corpus(std::size_t n_classes, std::size_t per_class,
                             std::size_t d_x, double flip_rate, Rng& rng) {
    if (n_classes < 1) throw std::invalid_argument("synth corpus: n_classes must be >= 1");
    Dataset ds;
    ds.d_x = d_x;
    ds.split = "train";
    ds.images.reserve(n_classes * per_class);
    ds.class_ids.reserve(n_classes * per_class);
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::vector<double> tmpl(d_x);
        for (auto& v : tmpl) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        for (std::size_t e = 0; e < per_class; ++e) {
            std::vector<double> img = tmpl;
            for (auto& v : img)
                if (rng.bernoulli(flip_rate)) v = 1.0 - v;
            ds.images.push_back(std::move(img));
            ds.class_ids.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

// ------------------------------------------------------------------ episodes

namespace {

// First k entries of a partial Fisher-Yates shuffle of v.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> v, std::size_t k, Rng& rng) {
    if (k > v.size())
        throw std::invalid_argument("sample_without_replacement: asked for " +
                                    std::to_string(k) + " of " +
                                    std::to_string(v.size()));
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_int(v.size() - i);
        std::swap(v[i], v[j]);
    }
    v.resize(k);
    return v;
}

}  // namespace

Episode sample_episode(const Dataset& ds, std::size_t n_classes,
                       std::size_t targets_per_class, std::size_t mem_per_class,
                       Rng& rng) {
    if (!ds.has_labels())
        throw std::invalid_argument("sample_episode: dataset has no class labels");
    Episode ep;
    ep.classes = sample_without_replacement(ds.distinct_classes(), n_classes, rng);
    for (int c : ep.classes) {
        std::vector<std::size_t> pool = ds.indices_of_class(c);
        const std::size_t need = targets_per_class + mem_per_class;
        if (pool.size() < need)
            throw std::invalid_argument("sample_episode: class " + std::to_string(c) +
                                        " has " + std::to_string(pool.size()) +
                                        " examples, needs " + std::to_string(need));
        std::vector<std::size_t> chosen = sample_without_replacement(pool, need, rng);
        for (std::size_t i = 0; i < mem_per_class; ++i)
            ep.memory_indices.push_back(chosen[i]);
        for (std::size_t i = 0; i < targets_per_class; ++i)
            ep.target_indices.push_back(chosen[mem_per_class + i]);
    }
    return ep;
}

MemoryBuffer episode_memory(const Dataset& ds, const Episode& episode) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    rows.reserve(episode.memory_indices.size());
    for (std::size_t i : episode.memory_indices) {
        rows.push_back(ds.images[i]);
        labels.push_back(ds.class_ids[i]);
    }
    return MemoryBuffer::fixed(std::move(rows), std::move(labels));
}

SweepSet test_memory_sweep(const Dataset& ds, std::size_t c_classes,
                           std::size_t n_per_class, std::size_t targets_per_class,
                           Rng& rng) {
    Episode ep = sample_episode(ds, c_classes, targets_per_class, n_per_class, rng);
    SweepSet set;
    set.memory = episode_memory(ds, ep);
    set.target_indices = ep.target_indices;
    return set;
}

// ----------------------------------------------- class-directory image tree

Dataset load_class_image_tree(const std::filesystem::path& root,
                              std::size_t pool_factor, std::string split) {
    if (pool_factor == 0)
        throw std::invalid_argument("load_class_image_tree: pool_factor must be >= 1");
    if (!std::filesystem::is_directory(root))
        throw ConfigError("class image tree root is not a directory: " + root.string());

    std::vector<std::filesystem::path> class_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw ConfigError("class image tree has no class directories: " + root.string());

    Dataset ds;
    ds.split = std::move(split);
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(class_dirs[c]))
            if (entry.is_regular_file() && entry.path().extension() == ".pgm")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            PgmImage img = read_pgm(file);
            const std::size_t pw = img.width / pool_factor;
            const std::size_t ph = img.height / pool_factor;
            if (pw == 0 || ph == 0)
                throw ConfigError("image too small for pooling: " + file.string());
            std::vector<double> pooled(pw * ph, 0.0);
            for (std::size_t y = 0; y < ph * pool_factor; ++y)
                for (std::size_t x = 0; x < pw * pool_factor; ++x) {
                    double& cell = pooled[(y / pool_factor) * pw + x / pool_factor];
                    cell = std::max(cell, img.pixels[y * img.width + x]);
                }
            if (ds.d_x == 0) ds.d_x = pooled.size();
            if (pooled.size() != ds.d_x)
                throw ConfigError("inconsistent image size in " + file.string());
            ds.images.push_back(std::move(pooled));
            ds.class_ids.push_back(static_cast<int>(c));
        }
    }
    if (ds.images.empty())
        throw ConfigError("class image tree contains no .pgm images: " + root.string());
    return ds;
}

}  // namespace memvae
