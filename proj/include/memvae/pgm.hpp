#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace memvae {

struct PgmImage {
    std::size_t width = 0, height = 0;
    std::vector<double> pixels;  // row-major, values in [0, 1]
};

// Binary (P5) 8-bit PGM. Pixel doubles are clamped to [0, 1].
void write_pgm(const std::filesystem::path& path, const PgmImage& img);
PgmImage read_pgm(const std::filesystem::path& path);  // P5 or P2

// Lays out equally sized images on a grid (row-major, `cols` per row) and
// writes one PGM. 1-pixel separators are drawn at mid gray.
void write_pgm_grid(const std::filesystem::path& path,
                    const std::vector<std::vector<double>>& images,
                    std::size_t img_width, std::size_t img_height,
                    std::size_t cols);

}  // namespace memvae
