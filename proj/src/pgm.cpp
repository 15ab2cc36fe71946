#include "memvae/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>

#include "memvae/errors.hpp"

namespace memvae {

void write_pgm(const std::filesystem::path& path, const PgmImage& img) {
    if (img.pixels.size() != img.width * img.height)
        throw ShapeError("write_pgm: pixel count does not match dimensions");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pgm: cannot open " + path.string());
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (double v : img.pixels) {
        const double c = std::clamp(v, 0.0, 1.0);
        f.put(static_cast<char>(static_cast<unsigned char>(c * 255.0 + 0.5)));
    }
}

namespace {

// Reads the next whitespace/comment-delimited token of a PGM header.
std::string next_token(std::istream& in, std::size_t& offset) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        ++offset;
        if (c == '#') {  // comment to end of line
            while ((c = in.get()) != EOF && c != '\n') ++offset;
            ++offset;
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_pgm: cannot open " + path.string());
    std::size_t offset = 0;
    const std::string magic = next_token(f, offset);
    if (magic != "P5" && magic != "P2")
        throw ParseError("read_pgm: bad magic '" + magic + "'", 0);
    const std::string ws = next_token(f, offset);
    const std::string hs = next_token(f, offset);
    const std::string ms = next_token(f, offset);
    if (ws.empty() || hs.empty() || ms.empty())
        throw ParseError("read_pgm: truncated header", offset);
    PgmImage img;
    img.width = std::stoul(ws);
    img.height = std::stoul(hs);
    const double maxval = std::stod(ms);
    if (maxval <= 0 || maxval > 65535)
        throw ParseError("read_pgm: bad maxval", offset);
    img.pixels.resize(img.width * img.height);
    if (magic == "P5") {
        for (auto& px : img.pixels) {
            const int c = f.get();
            if (c == EOF) throw ParseError("read_pgm: truncated pixel data", offset);
            ++offset;
            px = static_cast<double>(c) / maxval;
        }
    } else {
        for (auto& px : img.pixels) {
            const std::string tok = next_token(f, offset);
            if (tok.empty()) throw ParseError("read_pgm: truncated pixel data", offset);
            px = std::stod(tok) / maxval;
        }
    }
    return img;
}

void write_pgm_grid(const std::filesystem::path& path,
                    const std::vector<std::vector<double>>& images,
                    std::size_t img_width, std::size_t img_height,
                    std::size_t cols) {
    if (images.empty()) {
        write_pgm(path, PgmImage{0, 0, {}});
        return;
    }
    cols = std::max<std::size_t>(1, std::min(cols, images.size()));
    const std::size_t rows = (images.size() + cols - 1) / cols;
    const std::size_t gw = cols * img_width + (cols - 1);
    const std::size_t gh = rows * img_height + (rows - 1);
    PgmImage grid{gw, gh, std::vector<double>(gw * gh, 0.5)};
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (images[n].size() != img_width * img_height)
            throw ShapeError("write_pgm_grid: image " + std::to_string(n) +
                             " has wrong pixel count");
        const std::size_t gr = n / cols, gc = n % cols;
        const std::size_t y0 = gr * (img_height + 1), x0 = gc * (img_width + 1);
        for (std::size_t y = 0; y < img_height; ++y)
            for (std::size_t x = 0; x < img_width; ++x)
                grid.pixels[(y0 + y) * gw + x0 + x] = images[n][y * img_width + x];
    }
    write_pgm(path, grid);
}

}  // namespace memvae
