#pragma once

// Builders and a mutation corpus for IDX parser robustness tests.

#include <cstdint>
#include <vector>

namespace memvae::test {

inline std::vector<unsigned char> build_idx(const std::vector<std::uint32_t>& dims,
                                            const std::vector<unsigned char>& payload,
                                            unsigned char type = 0x08) {
    std::vector<unsigned char> b{0, 0, type, static_cast<unsigned char>(dims.size())};
    for (std::uint32_t d : dims) {
        b.push_back(static_cast<unsigned char>(d >> 24));
        b.push_back(static_cast<unsigned char>(d >> 16));
        b.push_back(static_cast<unsigned char>(d >> 8));
        b.push_back(static_cast<unsigned char>(d));
    }
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

// Mutated fixtures that must all be rejected: every truncation of a valid
// file, header corruption, dimension inflation, trailing bytes, bad type and
// rank codes.
inline std::vector<std::vector<unsigned char>> idx_fuzz_corpus() {
    std::vector<std::vector<unsigned char>> out;
    const auto good = build_idx({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});

    for (std::size_t n = 0; n < good.size(); ++n)
        out.emplace_back(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));

    for (std::size_t i = 0; i < 4; ++i)
        for (unsigned char flip : {0x01, 0xFF}) {
            auto m = good;
            m[i] ^= flip;
            out.push_back(std::move(m));
        }

    for (std::size_t i = 4; i < 16; ++i) {
        auto m = good;
        m[i] = 0xFF;
        out.push_back(std::move(m));
    }

    auto trail1 = good;
    trail1.push_back(0x00);
    out.push_back(std::move(trail1));
    auto trail2 = good;
    trail2.insert(trail2.end(), {9, 9, 9});
    out.push_back(std::move(trail2));

    out.push_back(build_idx({2, 2}, {1, 2, 3, 4}, 0x0D));  // float type code
    out.push_back(build_idx({2, 2}, {1, 2, 3, 4}, 0x09));  // signed byte code
    out.push_back({0, 0, 0x08, 0});                        // rank 0
    out.push_back({0, 0, 0x08, 5, 0, 0, 0, 1});            // rank 5
    return out;
}

}  // namespace memvae::test
