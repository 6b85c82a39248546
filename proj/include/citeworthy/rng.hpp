#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace citeworthy {

// splitmix64, the single PRNG behind every seeded operation in the toolkit
// (document splits, parameter init, per-epoch shuffles, validation sampling).
// Constants are the reference ones, so a split manifest can be reproduced by
// any implementation of the same generator. See README "Reproducibility".
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 random mantissa bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Plain modulo by design: the (negligible) bias
    // is the price of a rule other implementations can copy in one line.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    // Fisher-Yates, high index down, j = next() % (i + 1).
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

// FNV-1a 64-bit, used to key external vectors by doc_id and to fingerprint
// vocabularies in checkpoints.
inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace citeworthy
