#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace xpb {

/// Deterministic random source. All sampling helpers are implemented here
/// rather than with std distributions, whose output is implementation-defined;
/// equal seeds must reproduce runs bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [lo, hi], bounds inclusive.
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(bounded(span));
    }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(bounded(n)); }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    /// k distinct indices from [0, n), order randomized.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t bounded(std::uint64_t span) {
        // Lemire multiply-shift; span is tiny relative to 2^64 so the bias is
        // far below anything observable.
        const auto wide = static_cast<unsigned __int128>(next()) * span;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    std::mt19937_64 engine_;
};

/// splitmix64 finalizer; derives independent child seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

/// FNV-1a over a label, for naming derived seed streams.
std::uint64_t hash_label(std::string_view label);

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    return mix_seed(master, hash_label(label));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t n) {
    return mix_seed(mix_seed(master, hash_label(label)), n);
}

}  // namespace xpb
