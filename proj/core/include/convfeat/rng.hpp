#pragma once

#include <cstdint>
#include <vector>

namespace convfeat {

// Deterministic 64-bit generator (SplitMix64). The stream depends only on
// integer arithmetic, so a given seed produces the same values on every
// platform.
//
// Every run owns one root Rng seeded from the CLI --seed. Consumers never
// share a stream: each takes a child via fork() with a stream id from
// rng_streams below, and per-item consumers fork again by item index
// (tree index, ensemble member, class id, ...). Forking does not advance
// the parent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Uniform integer in [0, n). Multiply-shift bounding; n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool next_bernoulli(double p_true) { return next_unit() < p_true; }

    // Child generator for an independent stream. Mixes the current state
    // with the stream id, leaving the parent untouched.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = state_ + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

// Fixed fork ids of the per-run root Rng, in documented order.
namespace rng_streams {
inline constexpr std::uint64_t weight_init = 1;
inline constexpr std::uint64_t dropout = 2;
inline constexpr std::uint64_t split_shuffle = 3;
inline constexpr std::uint64_t epoch_shuffle = 4;
inline constexpr std::uint64_t forest = 5;
inline constexpr std::uint64_t svm = 6;
inline constexpr std::uint64_t bagging = 7;
inline constexpr std::uint64_t synth = 8;
}  // namespace rng_streams

// Fisher-Yates shuffle driven by next_below; deterministic given the rng state.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace convfeat
