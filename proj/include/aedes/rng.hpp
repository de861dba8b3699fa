#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aedes {

// Seeded generator with derivable substreams.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Distribution sampling is done here rather than through
// <random> distributions, whose algorithms differ between standard
// libraries. Substream seeds are derived with the SplitMix64 finalizer over
// (parent seed, stream key), so a layer or an epoch gets the same stream no
// matter how many numbers other streams consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    Rng substream(std::uint64_t key) const { return Rng(mix(seed_, key)); }
    Rng substream(std::string_view name) const;

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t key);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by Rng::below.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = rng.below(i);
        std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
    }
}

/// 64-bit FNV-1a, used for dataset fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t state = 0xcbf29ce484222325ULL);

}  // namespace aedes
