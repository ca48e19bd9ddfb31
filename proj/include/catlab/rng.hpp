#pragma once

#include <cstdint>
#include <vector>

namespace catlab {

// Deterministic 64-bit generator (splitmix64 core). <random> distributions
// are avoided on purpose: we want identical streams across platforms and
// across thread counts, which libstdc++ does not promise.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_range(double a, double b) { return a + (b - a) * next_unit(); }

    // uniform integer in [0,n); multiply-shift, bias < 2^-64
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Child stream keyed by (current state, stream index). Does not advance
    // this generator, so chunk-indexed children are reproducible regardless
    // of how many threads consume them.
    Rng split(std::uint64_t stream) const {
        return Rng(mix(state_ + 0xd1b54a32d192ed03ull * (stream + 1)));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}
