#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace fpf {

/// Counter-based 64-bit generator: output k is a SplitMix64 finalization of
/// (key + k * golden). A stream is fully determined by (seed, stream id), so
/// paths never depend on the order in which other streams are consumed.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix(mix(seed + kGolden) ^ (stream * 0xd1b54a32d192ed03ULL + 1))) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ + (counter_++) * kGolden); }

    /// Independent child stream, e.g. one per particle.
    CounterRng substream(std::uint64_t index) const {
        CounterRng r(0, 0);
        r.key_ = mix(key_ ^ mix(index + 0x632be59bd9b4e019ULL));
        return r;
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// FNV-1a hash of a stream name.
constexpr std::uint64_t stream_id(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline CounterRng named_stream(std::uint64_t seed, std::string_view name) {
    return CounterRng(seed, stream_id(name));
}

/// Standard normal draws from a CounterRng.
class NormalSource {
public:
    explicit NormalSource(CounterRng rng) : rng_(rng) {}
    double operator()() { return dist_(rng_); }

private:
    CounterRng rng_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace fpf
