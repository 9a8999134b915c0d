#pragma once

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace clqg {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derive a stream key from a seed and a path of integer labels
/// (replica index, purpose tag, ...). Distinct label paths give
/// statistically independent streams.
inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) {
    std::uint64_t k = splitmix64(seed + 0x9E3779B97F4A7C15ull);
    for (std::uint64_t l : labels) k = splitmix64(k ^ splitmix64(l + 0x632BE59BD9B4E019ull));
    return k;
}

/// Counter-based generator: the n-th output is splitmix64(key + n*golden).
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key = 0) : key_(key) {}
    CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) : key_(derive_key(seed, labels)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return splitmix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Standard normal sampler (ziggurat) bound to a counter stream.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t key) : rng_(key) {}
    NormalStream(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) : rng_(seed, labels) {}

    double operator()() { return dist_(rng_); }
    double uniform() { return rng_.uniform(); }
    CounterRng& engine() { return rng_; }

private:
    CounterRng rng_;
    boost::random::normal_distribution<double> dist_;
};

/// Stream purpose tags, so that the same replica index never reuses draws.
enum class StreamTag : std::uint64_t {
    Field = 1,
    Path = 2,
    StartPoint = 3,
    Bootstrap = 4,
    Exponential = 5,
    Inner = 6,
    Sampling = 7,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace clqg
