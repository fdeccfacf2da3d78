#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace depbounds {

std::uint64_t mix64(std::uint64_t z);

// Combines stream identifiers (seed, replication, r, draw, ...) into one key.
std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts);

// Bit pattern of a double, with -0.0 folded onto 0.0.
std::uint64_t hash_double(double v);

// Counter-based generator: the i-th output is a pure function of (key, i),
// so every substream is reproducible regardless of which thread draws it.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    // Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace depbounds
