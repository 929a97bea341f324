#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace dhp {

/// Environment-scoped discrete state identifier.
struct StateId {
    std::uint32_t value = 0;

    friend constexpr auto operator<=>(StateId, StateId) = default;
};

/// Placeholder for memory slots that have not been filled yet.
inline constexpr StateId kNullState{std::numeric_limits<std::uint32_t>::max()};

/// A (start, goal) pair. Every node of a subtask tree holds one.
struct Task {
    StateId init;
    StateId goal;

    friend constexpr auto operator<=>(const Task&, const Task&) = default;
};

/// Every stochastic routine takes one of these explicitly so runs are reproducible.
using Rng = std::mt19937_64;

/// Derives an independent stream from a base seed and a stream index (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint32_t uniform_index(Rng& rng, std::uint32_t n) {
    return std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng);
}

inline double uniform_real(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

class InvalidState : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace dhp

template <>
struct std::hash<dhp::StateId> {
    std::size_t operator()(dhp::StateId s) const noexcept { return std::hash<std::uint32_t>{}(s.value); }
};
