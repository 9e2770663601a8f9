#pragma once
// Seeded per-path random streams. A stream is a pure function of
// (master seed, stream key, path index), so draws never depend on which
// worker simulates a path.

#include <cstdint>
#include <random>

namespace olg {

/// Stream keys separate independent uses of the same master seed.
enum class StreamKind : std::uint32_t {
    income = 1,
    initial_income = 2,
    initial_wealth = 3,
    nested = 4,
    perturbation = 5,
};

/// Build the generator for one path of one stream.
inline std::mt19937_64 make_path_stream(std::uint64_t seed, StreamKind kind, std::uint64_t cohort,
                                        std::uint64_t path, std::uint64_t sub = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(kind), static_cast<std::uint32_t>(cohort),
                      static_cast<std::uint32_t>(cohort >> 32), static_cast<std::uint32_t>(path),
                      static_cast<std::uint32_t>(path >> 32), static_cast<std::uint32_t>(sub),
                      static_cast<std::uint32_t>(sub >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace olg
