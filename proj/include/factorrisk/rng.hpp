#pragma once

#include <cstdint>
#include <random>

namespace factorrisk {

/// Mixes a base seed with up to two tags (SplitMix64 finalizer applied per
/// word). Used to derive independent seeds for trials, scan points and
/// sampling purposes from a single user-supplied base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag_a, std::uint64_t tag_b = 0);

/// Random stream keyed by (seed, stream_id).
///
/// Backed by std::mt19937_64 initialised through std::seed_seq from the four
/// 32-bit halves of (seed, stream_id). Both the engine and std::seed_seq are
/// fully specified by the standard, so the raw bit stream is identical on
/// every conforming platform. Real-valued draws go through the standard
/// library distributions and are reproducible for a given standard library.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    double uniform01() { return unit_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
    double standard_normal() { return normal_(engine_); }
    bool bernoulli(double prob) { return unit_(engine_) < prob; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// Stream ids used by the samplers. Fixed so that a given seed always feeds
// the same purpose.
namespace streams {
inline constexpr std::uint64_t residual_variance = 1;
inline constexpr std::uint64_t factor_loading = 2;
inline constexpr std::uint64_t factor_series = 3;
inline constexpr std::uint64_t noise = 4;
}  // namespace streams

}  // namespace factorrisk
