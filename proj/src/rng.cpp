#include "factorrisk/rng.hpp"

#include <array>

namespace factorrisk {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag_a, std::uint64_t tag_b)
{
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ splitmix64(tag_a + 0x632BE59BD9B4E019ULL));
    h = splitmix64(h ^ splitmix64(tag_b + 0x85157AF5ULL));
    return h;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
{
    std::array<std::uint32_t, 4> words{
        static_cast<std::uint32_t>(seed & 0xFFFFFFFFULL),
        static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream_id & 0xFFFFFFFFULL),
        static_cast<std::uint32_t>(stream_id >> 32),
    };
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
}

}  // namespace factorrisk
