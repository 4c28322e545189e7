#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace epinet {

/// SplitMix64 finalizer. Bijective 64-bit mixer used for every derived seed
/// and for the counter-based draws.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t splitmix64_next(std::uint64_t& state) noexcept
{
    return mix64(state += 0x9e3779b97f4a7c15ull);
}

/// Derive an independent stream seed from a master seed and a path of
/// integer labels (task index, replicate, purpose, ...).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept
{
    std::uint64_t h = mix64(master ^ 0x6a09e667f3bcc909ull);
    for (std::uint64_t label : path) {
        h = mix64(h ^ mix64(label + 0x9e3779b97f4a7c15ull));
    }
    return h;
}

constexpr double to_unit_interval(std::uint64_t bits) noexcept
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based draws: the value depends only on (key, a, b), never on the
/// order in which draws are requested. Simulations key draws by agent and
/// step, so runs that differ only in a parameter share their uniforms.
class CounterRng
{
  public:
    constexpr CounterRng() = default;
    constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t key() const noexcept { return key_; }

    constexpr std::uint64_t bits(std::uint64_t a, std::uint64_t b = 0) const noexcept
    {
        std::uint64_t h = mix64(key_ ^ (a * 0x9e3779b97f4a7c15ull));
        return mix64(h ^ (b * 0xc2b2ae3d27d4eb4full + 0x165667b19e3779f9ull));
    }

    constexpr double uniform(std::uint64_t a, std::uint64_t b = 0) const noexcept
    {
        return to_unit_interval(bits(a, b));
    }

    constexpr CounterRng substream(std::uint64_t label) const noexcept
    {
        return CounterRng{derive_seed(key_, {label})};
    }

  private:
    std::uint64_t key_ = 0;
};

/// xoshiro256** sequential engine. Satisfies UniformRandomBitGenerator.
class Rng
{
  public:
    using result_type = std::uint64_t;

    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    void reseed(std::uint64_t seed)
    {
        std::uint64_t sm = seed;
        for (auto& word : s_) {
            word = splitmix64_next(sm);
        }
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    double uniform() noexcept { return to_unit_interval((*this)()); }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Unbiased integer in [0, n) (Lemire's multiply-shift rejection).
    std::uint64_t uniform_index(std::uint64_t n)
    {
        if (n == 0) {
            throw std::invalid_argument("uniform_index: empty range");
        }
        __uint128_t m = static_cast<__uint128_t>((*this)()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<__uint128_t>((*this)()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller; the second variate is discarded so the
    /// engine state fully describes the stream.
    double normal() noexcept
    {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    template <class T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::array<std::uint64_t, 4> state() const noexcept { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) noexcept { s_ = s; }

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> s_{};
};

/// Binomial(n, p) by CDF inversion of a single uniform. Exact; cost grows
/// with the sampled value, which is small for the seeding use (mean ~1).
inline std::uint64_t binomial_inverse(std::uint64_t n, double p, double u)
{
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("binomial: p outside [0,1]");
    }
    if (n == 0 || p == 0.0) {
        return 0;
    }
    if (p == 1.0) {
        return n;
    }
    const double q = 1.0 - p;
    double pmf = std::exp(static_cast<double>(n) * std::log1p(-p));
    double cdf = pmf;
    std::uint64_t k = 0;
    while (u > cdf && k < n) {
        pmf *= (static_cast<double>(n - k) / static_cast<double>(k + 1)) * (p / q);
        ++k;
        cdf += pmf;
        if (pmf == 0.0 && cdf < u) {
            // Underflow in the far tail; remaining mass is numerically zero.
            break;
        }
    }
    return k;
}

/// Purposes for counter-based draws inside a simulation episode.
enum class DrawPurpose : std::uint64_t {
    Infection = 1,
    Symptomatic,
    Outcome,
    Detection,
    ComplianceCI,
    ComplianceHQ,
    ComplianceSD,
    ComplianceSC,
    Seeding,
    Attribution,
    VaccineCoverage,
    VaccineBrand,
    IndexCase,
};

/// All per-episode counter streams, one per purpose.
class EpisodeDraws
{
  public:
    EpisodeDraws() = default;
    explicit EpisodeDraws(std::uint64_t episode_seed) : seed_(episode_seed)
    {
        for (std::size_t i = 0; i < streams_.size(); ++i) {
            streams_[i] = CounterRng{derive_seed(episode_seed, {0xd1ceull, i})};
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }

    double uniform(DrawPurpose purpose, std::uint64_t a, std::uint64_t b = 0) const noexcept
    {
        return streams_[static_cast<std::size_t>(purpose)].uniform(a, b);
    }

  private:
    std::uint64_t seed_ = 0;
    std::array<CounterRng, 16> streams_{};
};

}  // namespace epinet
