#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace epinet::stats {

inline double mean(std::span<const double> xs)
{
    if (xs.empty()) {
        throw std::invalid_argument("mean of empty sample");
    }
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased sample variance; zero for a single observation.
inline double variance(std::span<const double> xs)
{
    if (xs.size() < 2) {
        return 0.0;
    }
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - m) * (x - m);
    }
    return ss / static_cast<double>(xs.size() - 1);
}

inline double stddev(std::span<const double> xs) { return std::sqrt(variance(xs)); }

inline double standard_error(std::span<const double> xs)
{
    return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

/// Linear-interpolation quantile (type 7), q in [0,1].
inline double quantile(std::vector<double> xs, double q)
{
    if (xs.empty()) {
        throw std::invalid_argument("quantile of empty sample");
    }
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] + frac * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

inline Quartiles quartiles(const std::vector<double>& xs)
{
    return {quantile(xs, 0.25), quantile(xs, 0.5), quantile(xs, 0.75)};
}

inline double normal_cdf(double z)
{
    return boost::math::cdf(boost::math::normal_distribution<double>{}, z);
}

inline double normal_quantile(double p)
{
    return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

struct MeanInterval {
    double mean = 0.0;
    double low = 0.0;
    double high = 0.0;
    double standard_error = 0.0;
};

/// Normal-approximation interval for the mean at the given confidence.
inline MeanInterval mean_interval(std::span<const double> xs, double confidence = 0.95)
{
    const double m = mean(xs);
    const double se = standard_error(xs);
    const double z = normal_quantile(0.5 + confidence / 2.0);
    return {m, m - z * se, m + z * se, se};
}

struct RankTest {
    double statistic = 0.0;
    double z = 0.0;
    double p_two_sided = 1.0;
    /// P-value for the alternative "first sample tends to be larger".
    double p_greater = 1.0;
};

/// Mann-Whitney U test with tie correction and continuity correction,
/// normal approximation.
inline RankTest mann_whitney(std::span<const double> x, std::span<const double> y)
{
    const std::size_t n1 = x.size();
    const std::size_t n2 = y.size();
    if (n1 == 0 || n2 == 0) {
        throw std::invalid_argument("mann_whitney: empty sample");
    }
    struct Item {
        double value;
        int group;
    };
    std::vector<Item> all;
    all.reserve(n1 + n2);
    for (double v : x) {
        all.push_back({v, 0});
    }
    for (double v : y) {
        all.push_back({v, 1});
    }
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.value < b.value; });

    const double n = static_cast<double>(n1 + n2);
    double rank_sum_x = 0.0;
    double tie_term = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].value == all[i].value) {
            ++j;
        }
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].group == 0) {
                rank_sum_x += avg_rank;
            }
        }
        i = j;
    }
    const double dn1 = static_cast<double>(n1);
    const double dn2 = static_cast<double>(n2);
    const double u = rank_sum_x - dn1 * (dn1 + 1.0) / 2.0;
    const double mu = dn1 * dn2 / 2.0;
    const double var = dn1 * dn2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    RankTest out;
    out.statistic = u;
    if (var <= 0.0) {
        return out;
    }
    const double sd = std::sqrt(var);
    const double diff = u - mu;
    const double cc = diff > 0 ? 0.5 : (diff < 0 ? -0.5 : 0.0);
    out.z = (diff - cc) / sd;
    out.p_two_sided = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(out.z))));
    out.p_greater = 1.0 - normal_cdf((diff - 0.5) / sd);
    return out;
}

struct KendallTest {
    double tau_b = 0.0;
    double z = 0.0;
    double p_two_sided = 1.0;
};

/// Kendall tau-b with the tie-adjusted normal approximation for its null
/// variance.
inline KendallTest kendall_tau(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 3) {
        throw std::invalid_argument("kendall_tau: need paired samples of size >= 3");
    }
    const std::size_t n = x.size();
    double concordant_minus_discordant = 0.0;
    double n1 = 0.0;  // pairs tied in x
    double n2 = 0.0;  // pairs tied in y
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0.0) {
                n1 += 1.0;
            }
            if (dy == 0.0) {
                n2 += 1.0;
            }
            if (dx != 0.0 && dy != 0.0) {
                concordant_minus_discordant += (dx * dy > 0.0) ? 1.0 : -1.0;
            }
        }
    }
    const double dn = static_cast<double>(n);
    const double n0 = dn * (dn - 1.0) / 2.0;
    KendallTest out;
    const double denom = std::sqrt((n0 - n1) * (n0 - n2));
    if (denom <= 0.0) {
        return out;
    }
    out.tau_b = concordant_minus_discordant / denom;

    auto tie_groups = [](std::span<const double> v) {
        std::vector<double> s(v.begin(), v.end());
        std::sort(s.begin(), s.end());
        std::vector<double> sizes;
        for (std::size_t i = 0; i < s.size();) {
            std::size_t j = i;
            while (j < s.size() && s[j] == s[i]) {
                ++j;
            }
            if (j - i > 1) {
                sizes.push_back(static_cast<double>(j - i));
            }
            i = j;
        }
        return sizes;
    };
    const auto tx = tie_groups(x);
    const auto ty = tie_groups(y);
    double vt = 0.0, vu = 0.0, v1t = 0.0, v1u = 0.0, v2t = 0.0, v2u = 0.0;
    for (double t : tx) {
        vt += t * (t - 1.0) * (2.0 * t + 5.0);
        v1t += t * (t - 1.0);
        v2t += t * (t - 1.0) * (t - 2.0);
    }
    for (double u : ty) {
        vu += u * (u - 1.0) * (2.0 * u + 5.0);
        v1u += u * (u - 1.0);
        v2u += u * (u - 1.0) * (u - 2.0);
    }
    const double var = (dn * (dn - 1.0) * (2.0 * dn + 5.0) - vt - vu) / 18.0 +
                       v1t * v1u / (2.0 * dn * (dn - 1.0)) +
                       v2t * v2u / (9.0 * dn * (dn - 1.0) * (dn - 2.0));
    if (var <= 0.0) {
        return out;
    }
    out.z = concordant_minus_discordant / std::sqrt(var);
    out.p_two_sided = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(out.z))));
    return out;
}

struct ChiSquareTest {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

/// Pearson goodness-of-fit against expected counts; cells with zero
/// expectation must also have zero observations.
inline ChiSquareTest chi_square_gof(std::span<const double> observed, std::span<const double> expected)
{
    if (observed.size() != expected.size() || observed.size() < 2) {
        throw std::invalid_argument("chi_square_gof: size mismatch");
    }
    ChiSquareTest out;
    int cells = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] <= 0.0) {
            if (observed[i] > 0.0) {
                out.p_value = 0.0;
                out.statistic = std::numeric_limits<double>::infinity();
                return out;
            }
            continue;
        }
        const double d = observed[i] - expected[i];
        out.statistic += d * d / expected[i];
        ++cells;
    }
    out.dof = cells - 1;
    if (out.dof < 1) {
        return out;
    }
    boost::math::chi_squared_distribution<double> dist(out.dof);
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
    return out;
}

}  // namespace epinet::stats
