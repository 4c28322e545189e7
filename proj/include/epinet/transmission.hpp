#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "epinet/population.hpp"

namespace epinet {

/// One simulation step is a 12-hour half-day.
inline constexpr int kStepsPerDay = 2;

constexpr int days_to_steps(int days) noexcept { return days * kStepsPerDay; }

/// Infectivity profile f(delta): zero before infection, exponential rise to
/// 1 at the end of incubation, linear decline to 0 at the end of the
/// infectious period. All durations in steps.
class NaturalHistory
{
  public:
    NaturalHistory() : NaturalHistory(0, days_to_steps(4), days_to_steps(15)) {}

    NaturalHistory(int latent_steps, int incubation_steps, int infectious_steps, double onset_infectivity = 0.01)
        : latent_(latent_steps), incubation_(incubation_steps), infectious_(infectious_steps),
          onset_(onset_infectivity)
    {
        if (latent_ < 0 || incubation_ < latent_ || infectious_ <= incubation_) {
            throw std::invalid_argument("natural history: need 0 <= T_lat <= T_inc < T_inf");
        }
        if (!(onset_ > 0.0 && onset_ <= 1.0)) {
            throw std::invalid_argument("natural history: onset infectivity must lie in (0,1]");
        }
        rate_ = incubation_ > latent_ ? -std::log(onset_) / static_cast<double>(incubation_ - latent_) : 0.0;
        table_.resize(static_cast<std::size_t>(infectious_) + 1);
        for (int d = 0; d <= infectious_; ++d) {
            table_[static_cast<std::size_t>(d)] = evaluate(d);
        }
    }

    static NaturalHistory from_days(int latent_days, int incubation_days, int infectious_days)
    {
        return NaturalHistory(days_to_steps(latent_days), days_to_steps(incubation_days),
                              days_to_steps(infectious_days));
    }

    int latent_steps() const noexcept { return latent_; }
    int incubation_steps() const noexcept { return incubation_; }
    int infectious_steps() const noexcept { return infectious_; }
    /// Step offset of peak infectivity.
    int peak_steps() const noexcept { return incubation_; }

    double infectivity(int delta) const noexcept
    {
        if (delta < 0 || delta >= infectious_) {
            return 0.0;
        }
        return table_[static_cast<std::size_t>(delta)];
    }

  private:
    double evaluate(int d) const noexcept
    {
        if (d < latent_ || d >= infectious_) {
            return 0.0;
        }
        if (d <= incubation_) {
            return std::exp(rate_ * static_cast<double>(d - incubation_));
        }
        return static_cast<double>(infectious_ - d) / static_cast<double>(infectious_ - incubation_);
    }

    int latent_ = 0;
    int incubation_ = 8;
    int infectious_ = 30;
    double onset_ = 0.01;
    double rate_ = 0.0;
    std::vector<double> table_;
};

struct TransmissionParams {
    double kappa = 6.0;
    double alpha_asymp = 0.5;
    double sigma_adult = 0.67;
    double sigma_child = 0.268;

    double symptomatic_fraction(int age) const noexcept
    {
        return is_adult_for_symptoms(age) ? sigma_adult : sigma_child;
    }
};

/// Daily transmission probabilities at peak infectivity, indexed by context
/// kind, household size (households only), source and target age band.
/// Entries that the table does not define are NaN and raise on lookup.
class TransmissionTable
{
  public:
    using BandMatrix = std::array<std::array<double, kAgeBandCount>, kAgeBandCount>;

    static TransmissionTable defaults()
    {
        TransmissionTable t;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (auto& m : t.by_kind_) {
            for (auto& row : m) {
                row.fill(nan);
            }
        }
        for (auto& m : t.household_) {
            for (auto& row : m) {
                row.fill(nan);
            }
        }
        // Households: any source, child (0-18) vs adult (19+) target.
        const std::array<std::array<double, 2>, 5> household{{{0.09335, 0.02420},
                                                              {0.05847, 0.01495},
                                                              {0.04176, 0.01061},
                                                              {0.03211, 0.00813},
                                                              {0.02588, 0.00653}}};
        for (int size = 2; size <= kMaxHouseholdSize; ++size) {
            auto& m = t.household_[static_cast<std::size_t>(size)];
            for (std::size_t src = 0; src < kAgeBandCount; ++src) {
                for (std::size_t tgt = 0; tgt < kAgeBandCount; ++tgt) {
                    const bool child = is_child(static_cast<AgeBand>(tgt));
                    m[src][tgt] = household[static_cast<std::size_t>(size - 2)][child ? 0 : 1];
                }
            }
        }
        auto set_all = [&](ContextKind kind, auto value_for) {
            auto& m = t.by_kind_[static_cast<std::size_t>(kind)];
            for (std::size_t src = 0; src < kAgeBandCount; ++src) {
                for (std::size_t tgt = 0; tgt < kAgeBandCount; ++tgt) {
                    m[src][tgt] = value_for(static_cast<AgeBand>(src), static_cast<AgeBand>(tgt));
                }
            }
        };
        set_all(ContextKind::HouseholdCluster, [](AgeBand, AgeBand) { return 0.004; });
        set_all(ContextKind::WorkGroup, [nan](AgeBand s, AgeBand t) {
            return (!is_child(s) && !is_child(t)) ? 0.004 : nan;
        });
        set_all(ContextKind::School, [nan](AgeBand s, AgeBand t) {
            return (is_child(s) && is_child(t)) ? 0.00029 : nan;
        });
        set_all(ContextKind::Grade, [nan](AgeBand s, AgeBand t) {
            return (is_child(s) && is_child(t)) ? 0.00158 : nan;
        });
        set_all(ContextKind::Class, [nan](AgeBand s, AgeBand t) {
            return (is_child(s) && is_child(t)) ? 0.00865 : nan;
        });
        const std::array<double, 4> neighborhood{0.035e-5, 1.044e-5, 2.784e-5, 5.568e-5};
        const std::array<double, 4> community{0.872e-6, 2.608e-6, 6.960e-6, 13.92e-6};
        set_all(ContextKind::Neighborhood,
                [&](AgeBand, AgeBand tgt) { return neighborhood[static_cast<std::size_t>(tgt)]; });
        set_all(ContextKind::Community, [&](AgeBand, AgeBand tgt) { return community[static_cast<std::size_t>(tgt)]; });
        return t;
    }

    bool defined(ContextKind kind, std::size_t context_size, AgeBand src, AgeBand tgt) const noexcept
    {
        return !std::isnan(raw(kind, context_size, src, tgt));
    }

    /// Daily peak-infectivity probability; throws for pairs the table does
    /// not cover.
    double q(ContextKind kind, std::size_t context_size, AgeBand src, AgeBand tgt) const
    {
        const double v = raw(kind, context_size, src, tgt);
        if (std::isnan(v)) {
            throw std::out_of_range("transmission table: no entry for " + std::string(to_string(kind)) + " size " +
                                    std::to_string(context_size) + " bands " +
                                    std::to_string(static_cast<int>(src)) + "->" +
                                    std::to_string(static_cast<int>(tgt)));
        }
        return v;
    }

    double max_q() const noexcept
    {
        double m = 0.0;
        auto scan = [&m](const BandMatrix& mat) {
            for (const auto& row : mat) {
                for (double v : row) {
                    if (!std::isnan(v)) {
                        m = std::max(m, v);
                    }
                }
            }
        };
        for (const auto& mat : by_kind_) {
            scan(mat);
        }
        for (const auto& mat : household_) {
            scan(mat);
        }
        return m;
    }

  private:
    double raw(ContextKind kind, std::size_t context_size, AgeBand src, AgeBand tgt) const noexcept
    {
        const auto s = static_cast<std::size_t>(src);
        const auto t = static_cast<std::size_t>(tgt);
        if (kind == ContextKind::Household) {
            if (context_size < 2 || context_size > kMaxHouseholdSize) {
                return std::numeric_limits<double>::quiet_NaN();
            }
            return household_[context_size][s][t];
        }
        return by_kind_[static_cast<std::size_t>(kind)][s][t];
    }

    std::array<BandMatrix, kContextKindCount> by_kind_{};
    std::array<BandMatrix, kMaxHouseholdSize + 1> household_{};
};

/// Tally of probabilities that exceeded 1 before clamping.
struct ClampCounter {
    std::uint64_t pairwise = 0;
    std::uint64_t adjusted = 0;
};

/// kappa * f * q, scaled by alpha for asymptomatic sources, clamped to [0,1].
inline double pairwise_prob(double kappa, double infectivity, double q, bool symptomatic, double alpha_asymp,
                            ClampCounter* clamps = nullptr) noexcept
{
    double p = kappa * infectivity * q;
    if (!symptomatic) {
        p *= alpha_asymp;
    }
    if (p > 1.0) {
        if (clamps != nullptr) {
            ++clamps->pairwise;
        }
        return 1.0;
    }
    return p < 0.0 ? 0.0 : p;
}

/// 1 - prod(1 - p_j) over the sources in one context.
inline double context_infection_prob(std::span<const double> source_probs) noexcept
{
    double survive = 1.0;
    for (double p : source_probs) {
        survive *= 1.0 - p;
    }
    return 1.0 - survive;
}

/// One infectious source as seen by a susceptible agent.
struct SourceTerm {
    double pairwise = 0.0;          // p^g_{j->i}(n)
    double interaction = 1.0;       // F_g(j)
    double infectiousness_ve = 0.0; // V(VEi_max, n, n^v_j)
};

/// Source term with NPI strength and infectiousness efficacy applied,
/// clamped to [0,1].
inline double adjusted_source_prob(const SourceTerm& s, ClampCounter* clamps = nullptr)
{
    if (s.interaction < 0.0) {
        throw std::invalid_argument("interaction strength must be non-negative");
    }
    const double p = (1.0 - s.infectiousness_ve) * s.interaction * s.pairwise;
    if (p > 1.0) {
        if (clamps != nullptr) {
            ++clamps->adjusted;
        }
        return 1.0;
    }
    return p;
}

/// Infection probability of a susceptible agent over all sources in all
/// active shared contexts, including its own susceptibility efficacy.
inline double agent_infection_prob(double susceptibility_ve, std::span<const SourceTerm> sources,
                                   ClampCounter* clamps = nullptr)
{
    double survive = 1.0;
    for (const auto& s : sources) {
        survive *= 1.0 - adjusted_source_prob(s, clamps);
    }
    return (1.0 - susceptibility_ve) * (1.0 - survive);
}

/// Truncated age-specific infection fatality rate, reduced by the
/// efficacy against death.
inline double ifr(double age_years, double death_ve = 0.0)
{
    if (age_years < 0.0) {
        throw std::invalid_argument("ifr: negative age");
    }
    const double base = std::min(0.1, 0.0232 * std::pow(10.0, -3.27 + 0.0524 * age_years));
    return (1.0 - death_ve) * base;
}

/// Onset-to-recovery duration, Gamma with the given mean and coefficient
/// of variation.
struct OnsetToRecovery {
    double mean_days = 24.7;
    double cv = 0.35;

    double shape() const noexcept { return 1.0 / (cv * cv); }
    double scale_days() const noexcept { return mean_days / shape(); }
    double expected_years() const noexcept { return mean_days / 365.0; }
};

struct DalyBooking {
    double expected_daly = 0.0;
    double yll = 0.0;
    double yld = 0.0;
    bool residual_clamped = false;
};

/// Expected DALY of a new infection, booked at infection time: death with
/// probability IFR costs the residual life expectancy, recovery costs the
/// mean illness duration (disability weight 1).
inline DalyBooking book_daly(int age, double life_expectancy, double fatality_rate, const OnsetToRecovery& recovery = {})
{
    DalyBooking out;
    double residual = life_expectancy - static_cast<double>(age);
    if (residual < 0.0) {
        residual = 0.0;
        out.residual_clamped = true;
    }
    out.yll = fatality_rate * residual;
    out.yld = (1.0 - fatality_rate) * recovery.expected_years();
    out.expected_daly = out.yll + out.yld;
    return out;
}

}  // namespace epinet
