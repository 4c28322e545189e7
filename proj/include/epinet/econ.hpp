#pragma once

#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace epinet {

struct EconConfig {
    /// Willingness to pay, dollars per DALY.
    double lambda = 100000.0;
    double national_weekly_full_sd_cost = 1.4e9;
    double reference_population = 24190907.0;
    double town_population = 2393.0;

    /// Weekly cost of full social distancing in the town.
    double c1() const noexcept { return national_weekly_full_sd_cost * town_population / reference_population; }

    void validate() const
    {
        if (!(lambda > 0.0)) {
            throw std::invalid_argument("econ: lambda must be positive");
        }
        if (!(national_weekly_full_sd_cost >= 0.0) || !(reference_population > 0.0) || !(town_population > 0.0)) {
            throw std::invalid_argument("econ: costs must be non-negative and populations positive");
        }
    }
};

/// Cost of one period at the given SD level; `weeks` scales the weekly
/// cost for non-weekly periods.
inline double period_cost(double sd_level, const EconConfig& cfg, double weeks = 1.0)
{
    if (!(sd_level >= 0.0 && sd_level <= 1.0)) {
        throw std::invalid_argument("period_cost: sd_level must lie in [0,1]");
    }
    return sd_level * cfg.c1() * weeks;
}

inline double health_effect(std::span<const double> losses_null, std::span<const double> losses_sd)
{
    if (losses_null.size() != losses_sd.size()) {
        throw std::invalid_argument("health_effect: series lengths differ");
    }
    double e = 0.0;
    for (std::size_t t = 0; t < losses_null.size(); ++t) {
        e += losses_null[t] - losses_sd[t];
    }
    return e;
}

inline double nhb(double effect, double cost, double lambda)
{
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("nhb: lambda must be positive");
    }
    return effect - cost / lambda;
}

inline double period_reward(double loss_null, double loss_controlled, double cost, double lambda)
{
    return loss_null - loss_controlled - cost / lambda;
}

struct PeriodAccount {
    int period = 0;
    double sd_level = 0.0;
    double loss_null = 0.0;
    double loss_controlled = 0.0;
    double cost = 0.0;
    double reward = 0.0;
};

struct EpisodeAccount {
    double lambda = 100000.0;
    std::vector<PeriodAccount> periods;

    std::vector<double> losses_null() const
    {
        std::vector<double> v;
        for (const auto& p : periods) {
            v.push_back(p.loss_null);
        }
        return v;
    }
    std::vector<double> losses_controlled() const
    {
        std::vector<double> v;
        for (const auto& p : periods) {
            v.push_back(p.loss_controlled);
        }
        return v;
    }
    double total_cost() const noexcept
    {
        double c = 0.0;
        for (const auto& p : periods) {
            c += p.cost;
        }
        return c;
    }
    double total_reward() const noexcept
    {
        double r = 0.0;
        for (const auto& p : periods) {
            r += p.reward;
        }
        return r;
    }
    double effect() const { return health_effect(losses_null(), losses_controlled()); }
    /// Period-wise NHB from the loss and cost series.
    double pw_nhb() const { return nhb(effect(), total_cost(), lambda); }

    void write_csv(std::ostream& out) const
    {
        out << "period,sd_level,loss_null,loss_controlled,cost,reward,cum_nhb\n";
        double cum = 0.0;
        char buf[256];
        for (const auto& p : periods) {
            cum += p.reward;
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.period, p.sd_level,
                          p.loss_null, p.loss_controlled, p.cost, p.reward, cum);
            out << buf;
        }
    }
};

}  // namespace epinet
