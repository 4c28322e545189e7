#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "epinet/population.hpp"
#include "epinet/rng.hpp"
#include "epinet/simulation.hpp"

namespace epinet::fixtures {

/// Ten agents in three households sharing one cluster, neighbourhood and
/// community; four adults share a work group and two pupils share a class,
/// grade and school.
inline Population tiny_town()
{
    Population pop;
    const std::vector<std::pair<int, ContextId>> people{{40, 0}, {38, 0}, {10, 0}, {3, 0}, {70, 1},
                                                        {68, 1}, {30, 1}, {25, 2}, {15, 2}, {50, 2}};
    const std::vector<ContextKind> kinds{ContextKind::Household,    ContextKind::Household,
                                         ContextKind::Household,    ContextKind::HouseholdCluster,
                                         ContextKind::Neighborhood, ContextKind::Community,
                                         ContextKind::WorkGroup,    ContextKind::Class,
                                         ContextKind::Grade,        ContextKind::School};
    for (std::size_t c = 0; c < kinds.size(); ++c) {
        pop.contexts.push_back({static_cast<ContextId>(c), kinds[c], {}});
    }
    for (std::size_t i = 0; i < people.size(); ++i) {
        Agent a;
        a.id = static_cast<AgentId>(i);
        a.age = people[i].first;
        a.life_expectancy = 82.5;
        a.household = people[i].second;
        a.cluster = 3;
        a.neighborhood = 4;
        a.community = 5;
        pop.agents.push_back(a);
    }
    for (AgentId w : {1u, 6u, 7u, 9u}) {
        pop.agents[w].day_contexts = {6};
    }
    for (AgentId s : {2u, 8u}) {
        pop.agents[s].day_contexts = {7, 8, 9};
    }
    pop.agents[0].school_parent = true;
    pop.agents[9].school_parent = true;
    for (const auto& a : pop.agents) {
        for (ContextId c : a.home_contexts()) {
            pop.contexts[c].members.push_back(a.id);
        }
        for (ContextId c : a.day_contexts) {
            pop.contexts[c].members.push_back(a.id);
        }
    }
    pop.validate();
    return pop;
}

inline const std::vector<AgentId>& tiny_town_sources()
{
    static const std::vector<AgentId> sources{1, 2, 4};
    return sources;
}

/// Epidemic settings that make one half-step fully predictable: sources
/// reach peak infectivity at the step under test, no NPIs act, and every
/// case is symptomatic (or none is).
inline EpidemicConfig oracle_config(Cycle cycle, bool symptomatic, double kappa)
{
    EpidemicConfig cfg;
    cfg.params.kappa = kappa;
    cfg.params.alpha_asymp = 0.5;
    cfg.params.sigma_adult = symptomatic ? 1.0 : 0.0;
    cfg.params.sigma_child = symptomatic ? 1.0 : 0.0;
    cfg.history = cycle == Cycle::Day ? NaturalHistory(0, 0, 3) : NaturalHistory(1, 1, 4);
    cfg.case_isolation = false;
    cfg.home_quarantine = false;
    return cfg;
}

inline int oracle_steps(Cycle cycle) { return cycle == Cycle::Day ? 1 : 2; }

/// Closed-form infection probability of every agent after the step under
/// test, computed directly from the contexts the agent shares with each
/// source.
inline std::vector<double> exact_infection_probs(const Population& pop, const EpidemicConfig& cfg, Cycle cycle)
{
    const auto& sources = tiny_town_sources();
    std::vector<double> out(pop.size(), 0.0);
    for (const auto& target : pop.agents) {
        if (std::find(sources.begin(), sources.end(), target.id) != sources.end()) {
            continue;
        }
        double survive = 1.0;
        for (AgentId j : sources) {
            const auto& src = pop.agents[j];
            const double scale = cfg.params.kappa * (cfg.params.sigma_adult > 0.5 ? 1.0 : cfg.params.alpha_asymp);
            std::vector<ContextId> shared;
            auto consider = [&](ContextId g) {
                const auto& ctx = pop.contexts[g];
                if (active_cycle(ctx.kind) != cycle) {
                    return;
                }
                if (std::find(ctx.members.begin(), ctx.members.end(), target.id) == ctx.members.end()) {
                    return;
                }
                const double q = cfg.table.q(ctx.kind, ctx.members.size(), age_band(src.age), age_band(target.age));
                survive *= 1.0 - std::min(1.0, scale * q);
            };
            for (ContextId g : src.home_contexts()) {
                consider(g);
            }
            for (ContextId g : src.day_contexts) {
                consider(g);
            }
        }
        out[target.id] = 1.0 - survive;
    }
    return out;
}

struct OracleOutcome {
    std::vector<double> exact;
    std::vector<int> infected;
    int reps = 0;
    /// Largest |observed - expected| in binomial standard deviations.
    double max_z = 0.0;
    /// True when a certain or impossible outcome was contradicted.
    bool impossible_infection = false;
};

inline OracleOutcome run_transmission_oracle(Cycle cycle, bool symptomatic, double kappa, int reps,
                                             std::uint64_t seed)
{
    const Population pop = tiny_town();
    const EpidemicConfig cfg = oracle_config(cycle, symptomatic, kappa);
    OracleOutcome out;
    out.exact = exact_infection_probs(pop, cfg, cycle);
    out.infected.assign(pop.size(), 0);
    out.reps = reps;
    for (int r = 0; r < reps; ++r) {
        Simulator sim(pop, cfg, derive_seed(seed, {static_cast<std::uint64_t>(r)}));
        for (AgentId j : tiny_town_sources()) {
            sim.introduce(j);
        }
        sim.run(oracle_steps(cycle));
        for (AgentId i = 0; i < pop.size(); ++i) {
            const bool source =
                std::find(tiny_town_sources().begin(), tiny_town_sources().end(), i) != tiny_town_sources().end();
            if (!source && sim.states()[i].phase != Phase::Susceptible) {
                ++out.infected[i];
            }
        }
    }
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const double p = out.exact[i];
        if (p <= 0.0) {
            out.impossible_infection = out.impossible_infection || out.infected[i] > 0;
            continue;
        }
        if (p >= 1.0) {
            out.impossible_infection = out.impossible_infection || out.infected[i] != reps;
            continue;
        }
        const double sd = std::sqrt(reps * p * (1.0 - p));
        out.max_z = std::max(out.max_z, std::abs(out.infected[i] - reps * p) / sd);
    }
    return out;
}

}  // namespace epinet::fixtures
