#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "epinet/rng.hpp"

namespace epinet {

using AgentId = std::uint32_t;
using ContextId = std::uint32_t;

enum class ContextKind : std::uint8_t {
    Household,
    HouseholdCluster,
    WorkGroup,
    Class,
    Grade,
    School,
    Neighborhood,
    Community,
};

inline constexpr std::size_t kContextKindCount = 8;

enum class Cycle : std::uint8_t { Day, Night };

/// Work and school contexts mix during the daytime half-day; residential and
/// community contexts at night.
constexpr Cycle active_cycle(ContextKind kind) noexcept
{
    switch (kind) {
    case ContextKind::WorkGroup:
    case ContextKind::Class:
    case ContextKind::Grade:
    case ContextKind::School:
        return Cycle::Day;
    default:
        return Cycle::Night;
    }
}

constexpr std::string_view to_string(ContextKind kind) noexcept
{
    switch (kind) {
    case ContextKind::Household: return "household";
    case ContextKind::HouseholdCluster: return "household_cluster";
    case ContextKind::WorkGroup: return "work_group";
    case ContextKind::Class: return "class";
    case ContextKind::Grade: return "grade";
    case ContextKind::School: return "school";
    case ContextKind::Neighborhood: return "neighborhood";
    case ContextKind::Community: return "community";
    }
    return "unknown";
}

inline ContextKind context_kind_from_string(std::string_view name)
{
    for (std::size_t i = 0; i < kContextKindCount; ++i) {
        const auto kind = static_cast<ContextKind>(i);
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw std::invalid_argument("unknown context kind: " + std::string(name));
}

/// Age bands used by the neighbourhood and community transmission rows.
enum class AgeBand : std::uint8_t { Infant, SchoolAge, Adult, Senior };

inline constexpr std::size_t kAgeBandCount = 4;

constexpr AgeBand age_band(int age) noexcept
{
    if (age <= 4) {
        return AgeBand::Infant;
    }
    if (age <= 18) {
        return AgeBand::SchoolAge;
    }
    if (age <= 64) {
        return AgeBand::Adult;
    }
    return AgeBand::Senior;
}

/// Transmission tables treat 0-18 as children.
constexpr bool is_child(AgeBand band) noexcept
{
    return band == AgeBand::Infant || band == AgeBand::SchoolAge;
}

/// Symptomatic fractions switch at 18, one year earlier than the tables.
constexpr bool is_adult_for_symptoms(int age) noexcept { return age >= 18; }

/// Age groups of the attack-rate weighted index-case sampler.
inline constexpr std::size_t kAttackRateGroups = 5;

constexpr std::size_t attack_rate_group(int age) noexcept
{
    if (age <= 4) {
        return 0;
    }
    if (age <= 18) {
        return 1;
    }
    if (age <= 29) {
        return 2;
    }
    if (age <= 64) {
        return 3;
    }
    return 4;
}

/// The published rates are rounded and sum to 0.999; weights are
/// renormalised, so sums this close to 1 are accepted.
inline constexpr double kAttackRateSumTolerance = 5e-3;

inline constexpr std::array<double, kAttackRateGroups> kDefaultAttackRates{0.068, 0.173, 0.140, 0.461, 0.157};

inline constexpr int kMaxAge = 110;
inline constexpr int kMaxHouseholdSize = 6;

struct Agent {
    AgentId id = 0;
    int age = 0;
    double life_expectancy = 0.0;
    ContextId household = 0;
    ContextId cluster = 0;
    ContextId neighborhood = 0;
    ContextId community = 0;
    /// Empty, a single work group, or the (class, grade, school) triple.
    std::vector<ContextId> day_contexts;
    /// Designated parent for school-closure compliance.
    bool school_parent = false;

    std::array<ContextId, 4> home_contexts() const noexcept { return {household, cluster, neighborhood, community}; }
    bool in_school() const noexcept { return day_contexts.size() == 3; }
    bool employed() const noexcept { return day_contexts.size() == 1; }
};

struct MixingContext {
    ContextId id = 0;
    ContextKind kind = ContextKind::Household;
    std::vector<AgentId> members;

    Cycle cycle() const noexcept { return active_cycle(kind); }
};

struct Population {
    std::vector<Agent> agents;
    std::vector<MixingContext> contexts;

    std::size_t size() const noexcept { return agents.size(); }

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
};

std::vector<double> default_age_distribution();

struct PopulationConfig {
    int n_agents = 2393;
    /// Relative weights by single year of age, index = age, length kMaxAge + 1.
    std::vector<double> age_distribution = default_age_distribution();
    /// Life expectancy by single year of age; empty means the flat default.
    std::vector<double> life_expectancy_table;
    double default_life_expectancy = 82.5;
    /// Residual years granted when the table value does not exceed the age.
    double min_residual_life = 0.5;
    /// Weights for household sizes 1..6.
    std::array<double, kMaxHouseholdSize> household_size_distribution{0.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    int cluster_size = 7;
    int workgroup_size = 22;
    int class_size = 25;
    int classes_per_grade = 3;
    int grades_per_school = 3;
    int neighborhood_size = 250;
    /// Agents per community; 0 puts the whole town in one community.
    int community_size = 0;
    double employment_rate = 1.0;
    double school_enrollment_rate = 1.0;
    int work_age_min = 19;
    int work_age_max = 64;
    int school_age_min = 5;
    int school_age_max = 18;
    std::uint64_t rng_seed = 42;

    void validate() const;
};

Population generate_population(const PopulationConfig& cfg);

/// Sample an index case: pick an attack-rate age group with probability equal
/// to its weight, then an agent uniformly within the group.
AgentId attack_rate_weighted_index_case(const Population& pop, std::span<const double> attack_rates, double u_group,
                                        double u_member);

inline AgentId attack_rate_weighted_index_case(const Population& pop, std::span<const double> attack_rates, Rng& rng)
{
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    return attack_rate_weighted_index_case(pop, attack_rates, u1, u2);
}

nlohmann::json population_to_json(const Population& pop);
Population population_from_json(const nlohmann::json& doc);

inline constexpr std::string_view kPopulationFormat = "epinet-population";
inline constexpr int kPopulationFormatVersion = 1;

// ---------------------------------------------------------------------------
// Implementation
// ---------------------------------------------------------------------------

inline std::vector<double> default_age_distribution()
{
    // Band shares for a typical Australian town; flat within bands, the
    // 65+ band tapering linearly to zero at 101.
    std::vector<double> weights(kMaxAge + 1, 0.0);
    auto fill = [&](int lo, int hi, double share) {
        const double per_year = share / static_cast<double>(hi - lo + 1);
        for (int a = lo; a <= hi; ++a) {
            weights[static_cast<std::size_t>(a)] = per_year;
        }
    };
    fill(0, 4, 0.064);
    fill(5, 18, 0.170);
    fill(19, 29, 0.150);
    fill(30, 64, 0.461);
    double taper_total = 0.0;
    for (int a = 65; a <= 100; ++a) {
        taper_total += static_cast<double>(101 - a);
    }
    for (int a = 65; a <= 100; ++a) {
        weights[static_cast<std::size_t>(a)] = 0.155 * static_cast<double>(101 - a) / taper_total;
    }
    return weights;
}

inline void PopulationConfig::validate() const
{
    if (n_agents < 50) {
        throw std::invalid_argument("population: n_agents must be >= 50 to form every context kind");
    }
    auto positive = [](int v, const char* name) {
        if (v < 1) {
            throw std::invalid_argument(std::string("population: ") + name + " must be >= 1");
        }
    };
    positive(cluster_size, "cluster_size");
    positive(workgroup_size, "workgroup_size");
    positive(class_size, "class_size");
    positive(classes_per_grade, "classes_per_grade");
    positive(grades_per_school, "grades_per_school");
    positive(neighborhood_size, "neighborhood_size");
    if (community_size < 0) {
        throw std::invalid_argument("population: community_size must be >= 0");
    }
    auto probability = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument(std::string("population: ") + name + " must lie in [0,1]");
        }
    };
    probability(employment_rate, "employment_rate");
    probability(school_enrollment_rate, "school_enrollment_rate");
    if (age_distribution.size() != static_cast<std::size_t>(kMaxAge + 1)) {
        throw std::invalid_argument("population: age_distribution needs one weight per age 0..110");
    }
    double total = 0.0;
    for (double w : age_distribution) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("population: age weights must be finite and non-negative");
        }
        total += w;
    }
    if (total <= 0.0) {
        throw std::invalid_argument("population: age_distribution has no mass");
    }
    double hh_total = 0.0;
    for (double w : household_size_distribution) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("population: household size weights must be finite and non-negative");
        }
        hh_total += w;
    }
    if (hh_total <= 0.0) {
        throw std::invalid_argument("population: household_size_distribution has no mass");
    }
    if (!life_expectancy_table.empty() && life_expectancy_table.size() != static_cast<std::size_t>(kMaxAge + 1)) {
        throw std::invalid_argument("population: life_expectancy_table needs one value per age 0..110");
    }
    if (!(min_residual_life > 0.0)) {
        throw std::invalid_argument("population: min_residual_life must be positive");
    }
}

namespace detail {

inline std::size_t sample_weighted(std::span<const double> cumulative, double u)
{
    const double target = u * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    auto idx = static_cast<std::size_t>(it - cumulative.begin());
    return std::min(idx, cumulative.size() - 1);
}

/// Split a sequence of n items into chunks of `size`, folding a short tail
/// (less than half a chunk) into the previous chunk.
inline std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t n, std::size_t size)
{
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t start = 0; start < n; start += size) {
        ranges.emplace_back(start, std::min(n, start + size));
    }
    if (ranges.size() > 1) {
        const auto& tail = ranges.back();
        if ((tail.second - tail.first) * 2 < size) {
            const std::size_t end = tail.second;
            ranges.pop_back();
            ranges.back().second = end;
        }
    }
    return ranges;
}

}  // namespace detail

inline Population generate_population(const PopulationConfig& cfg)
{
    cfg.validate();
    Rng rng(derive_seed(cfg.rng_seed, {0x909ull}));
    const auto n = static_cast<std::size_t>(cfg.n_agents);

    std::vector<double> cum_age(cfg.age_distribution.size());
    std::partial_sum(cfg.age_distribution.begin(), cfg.age_distribution.end(), cum_age.begin());
    std::vector<int> ages(n);
    for (auto& a : ages) {
        a = static_cast<int>(detail::sample_weighted(cum_age, rng.uniform()));
    }

    std::vector<double> cum_hh(cfg.household_size_distribution.size());
    std::partial_sum(cfg.household_size_distribution.begin(), cfg.household_size_distribution.end(), cum_hh.begin());
    std::vector<std::size_t> hh_sizes;
    for (std::size_t placed = 0; placed < n;) {
        std::size_t size = detail::sample_weighted(cum_hh, rng.uniform()) + 1;
        size = std::min(size, n - placed);
        hh_sizes.push_back(size);
        placed += size;
    }

    // Every household is headed by the oldest available adult; remaining
    // slots are filled from a shuffled pool.
    std::vector<int> adults;
    std::vector<int> pool;
    for (int a : ages) {
        (a >= 19 ? adults : pool).push_back(a);
    }
    rng.shuffle(adults);
    std::vector<int> heads;
    heads.reserve(hh_sizes.size());
    for (std::size_t h = 0; h < hh_sizes.size(); ++h) {
        if (!adults.empty()) {
            heads.push_back(adults.back());
            adults.pop_back();
        } else {
            // Too few adults: fall back to the oldest remaining minor.
            auto it = std::max_element(pool.begin(), pool.end());
            heads.push_back(*it);
            pool.erase(it);
        }
    }
    pool.insert(pool.end(), adults.begin(), adults.end());
    rng.shuffle(pool);

    Population pop;
    pop.agents.resize(n);
    auto new_context = [&pop](ContextKind kind) -> MixingContext& {
        MixingContext ctx;
        ctx.id = static_cast<ContextId>(pop.contexts.size());
        ctx.kind = kind;
        pop.contexts.push_back(std::move(ctx));
        return pop.contexts.back();
    };

    const double flat_le = cfg.default_life_expectancy;
    auto life_expectancy = [&](int age) {
        const double table =
            cfg.life_expectancy_table.empty() ? flat_le : cfg.life_expectancy_table[static_cast<std::size_t>(age)];
        return std::max(table, static_cast<double>(age) + cfg.min_residual_life);
    };

    // Households: agents are numbered contiguously per household.
    std::vector<std::pair<AgentId, AgentId>> household_ranges;
    std::vector<ContextId> household_ids;
    {
        AgentId next = 0;
        std::size_t pool_pos = 0;
        for (std::size_t h = 0; h < hh_sizes.size(); ++h) {
            auto& ctx = new_context(ContextKind::Household);
            const AgentId first = next;
            for (std::size_t k = 0; k < hh_sizes[h]; ++k) {
                Agent& agent = pop.agents[next];
                agent.id = next;
                agent.age = (k == 0) ? heads[h] : pool[pool_pos++];
                agent.life_expectancy = life_expectancy(agent.age);
                agent.household = ctx.id;
                ctx.members.push_back(next);
                ++next;
            }
            household_ranges.emplace_back(first, next);
            household_ids.push_back(ctx.id);
        }
    }

    // Clusters of adjacent households.
    for (std::size_t h = 0; h < household_ranges.size(); h += static_cast<std::size_t>(cfg.cluster_size)) {
        auto& ctx = new_context(ContextKind::HouseholdCluster);
        const std::size_t end = std::min(household_ranges.size(), h + static_cast<std::size_t>(cfg.cluster_size));
        for (std::size_t k = h; k < end; ++k) {
            for (AgentId a = household_ranges[k].first; a < household_ranges[k].second; ++a) {
                pop.agents[a].cluster = ctx.id;
                ctx.members.push_back(a);
            }
        }
    }

    // Neighbourhoods and communities: whole households in agent order.
    auto group_households = [&](ContextKind kind, std::size_t target, ContextId Agent::*field) {
        std::vector<std::pair<std::size_t, std::size_t>> groups;  // household index ranges
        std::size_t start = 0;
        std::size_t count = 0;
        for (std::size_t h = 0; h < household_ranges.size(); ++h) {
            count += household_ranges[h].second - household_ranges[h].first;
            if (count >= target) {
                groups.emplace_back(start, h + 1);
                start = h + 1;
                count = 0;
            }
        }
        if (start < household_ranges.size()) {
            if (!groups.empty() && count * 2 < target) {
                groups.back().second = household_ranges.size();
            } else {
                groups.emplace_back(start, household_ranges.size());
            }
        }
        for (const auto& [h0, h1] : groups) {
            auto& ctx = new_context(kind);
            for (std::size_t h = h0; h < h1; ++h) {
                for (AgentId a = household_ranges[h].first; a < household_ranges[h].second; ++a) {
                    pop.agents[a].*field = ctx.id;
                    ctx.members.push_back(a);
                }
            }
        }
    };
    group_households(ContextKind::Neighborhood, static_cast<std::size_t>(cfg.neighborhood_size), &Agent::neighborhood);
    group_households(ContextKind::Community,
                     cfg.community_size == 0 ? n : static_cast<std::size_t>(cfg.community_size), &Agent::community);

    // Working groups.
    std::vector<AgentId> workers;
    for (const auto& agent : pop.agents) {
        if (agent.age >= cfg.work_age_min && agent.age <= cfg.work_age_max && rng.uniform() < cfg.employment_rate) {
            workers.push_back(agent.id);
        }
    }
    rng.shuffle(workers);
    for (const auto& [b, e] : detail::chunk_ranges(workers.size(), static_cast<std::size_t>(cfg.workgroup_size))) {
        auto& ctx = new_context(ContextKind::WorkGroup);
        for (std::size_t k = b; k < e; ++k) {
            ctx.members.push_back(workers[k]);
            pop.agents[workers[k]].day_contexts = {ctx.id};
        }
    }

    // Schools: pupils ordered by age, chunked into classes, grades, schools.
    std::vector<AgentId> pupils;
    for (const auto& agent : pop.agents) {
        if (agent.age >= cfg.school_age_min && agent.age <= cfg.school_age_max &&
            rng.uniform() < cfg.school_enrollment_rate) {
            pupils.push_back(agent.id);
        }
    }
    rng.shuffle(pupils);
    std::stable_sort(pupils.begin(), pupils.end(),
                     [&](AgentId a, AgentId b) { return pop.agents[a].age < pop.agents[b].age; });
    const auto class_ranges = detail::chunk_ranges(pupils.size(), static_cast<std::size_t>(cfg.class_size));
    const auto grade_ranges = detail::chunk_ranges(class_ranges.size(), static_cast<std::size_t>(cfg.classes_per_grade));
    const auto school_ranges = detail::chunk_ranges(grade_ranges.size(), static_cast<std::size_t>(cfg.grades_per_school));
    for (const auto& [g0, g1] : school_ranges) {
        const ContextId school_id = new_context(ContextKind::School).id;
        for (std::size_t g = g0; g < g1; ++g) {
            const ContextId grade_id = new_context(ContextKind::Grade).id;
            for (std::size_t c = grade_ranges[g].first; c < grade_ranges[g].second; ++c) {
                const ContextId class_id = new_context(ContextKind::Class).id;
                for (std::size_t k = class_ranges[c].first; k < class_ranges[c].second; ++k) {
                    const AgentId a = pupils[k];
                    pop.agents[a].day_contexts = {class_id, grade_id, school_id};
                    pop.contexts[class_id].members.push_back(a);
                    pop.contexts[grade_id].members.push_back(a);
                    pop.contexts[school_id].members.push_back(a);
                }
            }
        }
    }
    for (auto& ctx : pop.contexts) {
        std::sort(ctx.members.begin(), ctx.members.end());
    }

    // The household head is the school-closure parent when a pupil lives there.
    for (std::size_t h = 0; h < household_ranges.size(); ++h) {
        const auto [first, last] = household_ranges[h];
        bool has_pupil = false;
        for (AgentId a = first; a < last; ++a) {
            has_pupil = has_pupil || pop.agents[a].in_school();
        }
        if (has_pupil && pop.agents[first].age >= 19) {
            pop.agents[first].school_parent = true;
        }
    }
    return pop;
}

inline void Population::validate() const
{
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const Agent& a = agents[i];
        if (a.id != i) {
            throw std::invalid_argument("population: agent ids must be dense and ordered");
        }
        if (a.age < 0 || a.age > kMaxAge) {
            throw std::invalid_argument("population: agent age outside [0,110]");
        }
        if (!(a.life_expectancy > a.age)) {
            throw std::invalid_argument("population: life expectancy must exceed age");
        }
        const std::array<std::pair<ContextId, ContextKind>, 4> home{{{a.household, ContextKind::Household},
                                                                     {a.cluster, ContextKind::HouseholdCluster},
                                                                     {a.neighborhood, ContextKind::Neighborhood},
                                                                     {a.community, ContextKind::Community}}};
        for (const auto& [cid, kind] : home) {
            if (cid >= contexts.size() || contexts[cid].kind != kind) {
                throw std::invalid_argument("population: agent home context has wrong kind");
            }
        }
        if (a.day_contexts.size() == 1) {
            if (a.day_contexts[0] >= contexts.size() || contexts[a.day_contexts[0]].kind != ContextKind::WorkGroup) {
                throw std::invalid_argument("population: single day context must be a work group");
            }
        } else if (a.day_contexts.size() == 3) {
            const std::array<ContextKind, 3> expect{ContextKind::Class, ContextKind::Grade, ContextKind::School};
            for (std::size_t k = 0; k < 3; ++k) {
                if (a.day_contexts[k] >= contexts.size() || contexts[a.day_contexts[k]].kind != expect[k]) {
                    throw std::invalid_argument("population: school triple must be class, grade, school");
                }
            }
        } else if (!a.day_contexts.empty()) {
            throw std::invalid_argument("population: day contexts must be empty, a work group, or a school triple");
        }
    }
    // Membership lists must agree with the agents' own context fields.
    std::vector<std::size_t> expected(contexts.size(), 0);
    for (const auto& a : agents) {
        for (ContextId c : a.home_contexts()) {
            ++expected[c];
        }
        for (ContextId c : a.day_contexts) {
            ++expected[c];
        }
    }
    for (const auto& ctx : contexts) {
        if (ctx.id >= contexts.size() || &contexts[ctx.id] != &ctx) {
            throw std::invalid_argument("population: context ids must be dense and ordered");
        }
        if (ctx.members.size() != expected[ctx.id]) {
            throw std::invalid_argument("population: context membership does not match agents");
        }
        for (AgentId m : ctx.members) {
            if (m >= agents.size()) {
                throw std::invalid_argument("population: context member out of range");
            }
            const Agent& a = agents[m];
            const bool listed =
                std::find(a.day_contexts.begin(), a.day_contexts.end(), ctx.id) != a.day_contexts.end() ||
                a.household == ctx.id || a.cluster == ctx.id || a.neighborhood == ctx.id || a.community == ctx.id;
            if (!listed) {
                throw std::invalid_argument("population: context lists an agent that does not belong to it");
            }
        }
        if (ctx.kind == ContextKind::Household && (ctx.members.empty() || ctx.members.size() > kMaxHouseholdSize)) {
            throw std::invalid_argument("population: household size outside [1,6]");
        }
        // Classes nest inside grades, grades inside schools.
        if (ctx.kind == ContextKind::Class || ctx.kind == ContextKind::Grade) {
            const std::size_t slot = ctx.kind == ContextKind::Class ? 1 : 2;
            const ContextId parent = agents[ctx.members.front()].day_contexts[slot];
            for (AgentId m : ctx.members) {
                if (agents[m].day_contexts[slot] != parent) {
                    throw std::invalid_argument("population: school contexts are not nested");
                }
            }
        }
    }
}

inline AgentId attack_rate_weighted_index_case(const Population& pop, std::span<const double> attack_rates,
                                               double u_group, double u_member)
{
    if (attack_rates.size() != kAttackRateGroups) {
        throw std::invalid_argument("index case: attack rates need 5 age groups");
    }
    double total = 0.0;
    for (double w : attack_rates) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("index case: attack rates must be non-negative");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > kAttackRateSumTolerance) {
        throw std::invalid_argument("index case: attack rates must sum to 1");
    }
    std::array<std::vector<AgentId>, kAttackRateGroups> groups;
    for (const auto& a : pop.agents) {
        groups[attack_rate_group(a.age)].push_back(a.id);
    }
    for (std::size_t g = 0; g < kAttackRateGroups; ++g) {
        if (attack_rates[g] > 0.0 && groups[g].empty()) {
            throw std::invalid_argument("index case: age group " + std::to_string(g) +
                                        " has positive weight but no agents");
        }
    }
    double cum = 0.0;
    std::size_t chosen = kAttackRateGroups;
    for (std::size_t g = 0; g < kAttackRateGroups; ++g) {
        if (attack_rates[g] <= 0.0) {
            continue;
        }
        cum += attack_rates[g];
        chosen = g;
        if (u_group * total < cum) {
            break;
        }
    }
    const auto& members = groups[chosen];
    const auto k = std::min(members.size() - 1, static_cast<std::size_t>(u_member * static_cast<double>(members.size())));
    return members[k];
}

inline nlohmann::json population_to_json(const Population& pop)
{
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& a : pop.agents) {
        agents.push_back({{"id", a.id},
                          {"age", a.age},
                          {"life_expectancy", a.life_expectancy},
                          {"household", a.household},
                          {"cluster", a.cluster},
                          {"neighborhood", a.neighborhood},
                          {"community", a.community},
                          {"day_contexts", a.day_contexts},
                          {"school_parent", a.school_parent}});
    }
    nlohmann::json contexts = nlohmann::json::array();
    for (const auto& c : pop.contexts) {
        contexts.push_back({{"id", c.id}, {"kind", std::string(to_string(c.kind))}, {"members", c.members}});
    }
    return {{"format", std::string(kPopulationFormat)},
            {"version", kPopulationFormatVersion},
            {"agents", std::move(agents)},
            {"contexts", std::move(contexts)}};
}

inline Population population_from_json(const nlohmann::json& doc)
{
    if (doc.value("format", std::string{}) != kPopulationFormat) {
        throw std::invalid_argument("population: not an epinet-population document");
    }
    if (doc.value("version", 0) != kPopulationFormatVersion) {
        throw std::invalid_argument("population: unsupported format version");
    }
    Population pop;
    for (const auto& j : doc.at("agents")) {
        Agent a;
        a.id = j.at("id").get<AgentId>();
        a.age = j.at("age").get<int>();
        a.life_expectancy = j.at("life_expectancy").get<double>();
        a.household = j.at("household").get<ContextId>();
        a.cluster = j.at("cluster").get<ContextId>();
        a.neighborhood = j.at("neighborhood").get<ContextId>();
        a.community = j.at("community").get<ContextId>();
        a.day_contexts = j.at("day_contexts").get<std::vector<ContextId>>();
        a.school_parent = j.value("school_parent", false);
        pop.agents.push_back(std::move(a));
    }
    for (const auto& j : doc.at("contexts")) {
        MixingContext c;
        c.id = j.at("id").get<ContextId>();
        c.kind = context_kind_from_string(j.at("kind").get<std::string>());
        c.members = j.at("members").get<std::vector<AgentId>>();
        pop.contexts.push_back(std::move(c));
    }
    pop.validate();
    return pop;
}

}  // namespace epinet
