#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinet/logging.hpp"
#include "epinet/population.hpp"
#include "epinet/rng.hpp"
#include "epinet/transmission.hpp"

namespace epinet {

enum class Brand : std::uint8_t { AZ, Pfizer };

constexpr std::string_view to_string(Brand b) noexcept { return b == Brand::AZ ? "AZ" : "Pfizer"; }

/// Efficacy components: susceptibility, disease, infectiousness, death.
enum class VeComponent : std::uint8_t { Susceptibility, Disease, Infectiousness, Death };

inline constexpr std::size_t kVeComponents = 4;

/// VEs = VEd solving VEc = 1 - (1 - VEd)(1 - VEs) symmetrically.
inline double solve_ves_ved(double clinical_efficacy)
{
    if (!(clinical_efficacy >= 0.0) || clinical_efficacy >= 1.0) {
        throw std::invalid_argument("solve_ves_ved: clinical efficacy must lie in [0,1)");
    }
    return 1.0 - std::sqrt(1.0 - clinical_efficacy);
}

struct VaccineProfile {
    Brand brand = Brand::Pfizer;
    int max_d1_delay_days = 14;
    int min_delay_days = 21;
    int max_d2_delay_days = 7;
    /// Maxima after dose 1 and dose 2, indexed by VeComponent.
    std::array<double, kVeComponents> dose1{};
    std::array<double, kVeComponents> dose2{};

    static VaccineProfile pfizer()
    {
        VaccineProfile p;
        p.brand = Brand::Pfizer;
        p.max_d1_delay_days = 14;
        p.min_delay_days = 21;
        p.max_d2_delay_days = 7;
        p.dose1 = {solve_ves_ved(0.7), solve_ves_ved(0.7), 0.45, 0.71};
        p.dose2 = {solve_ves_ved(0.9), solve_ves_ved(0.9), 0.50, 0.92};
        return p;
    }

    static VaccineProfile astrazeneca()
    {
        VaccineProfile p;
        p.brand = Brand::AZ;
        p.max_d1_delay_days = 21;
        p.min_delay_days = 28;
        p.max_d2_delay_days = 14;
        p.dose1 = {solve_ves_ved(0.6), solve_ves_ved(0.6), 0.45, 0.69};
        p.dose2 = {solve_ves_ved(0.6), solve_ves_ved(0.6), 0.50, 0.90};
        return p;
    }

    void validate() const
    {
        for (std::size_t c = 0; c < kVeComponents; ++c) {
            if (!(dose1[c] >= 0.0 && dose1[c] <= 1.0 && dose2[c] >= 0.0 && dose2[c] <= 1.0)) {
                throw std::invalid_argument("vaccine profile: efficacies must lie in [0,1]");
            }
            if (dose2[c] < dose1[c]) {
                throw std::invalid_argument("vaccine profile: dose-2 maxima must not fall below dose 1");
            }
        }
        if (max_d1_delay_days < 0 || max_d2_delay_days < 0 || min_delay_days < max_d1_delay_days) {
            throw std::invalid_argument("vaccine profile: need 0 <= Max_D1 <= Min_Delay and Max_D2 >= 0");
        }
    }
};

struct VaccineProfiles {
    VaccineProfile az = VaccineProfile::astrazeneca();
    VaccineProfile pfizer = VaccineProfile::pfizer();

    const VaccineProfile& of(Brand b) const noexcept { return b == Brand::AZ ? az : pfizer; }
};

enum class RolloutMode : std::uint8_t { None, Progressive, PrePandemic };

struct VaccinationRecord {
    Brand brand = Brand::Pfizer;
    std::optional<int> dose1_step;
    std::optional<int> dose2_step;
    /// Fully immunised before the first step.
    bool prepandemic = false;

    bool vaccinated() const noexcept { return prepandemic || dose1_step.has_value(); }
};

/// Piecewise-linear efficacy of one component at step n: zero before dose 1,
/// ramps to the dose-1 plateau, then from its current value to the dose-2
/// plateau.
inline double efficacy_at(VeComponent component, const VaccinationRecord& rec, const VaccineProfile& profile,
                          int step) noexcept
{
    const auto c = static_cast<std::size_t>(component);
    if (rec.prepandemic) {
        return profile.dose2[c];
    }
    if (!rec.dose1_step || step < *rec.dose1_step) {
        return 0.0;
    }
    auto ramp = [](double from, double to, int elapsed, int span) {
        if (span <= 0 || elapsed >= span) {
            return to;
        }
        return from + (to - from) * static_cast<double>(elapsed) / static_cast<double>(span);
    };
    const int d1_span = days_to_steps(profile.max_d1_delay_days);
    auto after_dose1 = [&](int n) { return ramp(0.0, profile.dose1[c], n - *rec.dose1_step, d1_span); };
    if (!rec.dose2_step || step < *rec.dose2_step) {
        return after_dose1(step);
    }
    const double start = after_dose1(*rec.dose2_step);
    return ramp(start, std::max(start, profile.dose2[c]), step - *rec.dose2_step,
                days_to_steps(profile.max_d2_delay_days));
}

inline double efficacy_at(VeComponent component, const VaccinationRecord* rec, const VaccineProfiles& profiles,
                          int step) noexcept
{
    if (rec == nullptr) {
        return 0.0;
    }
    return efficacy_at(component, *rec, profiles.of(rec->brand), step);
}

inline Brand brand_for_age(int age, double u_brand) noexcept
{
    if (age < 16) {
        return Brand::Pfizer;
    }
    return u_brand < 0.5 ? Brand::AZ : Brand::Pfizer;
}

/// Per-agent records; agents without a record are unvaccinated.
using VaccinationPlan = std::vector<std::optional<VaccinationRecord>>;

/// Pre-pandemic rollout: each agent is fully vaccinated with probability
/// `coverage`; 16+ split evenly between brands, younger agents get Pfizer.
inline VaccinationPlan rollout_prepandemic(const Population& pop, double coverage, const EpisodeDraws& draws)
{
    if (!(coverage >= 0.0 && coverage <= 1.0)) {
        throw std::invalid_argument("rollout_prepandemic: coverage must lie in [0,1]");
    }
    VaccinationPlan plan(pop.size());
    for (const auto& a : pop.agents) {
        if (draws.uniform(DrawPurpose::VaccineCoverage, a.id) < coverage) {
            VaccinationRecord rec;
            rec.prepandemic = true;
            rec.brand = brand_for_age(a.age, draws.uniform(DrawPurpose::VaccineBrand, a.id));
            plan[a.id] = rec;
        }
    }
    return plan;
}

struct ScheduleDay {
    int day = 0;
    int dose1 = 0;
    int dose2 = 0;
};

using DoseSchedule = std::vector<ScheduleDay>;

/// Reads "date_offset_days,dose1_count,dose2_count" rows; a header line is
/// optional.
inline DoseSchedule read_dose_schedule(std::istream& in)
{
    DoseSchedule out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (line_no == 1 && line.find("date_offset_days") != std::string::npos) {
            continue;
        }
        std::istringstream row(line);
        ScheduleDay d;
        char c1 = 0, c2 = 0;
        if (!(row >> d.day >> c1 >> d.dose1 >> c2 >> d.dose2) || c1 != ',' || c2 != ',') {
            throw std::invalid_argument("dose schedule: malformed line " + std::to_string(line_no));
        }
        if (d.day < 0 || d.dose1 < 0 || d.dose2 < 0) {
            throw std::invalid_argument("dose schedule: negative value on line " + std::to_string(line_no));
        }
        out.push_back(d);
    }
    std::stable_sort(out.begin(), out.end(), [](const ScheduleDay& a, const ScheduleDay& b) { return a.day < b.day; });
    return out;
}

inline DoseSchedule read_dose_schedule_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open dose schedule " + path);
    }
    return read_dose_schedule(in);
}

/// Daily capacity as a fraction of the town, growing linearly from `start`
/// to `end` over `days`; dose 2 follows dose 1 by three weeks.
inline DoseSchedule synthetic_schedule(std::size_t population, int days, double start = 0.004, double end = 0.012)
{
    DoseSchedule out;
    const auto n = static_cast<double>(population);
    for (int d = 0; d < days; ++d) {
        const double frac = days > 1 ? start + (end - start) * d / (days - 1) : start;
        const int d1 = static_cast<int>(std::lround(frac * n));
        const int d2 = d >= 21 ? out[static_cast<std::size_t>(d - 21)].dose1 : 0;
        out.push_back({d, d1, d2});
    }
    return out;
}

struct DoseEvent {
    int day = 0;
    AgentId agent = 0;
    int dose = 1;
    Brand brand = Brand::Pfizer;
};

struct RolloutReport {
    std::vector<DoseEvent> events;
    long long dose1_dropped = 0;
    long long dose2_dropped = 0;
    /// Agent-days on which an eligible dose-2 recipient waited for supply.
    long long dose2_deferred = 0;
};

/// Priority group for dose 1; larger is served first, -1 ineligible.
inline int dose1_priority(int age) noexcept
{
    if (age >= 70) {
        return 3;
    }
    if (age >= 50) {
        return 2;
    }
    if (age >= 16) {
        return 1;
    }
    if (age >= 12) {
        return 0;
    }
    return -1;
}

/// Progressive rollout against a daily schedule. Dose 1 goes to the oldest
/// priority group first (random order within a group); dose 2 goes
/// first-come first-served to recipients whose Min_Delay has elapsed.
inline RolloutReport rollout_progressive(const Population& pop, const DoseSchedule& schedule,
                                         const VaccineProfiles& profiles, Rng& rng)
{
    RolloutReport report;
    std::array<std::vector<AgentId>, 4> groups;
    for (const auto& a : pop.agents) {
        if (const int g = dose1_priority(a.age); g >= 0) {
            groups[static_cast<std::size_t>(g)].push_back(a.id);
        }
    }
    std::vector<AgentId> queue;
    for (int g = 3; g >= 0; --g) {
        auto& members = groups[static_cast<std::size_t>(g)];
        rng.shuffle(members);
        queue.insert(queue.end(), members.begin(), members.end());
    }
    std::size_t next_dose1 = 0;
    struct Pending {
        AgentId agent;
        int eligible_day;
        Brand brand;
    };
    std::deque<Pending> awaiting;

    for (const auto& day : schedule) {
        int supply2 = day.dose2;
        // Served in dose-1 order; Min_Delay differs by brand so eligibility
        // is not monotone along the queue.
        for (auto it = awaiting.begin(); it != awaiting.end() && supply2 > 0;) {
            if (it->eligible_day <= day.day) {
                report.events.push_back({day.day, it->agent, 2, it->brand});
                it = awaiting.erase(it);
                --supply2;
            } else {
                ++it;
            }
        }
        for (const auto& p : awaiting) {
            if (p.eligible_day <= day.day) {
                ++report.dose2_deferred;
            }
        }
        report.dose2_dropped += supply2;

        int supply1 = day.dose1;
        while (supply1 > 0 && next_dose1 < queue.size()) {
            const AgentId id = queue[next_dose1++];
            const Brand brand = brand_for_age(pop.agents[id].age, rng.uniform());
            report.events.push_back({day.day, id, 1, brand});
            awaiting.push_back({id, day.day + profiles.of(brand).min_delay_days, brand});
            --supply1;
        }
        report.dose1_dropped += supply1;
    }
    if (report.dose1_dropped > 0 || report.dose2_dropped > 0) {
        logger()->warn("progressive rollout: dropped {} dose-1 and {} dose-2 doses with no eligible recipient",
                       report.dose1_dropped, report.dose2_dropped);
    }
    if (report.dose2_deferred > 0) {
        logger()->debug("progressive rollout: {} agent-days of deferred dose-2 demand", report.dose2_deferred);
    }
    return report;
}

/// Apply dose events as records; dose days become the first step of that day.
inline VaccinationPlan plan_from_events(std::size_t n_agents, const std::vector<DoseEvent>& events)
{
    VaccinationPlan plan(n_agents);
    for (const auto& e : events) {
        auto& rec = plan.at(e.agent);
        if (e.dose == 1) {
            VaccinationRecord r;
            r.brand = e.brand;
            r.dose1_step = days_to_steps(e.day);
            rec = r;
        } else {
            if (!rec) {
                throw std::logic_error("dose 2 without dose 1");
            }
            rec->dose2_step = days_to_steps(e.day);
        }
    }
    return plan;
}

inline nlohmann::json vaccine_profile_to_json(const VaccineProfile& p)
{
    return {{"brand", std::string(to_string(p.brand))},
            {"max_d1_delay_days", p.max_d1_delay_days},
            {"min_delay_days", p.min_delay_days},
            {"max_d2_delay_days", p.max_d2_delay_days},
            {"dose1", {{"VEs", p.dose1[0]}, {"VEd", p.dose1[1]}, {"VEi", p.dose1[2]}, {"VEp", p.dose1[3]}}},
            {"dose2", {{"VEs", p.dose2[0]}, {"VEd", p.dose2[1]}, {"VEi", p.dose2[2]}, {"VEp", p.dose2[3]}}}};
}

/// Overlay JSON fields onto a profile; dose maxima may be given as VEs/VEd/
/// VEi/VEp or as a clinical efficacy "VEc" that sets VEs and VEd together.
inline VaccineProfile vaccine_profile_from_json(const nlohmann::json& doc, VaccineProfile base)
{
    auto read_dose = [](const nlohmann::json& d, std::array<double, kVeComponents>& out) {
        for (const auto& [k, v] : d.items()) {
            if (k == "VEc") {
                out[0] = out[1] = solve_ves_ved(v.get<double>());
            } else if (k == "VEs") {
                out[0] = v.get<double>();
            } else if (k == "VEd") {
                out[1] = v.get<double>();
            } else if (k == "VEi") {
                out[2] = v.get<double>();
            } else if (k == "VEp") {
                out[3] = v.get<double>();
            } else {
                throw std::invalid_argument("vaccine profile: unknown efficacy " + k);
            }
        }
    };
    for (const auto& [k, v] : doc.items()) {
        if (k == "brand") {
            continue;
        } else if (k == "max_d1_delay_days") {
            base.max_d1_delay_days = v.get<int>();
        } else if (k == "min_delay_days") {
            base.min_delay_days = v.get<int>();
        } else if (k == "max_d2_delay_days") {
            base.max_d2_delay_days = v.get<int>();
        } else if (k == "dose1") {
            read_dose(v, base.dose1);
        } else if (k == "dose2") {
            read_dose(v, base.dose2);
        } else {
            throw std::invalid_argument("vaccine profile: unknown key " + k);
        }
    }
    base.validate();
    return base;
}

}  // namespace epinet
