#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "epinet/population.hpp"
#include "epinet/rng.hpp"

namespace epinet {

/// NPIs in precedence order: a compliant agent's interaction strength comes
/// from the first active entry.
enum class Npi : std::uint8_t { CaseIsolation, HomeQuarantine, SocialDistancing, SchoolClosure };

/// Columns of the interaction-strength table; school closure splits into the
/// parent and child roles.
enum class NpiColumn : std::uint8_t { CI, HQ, SD, SCParent, SCChild };

inline constexpr std::size_t kNpiColumns = 5;

constexpr std::string_view to_string(NpiColumn c) noexcept
{
    switch (c) {
    case NpiColumn::CI: return "CI";
    case NpiColumn::HQ: return "HQ";
    case NpiColumn::SD: return "SD";
    case NpiColumn::SCParent: return "SC_parent";
    case NpiColumn::SCChild: return "SC_child";
    }
    return "?";
}

struct NpiTable {
    /// strength[column][context kind]
    std::array<std::array<double, kContextKindCount>, kNpiColumns> strength{};
    double ci_compliance = 0.7;
    double hq_compliance = 0.5;
    double sc_parent_compliance = 0.25;
    double sc_child_compliance = 1.0;

    static NpiTable defaults()
    {
        NpiTable t;
        using K = ContextKind;
        auto row = [&t](K kind, double ci, double hq, double sd, double sc_parent, double sc_child) {
            const auto k = static_cast<std::size_t>(kind);
            t.strength[0][k] = ci;
            t.strength[1][k] = hq;
            t.strength[2][k] = sd;
            t.strength[3][k] = sc_parent;
            t.strength[4][k] = sc_child;
        };
        // Cells the source table leaves blank (children in work groups,
        // parents in schools) cannot occur; they carry the identity 1.0.
        row(K::Household, 1.0, 2.0, 1.0, 1.0, 1.0);
        row(K::HouseholdCluster, 0.25, 0.25, 0.25, 0.5, 0.5);
        row(K::WorkGroup, 0.25, 0.25, 0.1, 0.0, 1.0);
        row(K::Class, 0.25, 0.25, 0.1, 1.0, 0.0);
        row(K::Grade, 0.25, 0.25, 0.1, 1.0, 0.0);
        row(K::School, 0.25, 0.25, 0.1, 1.0, 0.0);
        row(K::Neighborhood, 0.25, 0.25, 0.25, 0.5, 0.5);
        row(K::Community, 0.25, 0.25, 0.25, 0.5, 0.5);
        return t;
    }

    double at(NpiColumn column, ContextKind kind) const noexcept
    {
        return strength[static_cast<std::size_t>(column)][static_cast<std::size_t>(kind)];
    }

    void validate() const
    {
        for (const auto& col : strength) {
            for (double v : col) {
                if (!(v >= 0.0)) {
                    throw std::invalid_argument("npi table: interaction strengths must be non-negative");
                }
            }
        }
        for (double p : {ci_compliance, hq_compliance, sc_parent_compliance, sc_child_compliance}) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw std::invalid_argument("npi table: compliance levels must lie in [0,1]");
            }
        }
    }
};

struct ComplianceFlags {
    bool ci = false;
    bool hq = false;
    bool sd = false;
    bool sc = false;
    /// Table column in force, if any flag is set.
    std::optional<NpiColumn> effective;
};

/// Per-agent inputs that decide which NPIs an agent is eligible for at a
/// step.
struct NpiEligibility {
    bool case_isolation = false;  // detected symptomatic, still infected
    bool home_quarantine = false; // household member of a recent detection
    bool school_child = false;    // enrolled pupil
    bool school_parent = false;   // designated parent of a pupil
};

struct CompliancePolicy {
    double sd_level = 0.0;
    bool school_closure = false;
};

/// Draw one agent's flags at step n. Draws are keyed by (agent, step), so
/// the result does not depend on which other agents are evaluated.
inline ComplianceFlags draw_agent_compliance(AgentId agent, int step, const NpiEligibility& elig,
                                             const CompliancePolicy& policy, const NpiTable& table,
                                             const EpisodeDraws& draws) noexcept
{
    ComplianceFlags f;
    const auto a = static_cast<std::uint64_t>(agent);
    const auto n = static_cast<std::uint64_t>(step);
    f.ci = elig.case_isolation && draws.uniform(DrawPurpose::ComplianceCI, a, n) < table.ci_compliance;
    f.hq = elig.home_quarantine && draws.uniform(DrawPurpose::ComplianceHQ, a, n) < table.hq_compliance;
    f.sd = draws.uniform(DrawPurpose::ComplianceSD, a, n) < policy.sd_level;
    bool sc_child = false;
    if (policy.school_closure) {
        const double u = draws.uniform(DrawPurpose::ComplianceSC, a, n);
        if (elig.school_child) {
            sc_child = u < table.sc_child_compliance;
            f.sc = sc_child;
        } else if (elig.school_parent) {
            f.sc = u < table.sc_parent_compliance;
        }
    }
    if (f.ci) {
        f.effective = NpiColumn::CI;
    } else if (f.hq) {
        f.effective = NpiColumn::HQ;
    } else if (f.sd) {
        f.effective = NpiColumn::SD;
    } else if (f.sc) {
        f.effective = sc_child ? NpiColumn::SCChild : NpiColumn::SCParent;
    }
    return f;
}

/// Flags for every agent at step n.
inline std::vector<ComplianceFlags> draw_compliance(std::span<const NpiEligibility> eligibility, int step,
                                                    const CompliancePolicy& policy, const NpiTable& table,
                                                    const EpisodeDraws& draws)
{
    if (!(policy.sd_level >= 0.0 && policy.sd_level <= 1.0)) {
        throw std::invalid_argument("draw_compliance: sd_level must lie in [0,1]");
    }
    std::vector<ComplianceFlags> out;
    out.reserve(eligibility.size());
    for (std::size_t i = 0; i < eligibility.size(); ++i) {
        out.push_back(draw_agent_compliance(static_cast<AgentId>(i), step, eligibility[i], policy, table, draws));
    }
    return out;
}

/// F_g(j): the effective NPI's strength for the context kind, 1 when the
/// agent complies with nothing.
inline double interaction_strength(const ComplianceFlags& flags, ContextKind kind, const NpiTable& table) noexcept
{
    if (!flags.effective) {
        return 1.0;
    }
    return table.at(*flags.effective, kind);
}

inline nlohmann::json npi_table_to_json(const NpiTable& t)
{
    nlohmann::json strengths = nlohmann::json::object();
    for (std::size_t c = 0; c < kNpiColumns; ++c) {
        nlohmann::json col = nlohmann::json::object();
        for (std::size_t k = 0; k < kContextKindCount; ++k) {
            col[std::string(to_string(static_cast<ContextKind>(k)))] = t.strength[c][k];
        }
        strengths[std::string(to_string(static_cast<NpiColumn>(c)))] = col;
    }
    return {{"strength", strengths},
            {"compliance",
             {{"CI", t.ci_compliance},
              {"HQ", t.hq_compliance},
              {"SC_parent", t.sc_parent_compliance},
              {"SC_child", t.sc_child_compliance}}}};
}

/// Overlay a JSON document on the defaults; any subset of cells may be given.
inline NpiTable npi_table_from_json(const nlohmann::json& doc, NpiTable base = NpiTable::defaults())
{
    for (const auto& [key, value] : doc.items()) {
        if (key == "strength") {
            for (const auto& [col_name, col] : value.items()) {
                std::optional<std::size_t> column;
                for (std::size_t c = 0; c < kNpiColumns; ++c) {
                    if (to_string(static_cast<NpiColumn>(c)) == col_name) {
                        column = c;
                    }
                }
                if (!column) {
                    throw std::invalid_argument("npi table: unknown column " + col_name);
                }
                for (const auto& [kind_name, v] : col.items()) {
                    base.strength[*column][static_cast<std::size_t>(context_kind_from_string(kind_name))] =
                        v.get<double>();
                }
            }
        } else if (key == "compliance") {
            for (const auto& [name, v] : value.items()) {
                if (name == "CI") {
                    base.ci_compliance = v.get<double>();
                } else if (name == "HQ") {
                    base.hq_compliance = v.get<double>();
                } else if (name == "SC_parent") {
                    base.sc_parent_compliance = v.get<double>();
                } else if (name == "SC_child") {
                    base.sc_child_compliance = v.get<double>();
                } else {
                    throw std::invalid_argument("npi table: unknown compliance entry " + name);
                }
            }
        } else {
            throw std::invalid_argument("npi table: unknown key " + key);
        }
    }
    base.validate();
    return base;
}

}  // namespace epinet
