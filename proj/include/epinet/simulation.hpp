#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinet/interventions.hpp"
#include "epinet/logging.hpp"
#include "epinet/population.hpp"
#include "epinet/rng.hpp"
#include "epinet/transmission.hpp"
#include "epinet/vaccination.hpp"

namespace epinet {

inline constexpr AgentId kNoAgent = std::numeric_limits<AgentId>::max();

enum class Phase : std::uint8_t { Susceptible, Infected, Removed };
enum class Outcome : std::uint8_t { Recovers, Dies };

struct DiseaseState {
    Phase phase = Phase::Susceptible;
    int infection_step = -1;
    bool symptomatic = false;
    bool detected = false;
    int detection_step = -1;
    Outcome outcome = Outcome::Recovers;
    double booked_daly = 0.0;
    /// Sampled infector when attribution is on; kNoAgent for seeded cases.
    AgentId infector = kNoAgent;
};

struct LedgerRow {
    int step = 0;
    int new_infections = 0;
    int detected_sym = 0;
    int detected_asym = 0;
    int deaths = 0;
    int recoveries = 0;
    double booked_daly = 0.0;
};

struct HealthLedger {
    std::vector<LedgerRow> rows;

    double total_daly() const noexcept
    {
        double s = 0.0;
        for (const auto& r : rows) {
            s += r.booked_daly;
        }
        return s;
    }

    /// Sum of a field over steps [from, to).
    template <class F>
    double sum(int from, int to, F field) const
    {
        double s = 0.0;
        for (int n = std::max(0, from); n < std::min<int>(to, static_cast<int>(rows.size())); ++n) {
            s += static_cast<double>(field(rows[static_cast<std::size_t>(n)]));
        }
        return s;
    }

    void write_csv(std::ostream& out) const
    {
        out << "step,new_infections,detected_sym,detected_asym,deaths,recoveries,booked_daly\n";
        char buf[64];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%.17g", r.booked_daly);
            out << r.step << ',' << r.new_infections << ',' << r.detected_sym << ',' << r.detected_asym << ','
                << r.deaths << ',' << r.recoveries << ',' << buf << '\n';
        }
    }
};

struct EpidemicConfig {
    TransmissionParams params;
    NaturalHistory history;
    TransmissionTable table = TransmissionTable::defaults();
    NpiTable npis = NpiTable::defaults();
    OnsetToRecovery recovery;
    VaccineProfiles vaccines;
    double detect_symptomatic = 0.9;
    double detect_asymptomatic = 0.1;
    int hq_days = 14;
    bool case_isolation = true;
    bool home_quarantine = true;
    bool school_closure = false;
    /// Sample an infector for every transmission.
    bool attribution = false;

    void validate() const
    {
        if (!(params.kappa >= 0.0)) {
            throw std::invalid_argument("kappa must be non-negative");
        }
        if (!(params.alpha_asymp > 0.0 && params.alpha_asymp <= 1.0)) {
            throw std::invalid_argument("alpha_asymp must lie in (0,1]");
        }
        for (double p : {params.sigma_adult, params.sigma_child, detect_symptomatic, detect_asymptomatic}) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw std::invalid_argument("symptomatic and detection probabilities must lie in [0,1]");
            }
        }
        if (hq_days < 0) {
            throw std::invalid_argument("hq_days must be non-negative");
        }
        npis.validate();
        vaccines.az.validate();
        vaccines.pfizer.validate();
    }
};

struct PhaseCounts {
    int susceptible = 0;
    int infected = 0;
    int removed = 0;
};

/// One stochastic epidemic episode over a fixed population. Step n is a Day
/// half-day when even and a Night half-day when odd. All randomness inside
/// an episode is counter-based on (seed, purpose, agent, step).
class Simulator
{
  public:
    Simulator(const Population& pop, EpidemicConfig cfg, std::uint64_t seed, VaccinationPlan plan = {})
        : pop_(&pop), cfg_(std::move(cfg)), draws_(seed), seed_(seed), plan_(std::move(plan))
    {
        cfg_.validate();
        if (!plan_.empty() && plan_.size() != pop.size()) {
            throw std::invalid_argument("vaccination plan size does not match population");
        }
        const std::size_t n = pop.size();
        states_.resize(n);
        band_.resize(n);
        hq_until_.assign(n, -1);
        log_survival_.assign(n, 0.0);
        touched_agent_.assign(n, 0);
        for (const auto& a : pop.agents) {
            band_[a.id] = age_band(a.age);
        }
        const std::size_t nc = pop.contexts.size();
        ctx_q_.resize(nc);
        ctx_sources_.resize(nc);
        for (const auto& g : pop.contexts) {
            auto& q = ctx_q_[g.id];
            for (std::size_t s = 0; s < kAgeBandCount; ++s) {
                for (std::size_t t = 0; t < kAgeBandCount; ++t) {
                    const auto sb = static_cast<AgeBand>(s);
                    const auto tb = static_cast<AgeBand>(t);
                    q[s][t] = cfg_.table.defined(g.kind, g.members.size(), sb, tb)
                                  ? cfg_.table.q(g.kind, g.members.size(), sb, tb)
                                  : std::numeric_limits<double>::quiet_NaN();
                }
            }
        }
        counts_.susceptible = static_cast<int>(n);
    }

    const Population& population() const noexcept { return *pop_; }
    const EpidemicConfig& config() const noexcept { return cfg_; }
    std::uint64_t seed() const noexcept { return seed_; }
    int current_step() const noexcept { return step_; }
    Cycle current_cycle() const noexcept { return step_ % 2 == 0 ? Cycle::Day : Cycle::Night; }

    double sd_level() const noexcept { return sd_level_; }
    void set_sd_level(double level)
    {
        if (!(level >= 0.0 && level <= 1.0)) {
            throw std::invalid_argument("sd_level must lie in [0,1]");
        }
        sd_level_ = level;
    }
    void set_school_closure(bool on) noexcept { cfg_.school_closure = on; }

    const std::vector<DiseaseState>& states() const noexcept { return states_; }
    const HealthLedger& ledger() const noexcept { return ledger_; }
    const PhaseCounts& counts() const noexcept { return counts_; }
    const ClampCounter& clamps() const noexcept { return clamps_; }
    std::uint64_t residual_clamps() const noexcept { return residual_clamps_; }
    int cumulative_detected() const noexcept { return cum_detected_sym_ + cum_detected_asym_; }
    int cumulative_detected_sym() const noexcept { return cum_detected_sym_; }
    int cumulative_detected_asym() const noexcept { return cum_detected_asym_; }
    int cumulative_deaths() const noexcept { return cum_deaths_; }
    int cumulative_recoveries() const noexcept { return cum_recoveries_; }
    int cumulative_infections() const noexcept { return cum_infections_; }

    const VaccinationRecord* vaccination(AgentId id) const noexcept
    {
        if (plan_.empty() || !plan_[id]) {
            return nullptr;
        }
        return &*plan_[id];
    }

    double efficacy(VeComponent c, AgentId id, int step) const noexcept
    {
        return efficacy_at(c, vaccination(id), cfg_.vaccines, step);
    }

    /// Infect a susceptible agent from outside the town before the current
    /// step is processed. Returns false if the agent was not susceptible.
    bool introduce(AgentId id)
    {
        if (states_.at(id).phase != Phase::Susceptible) {
            return false;
        }
        ensure_row(step_);
        infect(id, step_, step_, kNoAgent);
        return true;
    }

    /// Seed `count` infections among susceptibles, chosen uniformly with the
    /// step's seeding stream. Returns the number actually seeded.
    int seed_random(int count)
    {
        if (count <= 0) {
            return 0;
        }
        std::vector<AgentId> pool;
        pool.reserve(static_cast<std::size_t>(counts_.susceptible));
        for (AgentId i = 0; i < states_.size(); ++i) {
            if (states_[i].phase == Phase::Susceptible) {
                pool.push_back(i);
            }
        }
        Rng rng(derive_seed(seed_, {static_cast<std::uint64_t>(DrawPurpose::Seeding),
                                    static_cast<std::uint64_t>(step_)}));
        int seeded = 0;
        for (int k = 0; k < count && !pool.empty(); ++k) {
            const auto idx = static_cast<std::size_t>(rng.uniform_index(pool.size()));
            introduce(pool[idx]);
            pool[idx] = pool.back();
            pool.pop_back();
            ++seeded;
        }
        return seeded;
    }

    /// Daily seeding draw: Binomial(n, p) from the counter stream.
    std::uint64_t draw_seed_count(double p) const
    {
        const double u = draws_.uniform(DrawPurpose::Seeding, 0, static_cast<std::uint64_t>(step_));
        return binomial_inverse(pop_->size(), p, u);
    }

    void run(int steps)
    {
        for (int k = 0; k < steps; ++k) {
            step();
        }
    }

    void step()
    {
        const int n = step_;
        ensure_row(n);
        progress(n);
        transmit(n);
        ++step_;
    }

    nlohmann::json snapshot_json() const
    {
        nlohmann::json j;
        j["step"] = step_;
        j["day"] = step_ / kStepsPerDay;
        j["sd_level"] = sd_level_;
        j["susceptible"] = counts_.susceptible;
        j["infected"] = counts_.infected;
        j["removed"] = counts_.removed;
        j["cumulative_infections"] = cum_infections_;
        j["cumulative_detected_sym"] = cum_detected_sym_;
        j["cumulative_detected_asym"] = cum_detected_asym_;
        j["cumulative_deaths"] = cum_deaths_;
        j["cumulative_recoveries"] = cum_recoveries_;
        j["booked_daly"] = ledger_.total_daly();
        j["clamps"] = {{"pairwise", clamps_.pairwise}, {"adjusted", clamps_.adjusted}};
        return j;
    }

  private:
    struct Source {
        AgentId agent;
        double pairwise_scale;  // kappa * f * (alpha if asymptomatic)
        double adjust;          // (1 - VEi) * F_g(j)
    };

    void ensure_row(int n)
    {
        while (static_cast<int>(ledger_.rows.size()) <= n) {
            LedgerRow r;
            r.step = static_cast<int>(ledger_.rows.size());
            ledger_.rows.push_back(r);
        }
    }

    /// Book a new infection discovered at `book_step`, infectious clock
    /// starting at `infection_step`.
    void infect(AgentId id, int infection_step, int book_step, AgentId infector)
    {
        auto& s = states_[id];
        const auto& agent = pop_->agents[id];
        s.phase = Phase::Infected;
        s.infection_step = infection_step;
        s.infector = infector;
        const double ved = efficacy(VeComponent::Disease, id, book_step);
        const double sigma = cfg_.params.symptomatic_fraction(agent.age);
        s.symptomatic = draws_.uniform(DrawPurpose::Symptomatic, id) < (1.0 - ved) * sigma;
        const double fatality = ifr(static_cast<double>(agent.age), efficacy(VeComponent::Death, id, book_step));
        s.outcome = draws_.uniform(DrawPurpose::Outcome, id) < fatality ? Outcome::Dies : Outcome::Recovers;
        const DalyBooking booking = book_daly(agent.age, agent.life_expectancy, fatality, cfg_.recovery);
        if (booking.residual_clamped) {
            ++residual_clamps_;
            logger()->debug("agent {} age {} exceeds life expectancy {}; YLL clamped at 0", id, agent.age,
                            agent.life_expectancy);
        }
        s.booked_daly = booking.expected_daly;
        auto& row = ledger_.rows[static_cast<std::size_t>(book_step)];
        row.new_infections += 1;
        row.booked_daly += booking.expected_daly;
        --counts_.susceptible;
        ++counts_.infected;
        ++cum_infections_;
        infected_.push_back(id);
    }

    /// Removals and detections due at step n.
    void progress(int n)
    {
        auto& row = ledger_.rows[static_cast<std::size_t>(n)];
        const int t_inf = cfg_.history.infectious_steps();
        const int t_inc = cfg_.history.incubation_steps();
        const int hq_steps = days_to_steps(cfg_.hq_days);
        std::size_t keep = 0;
        for (std::size_t k = 0; k < infected_.size(); ++k) {
            const AgentId j = infected_[k];
            auto& s = states_[j];
            const int delta = n - s.infection_step;
            if (delta >= t_inf) {
                s.phase = Phase::Removed;
                --counts_.infected;
                ++counts_.removed;
                if (s.outcome == Outcome::Dies) {
                    ++row.deaths;
                    ++cum_deaths_;
                } else {
                    ++row.recoveries;
                    ++cum_recoveries_;
                }
                continue;
            }
            infected_[keep++] = j;
            if (delta == t_inc && !s.detected) {
                const double p = s.symptomatic ? cfg_.detect_symptomatic : cfg_.detect_asymptomatic;
                if (draws_.uniform(DrawPurpose::Detection, j) < p) {
                    s.detected = true;
                    s.detection_step = n;
                    if (s.symptomatic) {
                        ++row.detected_sym;
                        ++cum_detected_sym_;
                    } else {
                        ++row.detected_asym;
                        ++cum_detected_asym_;
                    }
                    if (cfg_.home_quarantine && hq_steps > 0) {
                        const auto& hh = pop_->contexts[pop_->agents[j].household];
                        for (AgentId m : hh.members) {
                            hq_until_[m] = std::max(hq_until_[m], n + hq_steps);
                        }
                    }
                }
            }
        }
        infected_.resize(keep);
    }

    ComplianceFlags compliance(AgentId j, int n) const
    {
        const auto& s = states_[j];
        const auto& agent = pop_->agents[j];
        NpiEligibility elig;
        elig.case_isolation = cfg_.case_isolation && s.detected && s.symptomatic;
        elig.home_quarantine = cfg_.home_quarantine && n < hq_until_[j];
        elig.school_child = agent.in_school();
        elig.school_parent = agent.school_parent;
        const CompliancePolicy policy{sd_level_, cfg_.school_closure};
        return draw_agent_compliance(j, n, elig, policy, cfg_.npis, draws_);
    }

    [[noreturn]] void missing_entry(ContextId g, AgentId src, AgentId tgt) const
    {
        const auto& ctx = pop_->contexts[g];
        cfg_.table.q(ctx.kind, ctx.members.size(), band_[src], band_[tgt]);
        throw std::logic_error("transmission table lookup unexpectedly succeeded");
    }

    void check_defined(const std::vector<Source>& sources, ContextId g, AgentId target) const
    {
        for (const auto& src : sources) {
            if (std::isnan(ctx_q_[g][static_cast<std::size_t>(band_[src.agent])][static_cast<std::size_t>(band_[target])])) {
                missing_entry(g, src.agent, target);
            }
        }
    }

    void transmit(int n)
    {
        const Cycle cycle = n % 2 == 0 ? Cycle::Day : Cycle::Night;
        const auto& ctxs = pop_->contexts;
        touched_ctx_.clear();

        for (AgentId j : infected_) {
            const auto& s = states_[j];
            const double f = cfg_.history.infectivity(n - s.infection_step);
            if (f <= 0.0) {
                continue;
            }
            const double scale = cfg_.params.kappa * f * (s.symptomatic ? 1.0 : cfg_.params.alpha_asymp);
            if (scale <= 0.0) {
                continue;
            }
            const double ve_i = efficacy(VeComponent::Infectiousness, j, n);
            const ComplianceFlags flags = compliance(j, n);
            const auto& agent = pop_->agents[j];
            auto add = [&](ContextId g) {
                const auto& ctx = ctxs[g];
                if (ctx.cycle() != cycle || ctx.members.size() < 2) {
                    return;
                }
                const double strength = interaction_strength(flags, ctx.kind, cfg_.npis);
                if (strength < 0.0) {
                    throw std::invalid_argument("interaction strength must be non-negative");
                }
                const double adjust = (1.0 - ve_i) * strength;
                if (adjust <= 0.0) {
                    return;
                }
                auto& list = ctx_sources_[g];
                if (list.empty()) {
                    touched_ctx_.push_back(g);
                }
                list.push_back({j, scale, adjust});
            };
            if (cycle == Cycle::Night) {
                for (ContextId g : agent.home_contexts()) {
                    add(g);
                }
            } else {
                for (ContextId g : agent.day_contexts) {
                    add(g);
                }
            }
        }

        touched_agents_.clear();
        for (ContextId g : touched_ctx_) {
            const auto& sources = ctx_sources_[g];
            std::array<double, kAgeBandCount> log_surv{};
            std::array<bool, kAgeBandCount> band_ok{};
            std::array<std::uint64_t, kAgeBandCount> clamp_pw{};
            std::array<std::uint64_t, kAgeBandCount> clamp_adj{};
            std::array<std::uint64_t, kAgeBandCount> targets{};
            for (std::size_t tb = 0; tb < kAgeBandCount; ++tb) {
                bool ok = true;
                double survive = 1.0;
                for (const auto& src : sources) {
                    const double q = ctx_q_[g][static_cast<std::size_t>(band_[src.agent])][tb];
                    if (std::isnan(q)) {
                        ok = false;
                        break;
                    }
                    double pw = src.pairwise_scale * q;
                    if (pw > 1.0) {
                        pw = 1.0;
                        ++clamp_pw[tb];
                    }
                    double adj = src.adjust * pw;
                    if (adj > 1.0) {
                        adj = 1.0;
                        ++clamp_adj[tb];
                    }
                    survive *= 1.0 - adj;
                }
                log_surv[tb] = std::log(survive);
                band_ok[tb] = ok;
            }
            for (AgentId i : ctxs[g].members) {
                if (states_[i].phase != Phase::Susceptible) {
                    continue;
                }
                const auto tb = static_cast<std::size_t>(band_[i]);
                if (!band_ok[tb]) {
                    check_defined(sources, g, i);
                }
                ++targets[tb];
                log_survival_[i] += log_surv[tb];
                if (!touched_agent_[i]) {
                    touched_agent_[i] = 1;
                    touched_agents_.push_back(i);
                }
            }
            for (std::size_t tb = 0; tb < kAgeBandCount; ++tb) {
                clamps_.pairwise += clamp_pw[tb] * targets[tb];
                clamps_.adjusted += clamp_adj[tb] * targets[tb];
            }
        }

        new_infections_.clear();
        for (AgentId i : touched_agents_) {
            const double u = draws_.uniform(DrawPurpose::Infection, i, static_cast<std::uint64_t>(n));
            const double log_s = log_survival_[i];
            // 1 - e^L <= -L: most weakly exposed agents are ruled out
            // without evaluating the exponential.
            const double bound = -log_s * (1.0 + 1e-12);
            if (u >= bound) {
                continue;
            }
            const double ve_s = efficacy(VeComponent::Susceptibility, i, n);
            if (u >= (1.0 - ve_s) * bound) {
                continue;
            }
            const double p = (1.0 - ve_s) * -std::expm1(log_s);
            if (u < p) {
                new_infections_.push_back(i);
            }
        }
        for (AgentId i : touched_agents_) {
            log_survival_[i] = 0.0;
            touched_agent_[i] = 0;
        }
        for (AgentId i : new_infections_) {
            const AgentId infector = cfg_.attribution ? attribute(i, n, cycle) : kNoAgent;
            infect(i, n + 1, n, infector);
        }
        for (ContextId g : touched_ctx_) {
            ctx_sources_[g].clear();
        }
    }

    /// Infector of a newly infected agent: conditional on at least one
    /// source firing, sources fire independently; one firing source is
    /// then chosen uniformly.
    AgentId attribute(AgentId i, int n, Cycle cycle)
    {
        attr_sources_.clear();
        attr_probs_.clear();
        const auto& agent = pop_->agents[i];
        auto collect = [&](ContextId g) {
            if (pop_->contexts[g].cycle() != cycle) {
                return;
            }
            for (const auto& src : ctx_sources_[g]) {
                const double q =
                    ctx_q_[g][static_cast<std::size_t>(band_[src.agent])][static_cast<std::size_t>(band_[i])];
                const double adj = std::min(1.0, src.adjust * std::min(1.0, src.pairwise_scale * q));
                if (adj > 0.0) {
                    attr_sources_.push_back(src.agent);
                    attr_probs_.push_back(adj);
                }
            }
        };
        if (cycle == Cycle::Night) {
            for (ContextId g : agent.home_contexts()) {
                collect(g);
            }
        } else {
            for (ContextId g : agent.day_contexts) {
                collect(g);
            }
        }
        if (attr_sources_.empty()) {
            return kNoAgent;
        }
        Rng rng(derive_seed(seed_, {static_cast<std::uint64_t>(DrawPurpose::Attribution), i,
                                    static_cast<std::uint64_t>(n)}));
        const std::size_t m = attr_sources_.size();
        // Survival suffix products: tail[k] = prod_{l>=k} (1 - p_l).
        std::vector<double> tail(m + 1, 1.0);
        for (std::size_t k = m; k-- > 0;) {
            tail[k] = tail[k + 1] * (1.0 - attr_probs_[k]);
        }
        std::vector<AgentId> firing;
        bool any = false;
        for (std::size_t k = 0; k < m; ++k) {
            bool fires = false;
            if (any) {
                fires = rng.uniform() < attr_probs_[k];
            } else {
                // P(k fires | none before k, at least one of k.. fires).
                const double at_least_one = 1.0 - tail[k];
                fires = at_least_one <= 0.0 ? false : rng.uniform() < attr_probs_[k] / at_least_one;
                any = fires;
            }
            if (fires) {
                firing.push_back(attr_sources_[k]);
            }
        }
        if (firing.empty()) {
            return kNoAgent;
        }
        return firing[static_cast<std::size_t>(rng.uniform_index(firing.size()))];
    }

  private:
    const Population* pop_;
    EpidemicConfig cfg_;
    EpisodeDraws draws_;
    std::uint64_t seed_;
    VaccinationPlan plan_;

    std::vector<DiseaseState> states_;
    std::vector<AgeBand> band_;
    std::vector<int> hq_until_;
    std::vector<std::array<std::array<double, kAgeBandCount>, kAgeBandCount>> ctx_q_;
    std::vector<std::vector<Source>> ctx_sources_;
    std::vector<ContextId> touched_ctx_;
    std::vector<double> log_survival_;
    std::vector<std::uint8_t> touched_agent_;
    std::vector<AgentId> touched_agents_;
    std::vector<AgentId> new_infections_;
    std::vector<AgentId> infected_;
    std::vector<AgentId> attr_sources_;
    std::vector<double> attr_probs_;

    HealthLedger ledger_;
    PhaseCounts counts_;
    ClampCounter clamps_;
    std::uint64_t residual_clamps_ = 0;
    int step_ = 0;
    double sd_level_ = 0.0;
    int cum_detected_sym_ = 0;
    int cum_detected_asym_ = 0;
    int cum_deaths_ = 0;
    int cum_recoveries_ = 0;
    int cum_infections_ = 0;
};

}  // namespace epinet
