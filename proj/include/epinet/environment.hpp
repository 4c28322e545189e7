#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinet/econ.hpp"
#include "epinet/logging.hpp"
#include "epinet/parallel.hpp"
#include "epinet/population.hpp"
#include "epinet/rng.hpp"
#include "epinet/simulation.hpp"
#include "epinet/stats.hpp"
#include "epinet/vaccination.hpp"

namespace epinet {

inline constexpr std::size_t kObservationDim = 5;
using Observation = std::array<double, kObservationDim>;

struct VaccinationSetup {
    RolloutMode mode = RolloutMode::PrePandemic;
    double coverage = 0.85;
    /// Progressive mode; empty means the synthetic default schedule.
    DoseSchedule schedule;
};

/// Builds the per-episode vaccination plan from the episode seed.
inline VaccinationPlan make_vaccination_plan(const Population& pop, const VaccinationSetup& setup,
                                             const VaccineProfiles& profiles, std::uint64_t episode_seed)
{
    switch (setup.mode) {
    case RolloutMode::None:
        return {};
    case RolloutMode::PrePandemic:
        return rollout_prepandemic(pop, setup.coverage, EpisodeDraws(episode_seed));
    case RolloutMode::Progressive: {
        Rng rng(derive_seed(episode_seed, {static_cast<std::uint64_t>(DrawPurpose::VaccineBrand)}));
        const DoseSchedule schedule = setup.schedule.empty() ? synthetic_schedule(pop.size(), 160) : setup.schedule;
        return plan_from_events(pop.size(), rollout_progressive(pop, schedule, profiles, rng).events);
    }
    }
    return {};
}

struct EnvConfig {
    EpidemicConfig epidemic;
    VaccinationSetup vaccination;
    EconConfig econ;
    int tr_threshold = 5;
    int sd_trigger_threshold = 5;
    int n_decisions = 20;
    int decision_interval_days = 7;
    int max_seeding_days = 60;
    /// Daily seeding probability per agent; non-positive means 1/n.
    double seeding_p = 0.0;
    double sd_max = 0.7;
    /// Reject out-of-range actions instead of clipping them.
    bool strict_actions = false;

    int steps_per_period() const noexcept { return days_to_steps(decision_interval_days); }
    double weeks_per_period() const noexcept { return decision_interval_days / 7.0; }

    void validate() const
    {
        epidemic.validate();
        econ.validate();
        if (tr_threshold < 1 || sd_trigger_threshold < 1) {
            throw std::invalid_argument("env: thresholds must be >= 1");
        }
        if (decision_interval_days < 1 || n_decisions < 1 || max_seeding_days < 1) {
            throw std::invalid_argument("env: decision interval, decision count and seeding cap must be >= 1");
        }
        if (!(sd_max >= 0.0 && sd_max <= 1.0)) {
            throw std::invalid_argument("env: sd_max must lie in [0,1]");
        }
        if (seeding_p > 1.0) {
            throw std::invalid_argument("env: seeding_p must not exceed 1");
        }
    }
};

struct DecisionRecord {
    int t = 0;
    Observation observation{};
    double sd_level = 0.0;
    double loss_null = 0.0;
    double loss_controlled = 0.0;
    double cost = 0.0;
    double reward = 0.0;
    double cum_nhb = 0.0;
    Observation next_observation{};
    bool done = false;
};

inline nlohmann::json to_json(const DecisionRecord& r)
{
    return {{"t", r.t},
            {"observation", r.observation},
            {"sd_level", r.sd_level},
            {"loss_null", r.loss_null},
            {"loss_controlled", r.loss_controlled},
            {"cost", r.cost},
            {"reward", r.reward},
            {"cum_nhb", r.cum_nhb},
            {"next_observation", r.next_observation},
            {"done", r.done}};
}

/// Per-period mean DALY loss of the zero-SD trajectory.
struct NullBaseline {
    std::uint64_t master_seed = 0;
    int episodes = 0;
    std::vector<double> mean_loss;
    std::vector<double> var_loss;
    /// Per-episode total DALY over all periods.
    std::vector<double> episode_totals;

    double loss(int t) const
    {
        if (t < 0 || static_cast<std::size_t>(t) >= mean_loss.size()) {
            throw std::out_of_range("null baseline shorter than the episode");
        }
        return mean_loss[static_cast<std::size_t>(t)];
    }
    double total() const noexcept
    {
        double s = 0.0;
        for (double v : mean_loss) {
            s += v;
        }
        return s;
    }
};

inline constexpr std::string_view kBaselineFormat = "epinet-null-baseline";

inline nlohmann::json baseline_to_json(const NullBaseline& b)
{
    return {{"format", kBaselineFormat},
            {"version", 1},
            {"master_seed", b.master_seed},
            {"episodes", b.episodes},
            {"mean_loss", b.mean_loss},
            {"var_loss", b.var_loss},
            {"episode_totals", b.episode_totals}};
}

inline NullBaseline baseline_from_json(const nlohmann::json& j)
{
    if (j.value("format", std::string{}) != kBaselineFormat || j.value("version", 0) != 1) {
        throw std::invalid_argument("not an epinet null-baseline document (version 1)");
    }
    NullBaseline b;
    b.master_seed = j.at("master_seed").get<std::uint64_t>();
    b.episodes = j.at("episodes").get<int>();
    b.mean_loss = j.at("mean_loss").get<std::vector<double>>();
    b.var_loss = j.at("var_loss").get<std::vector<double>>();
    b.episode_totals = j.at("episode_totals").get<std::vector<double>>();
    if (b.var_loss.size() != b.mean_loss.size()) {
        throw std::invalid_argument("null baseline: mean and variance series differ in length");
    }
    return b;
}

struct StepResult {
    Observation observation{};
    double reward = 0.0;
    bool done = false;
    DecisionRecord record;
};

/// Episodic MDP over one simulated outbreak: weekly SD decisions after the
/// trigger, reward = baseline loss - period loss - cost / lambda.
class EpidemicEnv
{
  public:
    EpidemicEnv(std::shared_ptr<const Population> pop, EnvConfig cfg,
                std::shared_ptr<const NullBaseline> baseline = nullptr)
        : pop_(std::move(pop)), cfg_(std::move(cfg)), baseline_(std::move(baseline))
    {
        if (!pop_) {
            throw std::invalid_argument("env: population required");
        }
        cfg_.econ.town_population = static_cast<double>(pop_->size());
        cfg_.validate();
        if (baseline_ && static_cast<int>(baseline_->mean_loss.size()) < cfg_.n_decisions) {
            throw std::invalid_argument("env: null baseline shorter than n_decisions");
        }
    }

    const EnvConfig& config() const noexcept { return cfg_; }
    const Population& population() const noexcept { return *pop_; }
    const NullBaseline* baseline() const noexcept { return baseline_.get(); }
    void set_baseline(std::shared_ptr<const NullBaseline> b) { baseline_ = std::move(b); }

    /// Seeds until the detection threshold, advances to the first decision
    /// point and returns the initial observation.
    Observation reset(std::uint64_t episode_seed)
    {
        sim_.emplace(*pop_, cfg_.epidemic, episode_seed,
                     make_vaccination_plan(*pop_, cfg_.vaccination, cfg_.epidemic.vaccines, episode_seed));
        t_ = 0;
        cum_nhb_ = 0.0;
        history_.clear();
        account_ = EpisodeAccount{};
        account_.lambda = cfg_.econ.lambda;
        const double p = cfg_.seeding_p > 0.0 ? cfg_.seeding_p : 1.0 / static_cast<double>(pop_->size());
        seeded_ = 0;
        seeding_days_ = 0;
        while (sim_->cumulative_detected() < cfg_.tr_threshold) {
            if (seeding_days_ >= cfg_.max_seeding_days) {
                throw std::runtime_error("env: seeding did not reach " + std::to_string(cfg_.tr_threshold) +
                                         " detected cases within " + std::to_string(cfg_.max_seeding_days) +
                                         " days");
            }
            seeded_ += sim_->seed_random(static_cast<int>(sim_->draw_seed_count(p)));
            sim_->run(kStepsPerDay);
            ++seeding_days_;
        }
        int waited = 0;
        while (sim_->cumulative_detected() < cfg_.sd_trigger_threshold) {
            if (sim_->counts().infected == 0 || waited >= cfg_.max_seeding_days) {
                throw std::runtime_error("env: SD trigger threshold not reached");
            }
            sim_->run(kStepsPerDay);
            ++waited;
        }
        decision_start_ = sim_->current_step();
        observation_ = observe();
        return observation_;
    }

    bool active() const noexcept { return sim_.has_value() && t_ < cfg_.n_decisions; }
    int period() const noexcept { return t_; }
    const Observation& observation() const noexcept { return observation_; }
    double cum_nhb() const noexcept { return cum_nhb_; }
    const std::vector<DecisionRecord>& history() const noexcept { return history_; }
    const EpisodeAccount& account() const noexcept { return account_; }
    const Simulator& simulator() const
    {
        if (!sim_) {
            throw std::logic_error("env: reset() has not been called");
        }
        return *sim_;
    }
    int decision_start_step() const noexcept { return decision_start_; }
    int seeded_cases() const noexcept { return seeded_; }
    int seeding_days() const noexcept { return seeding_days_; }

    /// Clip an SD level into [0, sd_max]; in strict mode out-of-range
    /// levels are an error.
    double admissible_level(double sd_level) const
    {
        if (sd_level >= 0.0 && sd_level <= cfg_.sd_max) {
            return sd_level;
        }
        if (cfg_.strict_actions || std::isnan(sd_level)) {
            throw std::invalid_argument("env: sd_level outside [0, sd_max]");
        }
        const double clipped = std::clamp(sd_level, 0.0, cfg_.sd_max);
        logger()->info("env: clipped sd_level {} to {}", sd_level, clipped);
        return clipped;
    }

    /// Maps a normalised action in [0,1] onto [0, sd_max].
    double level_from_action(double a) const noexcept { return std::clamp(a, 0.0, 1.0) * cfg_.sd_max; }

    StepResult step(double sd_level)
    {
        if (!active()) {
            throw std::logic_error("env: step() on a finished or unstarted episode");
        }
        const double level = admissible_level(sd_level);
        DecisionRecord rec;
        rec.t = t_;
        rec.observation = observation_;
        rec.sd_level = level;
        const int from = sim_->current_step();
        sim_->set_sd_level(level);
        sim_->run(cfg_.steps_per_period());
        const int to = sim_->current_step();
        rec.loss_controlled = sim_->ledger().sum(from, to, [](const LedgerRow& r) { return r.booked_daly; });
        rec.loss_null = baseline_ ? baseline_->loss(t_) : 0.0;
        rec.cost = period_cost(level, cfg_.econ, cfg_.weeks_per_period());
        rec.reward = period_reward(rec.loss_null, rec.loss_controlled, rec.cost, cfg_.econ.lambda);
        cum_nhb_ += rec.reward;
        rec.cum_nhb = cum_nhb_;
        ++t_;
        observation_ = observe();
        rec.next_observation = observation_;
        rec.done = t_ >= cfg_.n_decisions;
        history_.push_back(rec);
        account_.periods.push_back({rec.t, rec.sd_level, rec.loss_null, rec.loss_controlled, rec.cost, rec.reward});
        return {observation_, rec.reward, rec.done, rec};
    }

    void write_trace_jsonl(std::ostream& out) const
    {
        for (const auto& r : history_) {
            out << to_json(r).dump() << '\n';
        }
    }

  private:
    Observation observe() const
    {
        const auto& ledger = sim_->ledger();
        const int now = sim_->current_step();
        const int from = now - cfg_.steps_per_period();
        const double n = static_cast<double>(pop_->size());
        Observation o{};
        o[0] = ledger.sum(from, now, [](const LedgerRow& r) { return r.detected_sym; }) / n;
        o[1] = ledger.sum(from, now, [](const LedgerRow& r) { return r.detected_asym; }) / n;
        o[2] = sim_->counts().infected / n;
        o[3] = sim_->cumulative_recoveries() / n;
        o[4] = sim_->cumulative_deaths() / n;
        return o;
    }

    std::shared_ptr<const Population> pop_;
    EnvConfig cfg_;
    std::shared_ptr<const NullBaseline> baseline_;
    std::optional<Simulator> sim_;
    Observation observation_{};
    std::vector<DecisionRecord> history_;
    EpisodeAccount account_;
    int t_ = 0;
    int decision_start_ = 0;
    int seeded_ = 0;
    int seeding_days_ = 0;
    double cum_nhb_ = 0.0;
};

/// Seed of baseline episode k.
inline std::uint64_t baseline_episode_seed(std::uint64_t master, int k)
{
    return derive_seed(master, {0xBA5Eull, static_cast<std::uint64_t>(k)});
}

/// Per-period DALY losses of one zero-SD episode.
inline std::vector<double> zero_sd_losses(const std::shared_ptr<const Population>& pop, const EnvConfig& cfg,
                                          std::uint64_t episode_seed)
{
    EpidemicEnv env(pop, cfg);
    env.reset(episode_seed);
    std::vector<double> losses;
    while (env.active()) {
        losses.push_back(env.step(0.0).record.loss_controlled);
    }
    return losses;
}

inline NullBaseline build_null_baseline(const std::shared_ptr<const Population>& pop, const EnvConfig& cfg,
                                        int episodes, std::uint64_t master_seed)
{
    if (episodes < 1) {
        throw std::invalid_argument("null baseline needs K >= 1");
    }
    const auto runs = parallel_map(static_cast<std::size_t>(episodes), [&](std::size_t k) {
        return zero_sd_losses(pop, cfg, baseline_episode_seed(master_seed, static_cast<int>(k)));
    });
    NullBaseline b;
    b.master_seed = master_seed;
    b.episodes = episodes;
    const std::size_t periods = static_cast<std::size_t>(cfg.n_decisions);
    b.mean_loss.assign(periods, 0.0);
    b.var_loss.assign(periods, 0.0);
    for (std::size_t t = 0; t < periods; ++t) {
        std::vector<double> xs;
        xs.reserve(runs.size());
        for (const auto& r : runs) {
            xs.push_back(r[t]);
        }
        b.mean_loss[t] = stats::mean(xs);
        b.var_loss[t] = stats::variance(xs);
    }
    for (const auto& r : runs) {
        double s = 0.0;
        for (double v : r) {
            s += v;
        }
        b.episode_totals.push_back(s);
    }
    return b;
}

}  // namespace epinet
