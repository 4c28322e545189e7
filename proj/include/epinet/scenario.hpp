#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinet/config.hpp"
#include "epinet/environment.hpp"
#include "epinet/logging.hpp"
#include "epinet/parallel.hpp"
#include "epinet/population.hpp"
#include "epinet/ppo.hpp"
#include "epinet/simulation.hpp"
#include "epinet/stats.hpp"

namespace epinet {

// ---------------------------------------------------------------------------
// R0

/// Disease model with every NPI and vaccination off and infector sampling on.
inline EpidemicConfig r0_config(EpidemicConfig cfg)
{
    cfg.case_isolation = false;
    cfg.home_quarantine = false;
    cfg.school_closure = false;
    cfg.attribution = true;
    return cfg;
}

/// Generation depth of every agent from the infector links: 0 for seeded
/// cases, -1 for never infected.
inline std::vector<int> infection_depths(const std::vector<DiseaseState>& states)
{
    std::vector<int> depth(states.size(), -1);
    std::function<int(AgentId)> resolve = [&](AgentId i) -> int {
        if (depth[i] >= 0) {
            return depth[i];
        }
        if (states[i].phase == Phase::Susceptible) {
            return -1;
        }
        const AgentId src = states[i].infector;
        depth[i] = (src == kNoAgent) ? 0 : resolve(src) + 1;
        return depth[i];
    };
    for (std::size_t i = 0; i < states.size(); ++i) {
        resolve(static_cast<AgentId>(i));
    }
    return depth;
}

inline int direct_secondaries(const std::vector<DiseaseState>& states, AgentId index)
{
    return static_cast<int>(
        std::count_if(states.begin(), states.end(), [&](const DiseaseState& s) { return s.infector == index; }));
}

struct R0Replicate {
    AgentId index_case = 0;
    int secondaries = 0;
    int total_infected = 0;
    std::vector<DiseaseState> states;
};

/// One index case run over its full infectious period with no intervention.
inline R0Replicate r0_replicate(const Population& pop, const EpidemicConfig& base, std::uint64_t master_seed,
                                int rep, bool keep_states = false)
{
    const EpidemicConfig cfg = r0_config(base);
    const auto r = static_cast<std::uint64_t>(rep);
    Rng pick(derive_seed(master_seed, {0x1DE0ull, r}));
    R0Replicate out;
    out.index_case = attack_rate_weighted_index_case(pop, kDefaultAttackRates, pick);
    Simulator sim(pop, cfg, derive_seed(master_seed, {0x50ull, r}));
    sim.introduce(out.index_case);
    sim.run(cfg.history.infectious_steps() + 1);
    out.secondaries = direct_secondaries(sim.states(), out.index_case);
    out.total_infected = sim.cumulative_infections();
    if (keep_states) {
        out.states = sim.states();
    }
    return out;
}

struct R0Estimate {
    double mean = 0.0;
    double low = 0.0;
    double high = 0.0;
    double standard_error = 0.0;
    std::vector<double> secondaries;
};

inline R0Estimate estimate_r0(const Population& pop, const EpidemicConfig& cfg, int reps, std::uint64_t master_seed)
{
    if (reps < 100) {
        throw std::invalid_argument("estimate_r0: need at least 100 replicates");
    }
    const auto runs = parallel_map(static_cast<std::size_t>(reps), [&](std::size_t k) {
        return r0_replicate(pop, cfg, master_seed, static_cast<int>(k)).secondaries;
    });
    R0Estimate est;
    est.secondaries.assign(runs.begin(), runs.end());
    const auto mi = stats::mean_interval(est.secondaries);
    est.mean = mi.mean;
    est.low = mi.low;
    est.high = mi.high;
    est.standard_error = mi.standard_error;
    return est;
}

// ---------------------------------------------------------------------------
// Policies

enum class PolicyKind : std::uint8_t { Zero, Fixed, Random, Adaptive };

inline std::string to_string(PolicyKind k)
{
    switch (k) {
    case PolicyKind::Zero: return "zero";
    case PolicyKind::Fixed: return "fixed";
    case PolicyKind::Random: return "random";
    case PolicyKind::Adaptive: return "adaptive";
    }
    return "?";
}

inline PolicyKind policy_kind_from_string(const std::string& s)
{
    if (s == "zero") return PolicyKind::Zero;
    if (s == "fixed") return PolicyKind::Fixed;
    if (s == "random") return PolicyKind::Random;
    if (s == "adaptive") return PolicyKind::Adaptive;
    throw std::invalid_argument("unknown policy '" + s + "' (zero, fixed, random, adaptive)");
}

struct PolicySpec {
    PolicyKind kind = PolicyKind::Zero;
    /// Fixed level; defaults to sd_max when absent.
    std::optional<double> level;
    std::shared_ptr<const PolicyParams> params;

    static PolicySpec zero() { return {PolicyKind::Zero, std::nullopt, nullptr}; }
    static PolicySpec fixed(std::optional<double> level = std::nullopt) { return {PolicyKind::Fixed, level, nullptr}; }
    static PolicySpec random() { return {PolicyKind::Random, std::nullopt, nullptr}; }
    static PolicySpec adaptive(std::shared_ptr<const PolicyParams> p)
    {
        return {PolicyKind::Adaptive, std::nullopt, std::move(p)};
    }
};

/// Weekly SD level chosen by a policy; `rng` is the per-episode stream used
/// by the random policy.
inline double policy_level(const PolicySpec& spec, const Observation& obs, double sd_max, Rng& rng)
{
    switch (spec.kind) {
    case PolicyKind::Zero:
        return 0.0;
    case PolicyKind::Fixed:
        return spec.level.value_or(sd_max);
    case PolicyKind::Random:
        return rng.uniform() * sd_max;
    case PolicyKind::Adaptive:
        return spec.params->mean_sd_level(obs);
    }
    return 0.0;
}

inline void check_policy(const PolicySpec& spec, double sd_max)
{
    if (spec.kind == PolicyKind::Adaptive) {
        if (!spec.params) {
            throw std::invalid_argument("adaptive policy requires a checkpoint");
        }
        if (std::abs(spec.params->sd_max - sd_max) > 1e-12) {
            throw std::invalid_argument("checkpoint SD_max " + std::to_string(spec.params->sd_max) +
                                        " does not match scenario SD_max " + std::to_string(sd_max));
        }
    }
    if (spec.kind == PolicyKind::Fixed && spec.level && !(*spec.level >= 0.0 && *spec.level <= sd_max)) {
        throw std::invalid_argument("fixed SD level must lie in [0, SD_max]");
    }
}

inline std::uint64_t eval_episode_seed(std::uint64_t master, int e)
{
    return derive_seed(master, {0xE7A1ull, static_cast<std::uint64_t>(e)});
}

struct EvalEpisode {
    std::uint64_t seed = 0;
    std::vector<DecisionRecord> history;
    EpisodeAccount account;
    double cum_nhb = 0.0;
    double total_cost = 0.0;
    double effect = 0.0;
};

struct PolicyEvaluation {
    PolicySpec policy;
    std::vector<EvalEpisode> episodes;

    std::vector<double> nhb() const
    {
        std::vector<double> v;
        for (const auto& e : episodes) {
            v.push_back(e.cum_nhb);
        }
        return v;
    }

    /// Mean SD level of week t across episodes.
    std::vector<double> mean_profile() const
    {
        std::vector<double> out;
        if (episodes.empty()) {
            return out;
        }
        out.assign(episodes.front().history.size(), 0.0);
        for (const auto& e : episodes) {
            for (std::size_t t = 0; t < e.history.size() && t < out.size(); ++t) {
                out[t] += e.history[t].sd_level / static_cast<double>(episodes.size());
            }
        }
        return out;
    }
};

inline EvalEpisode run_episode(EpidemicEnv& env, const PolicySpec& spec, std::uint64_t seed)
{
    EvalEpisode ep;
    ep.seed = seed;
    Rng rng(derive_seed(seed, {0x7A4Dull}));
    Observation obs = env.reset(seed);
    while (env.active()) {
        obs = env.step(policy_level(spec, obs, env.config().sd_max, rng)).observation;
    }
    ep.history = env.history();
    ep.account = env.account();
    ep.cum_nhb = env.cum_nhb();
    ep.total_cost = ep.account.total_cost();
    ep.effect = ep.account.effect();
    return ep;
}

inline PolicyEvaluation run_policy_eval(const std::shared_ptr<const Population>& pop, const EnvConfig& cfg,
                                        const std::shared_ptr<const NullBaseline>& baseline, const PolicySpec& spec,
                                        int n_episodes, std::uint64_t master_seed)
{
    check_policy(spec, cfg.sd_max);
    if (n_episodes < 1) {
        throw std::invalid_argument("evaluation needs at least one episode");
    }
    PolicyEvaluation out;
    out.policy = spec;
    out.episodes = parallel_map(static_cast<std::size_t>(n_episodes), [&](std::size_t e) {
        EpidemicEnv env(pop, cfg, baseline);
        return run_episode(env, spec, eval_episode_seed(master_seed, static_cast<int>(e)));
    });
    return out;
}

// ---------------------------------------------------------------------------
// Sensitivity

enum class SweepParam : std::uint8_t { SdTrigger, Kappa, TInf, SigmaChild, AlphaAsymp };

inline std::string to_string(SweepParam p)
{
    switch (p) {
    case SweepParam::SdTrigger: return "sd_trigger_threshold";
    case SweepParam::Kappa: return "kappa";
    case SweepParam::TInf: return "T_inf";
    case SweepParam::SigmaChild: return "sigma_child";
    case SweepParam::AlphaAsymp: return "alpha_asymp";
    }
    return "?";
}

inline SweepParam sweep_param_from_string(const std::string& s)
{
    for (auto p : {SweepParam::SdTrigger, SweepParam::Kappa, SweepParam::TInf, SweepParam::SigmaChild,
                   SweepParam::AlphaAsymp}) {
        if (to_string(p) == s) {
            return p;
        }
    }
    throw std::invalid_argument("unknown sweep parameter '" + s +
                                "' (sd_trigger_threshold, kappa, T_inf, sigma_child, alpha_asymp)");
}

/// Default grid for each swept parameter.
inline std::vector<double> default_grid(SweepParam p)
{
    std::vector<double> g;
    switch (p) {
    case SweepParam::SdTrigger:
        for (int v = 50; v <= 450; v += 50) {
            g.push_back(v);
        }
        break;
    case SweepParam::Kappa:
        g = {5.6, 5.8, 6.0, 6.2, 6.4};
        break;
    case SweepParam::TInf:
        g = {11, 13, 15, 17};
        break;
    case SweepParam::SigmaChild:
        g = {0.067, 0.134, 0.201, 0.268};
        break;
    case SweepParam::AlphaAsymp:
        g = {0.2, 0.3, 0.4, 0.5};
        break;
    }
    return g;
}

inline void apply_sweep_value(EnvConfig& cfg, SweepParam p, double v)
{
    auto& e = cfg.epidemic;
    switch (p) {
    case SweepParam::SdTrigger:
        cfg.sd_trigger_threshold = static_cast<int>(std::lround(v));
        break;
    case SweepParam::Kappa:
        e.params.kappa = v;
        break;
    case SweepParam::TInf:
        e.history = NaturalHistory(e.history.latent_steps(), e.history.incubation_steps(),
                                   days_to_steps(static_cast<int>(std::lround(v))));
        break;
    case SweepParam::SigmaChild:
        e.params.sigma_child = v;
        break;
    case SweepParam::AlphaAsymp:
        e.params.alpha_asymp = v;
        break;
    }
}

struct SweepSpec {
    SweepParam param = SweepParam::SdTrigger;
    std::vector<double> values;
    std::vector<double> sd_levels{0.3, 0.4, 0.5};
    int reps = 30;
    int horizon_days = 114;
};

struct OutbreakOutcome {
    /// Largest number of detections in one day.
    double peak_incidence = 0.0;
    double total_fatalities = 0.0;
    int total_infections = 0;
    /// Step at which SD started; -1 when the trigger was never reached.
    int sd_start_step = -1;
};

/// Validation-style run: seed until the TR threshold, hold CI/HQ (and SC
/// when configured), switch SD on at a fixed level once cumulative
/// detections reach the trigger, stop at the horizon.
inline OutbreakOutcome run_outbreak(const Population& pop, const EnvConfig& cfg, double sd_level, int horizon_days,
                                    std::uint64_t seed)
{
    cfg.validate();
    Simulator sim(pop, cfg.epidemic, seed,
                  make_vaccination_plan(pop, cfg.vaccination, cfg.epidemic.vaccines, seed));
    const double p = cfg.seeding_p > 0.0 ? cfg.seeding_p : 1.0 / static_cast<double>(pop.size());
    OutbreakOutcome out;
    bool seeding = true;
    for (int day = 0; day < horizon_days; ++day) {
        if (seeding && (sim.cumulative_detected() >= cfg.tr_threshold || day >= cfg.max_seeding_days)) {
            seeding = false;
        }
        if (seeding) {
            sim.seed_random(static_cast<int>(sim.draw_seed_count(p)));
        }
        if (out.sd_start_step < 0 && sim.cumulative_detected() >= cfg.sd_trigger_threshold) {
            sim.set_sd_level(sd_level);
            out.sd_start_step = sim.current_step();
        }
        const int before = sim.cumulative_detected();
        sim.run(kStepsPerDay);
        out.peak_incidence = std::max(out.peak_incidence, static_cast<double>(sim.cumulative_detected() - before));
    }
    out.total_fatalities = sim.cumulative_deaths();
    out.total_infections = sim.cumulative_infections();
    return out;
}

inline std::uint64_t sweep_replicate_seed(std::uint64_t master, int rep)
{
    return derive_seed(master, {0x5E45ull, static_cast<std::uint64_t>(rep)});
}

struct SweepCell {
    double value = 0.0;
    double sd_level = 0.0;
    std::vector<OutbreakOutcome> outcomes;

    std::vector<double> peaks() const
    {
        std::vector<double> v;
        for (const auto& o : outcomes) {
            v.push_back(o.peak_incidence);
        }
        return v;
    }
    std::vector<double> fatalities() const
    {
        std::vector<double> v;
        for (const auto& o : outcomes) {
            v.push_back(o.total_fatalities);
        }
        return v;
    }
};

struct SweepTable {
    SweepSpec spec;
    std::vector<SweepCell> cells;  // sd level major, value minor

    const SweepCell& cell(double sd_level, double value) const
    {
        for (const auto& c : cells) {
            if (c.sd_level == sd_level && c.value == value) {
                return c;
            }
        }
        throw std::out_of_range("sweep: no such cell");
    }
};

/// Every (value, SD level) cell uses the same replicate seeds, so cells are
/// compared on common random numbers.
inline SweepTable run_sensitivity(const Population& pop, const EnvConfig& base, const SweepSpec& spec,
                                  std::uint64_t master_seed)
{
    if (spec.values.empty() || spec.sd_levels.empty() || spec.reps < 1 || spec.horizon_days < 1) {
        throw std::invalid_argument("sweep: need values, SD levels, reps >= 1 and horizon >= 1");
    }
    SweepTable table;
    table.spec = spec;
    for (double sd : spec.sd_levels) {
        for (double v : spec.values) {
            table.cells.push_back({v, sd, {}});
        }
    }
    std::vector<EnvConfig> configs;
    for (const auto& c : table.cells) {
        EnvConfig cfg = base;
        apply_sweep_value(cfg, spec.param, c.value);
        cfg.validate();
        configs.push_back(std::move(cfg));
    }
    const std::size_t reps = static_cast<std::size_t>(spec.reps);
    const auto results = parallel_map(table.cells.size() * reps, [&](std::size_t task) {
        const std::size_t c = task / reps;
        const int r = static_cast<int>(task % reps);
        return run_outbreak(pop, configs[c], table.cells[c].sd_level, spec.horizon_days,
                            sweep_replicate_seed(master_seed, r));
    });
    for (std::size_t c = 0; c < table.cells.size(); ++c) {
        table.cells[c].outcomes.assign(results.begin() + static_cast<std::ptrdiff_t>(c * reps),
                                       results.begin() + static_cast<std::ptrdiff_t>((c + 1) * reps));
    }
    return table;
}

inline void write_sweep_csv(std::ostream& out, const SweepTable& t)
{
    out << "parameter,value,sd_level,replicate,peak_incidence,total_fatalities,total_infections,sd_start_step\n";
    char buf[256];
    for (const auto& c : t.cells) {
        for (std::size_t r = 0; r < c.outcomes.size(); ++r) {
            const auto& o = c.outcomes[r];
            std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%zu,%.17g,%.17g,%d,%d\n", to_string(t.spec.param).c_str(),
                          c.value, c.sd_level, r, o.peak_incidence, o.total_fatalities, o.total_infections,
                          o.sd_start_step);
            out << buf;
        }
    }
}

inline void write_sweep_summary_csv(std::ostream& out, const SweepTable& t)
{
    out << "parameter,value,sd_level,peak_q1,peak_median,peak_q3,fatalities_q1,fatalities_median,fatalities_q3\n";
    char buf[256];
    for (const auto& c : t.cells) {
        const auto p = stats::quartiles(c.peaks());
        const auto f = stats::quartiles(c.fatalities());
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      to_string(t.spec.param).c_str(), c.value, c.sd_level, p.q1, p.median, p.q3, f.q1, f.median,
                      f.q3);
        out << buf;
    }
}

/// Median fatalities are non-decreasing along the grid at every SD level.
inline bool median_fatalities_non_decreasing(const SweepTable& t)
{
    for (double sd : t.spec.sd_levels) {
        double prev = -1.0;
        for (double v : t.spec.values) {
            const double m = stats::median(t.cell(sd, v).fatalities());
            if (m < prev) {
                return false;
            }
            prev = m;
        }
    }
    return true;
}

/// Kendall tau between the swept value and an output, per SD level.
inline std::vector<stats::KendallTest> sweep_trend(const SweepTable& t, bool fatalities)
{
    std::vector<stats::KendallTest> out;
    for (double sd : t.spec.sd_levels) {
        std::vector<double> x, y;
        for (double v : t.spec.values) {
            const auto ys = fatalities ? t.cell(sd, v).fatalities() : t.cell(sd, v).peaks();
            for (double o : ys) {
                x.push_back(v);
                y.push_back(o);
            }
        }
        out.push_back(stats::kendall_tau(x, y));
    }
    return out;
}

// ---------------------------------------------------------------------------
// NHB grid

inline const std::vector<double>& grid_sd_levels()
{
    static const std::vector<double> v{0.3, 0.5, 0.7};
    return v;
}

inline const std::vector<double>& grid_lambdas()
{
    static const std::vector<double> v{1e4, 5e4, 1e5};
    return v;
}

struct GridCell {
    double sd_max = 0.0;
    double lambda = 0.0;
    bool present = false;
    double mean = 0.0;
    double standard_error = 0.0;
    int episodes = 0;
};

/// Rows are λ (increasing), columns SD_max (increasing).
struct NhbGrid {
    std::vector<GridCell> cells;

    const GridCell* find(double sd_max, double lambda) const
    {
        for (const auto& c : cells) {
            if (c.sd_max == sd_max && c.lambda == lambda) {
                return &c;
            }
        }
        return nullptr;
    }
};

/// Evaluates the adaptive policy of each cell; `checkpoint_for` returns
/// null for cells without a trained policy, which are reported absent.
inline NhbGrid nhb_grid(const std::shared_ptr<const Population>& pop, const EnvConfig& base,
                        const std::function<std::shared_ptr<const NullBaseline>(const EnvConfig&)>& baseline_for,
                        const std::function<std::shared_ptr<const PolicyParams>(double, double)>& checkpoint_for,
                        int episodes, std::uint64_t master_seed)
{
    NhbGrid grid;
    for (double lambda : grid_lambdas()) {
        for (double sd_max : grid_sd_levels()) {
            GridCell cell;
            cell.sd_max = sd_max;
            cell.lambda = lambda;
            const auto params = checkpoint_for(sd_max, lambda);
            if (params) {
                EnvConfig cfg = base;
                cfg.sd_max = sd_max;
                cfg.econ.lambda = lambda;
                const auto eval =
                    run_policy_eval(pop, cfg, baseline_for(cfg), PolicySpec::adaptive(params), episodes, master_seed);
                const auto nhb = eval.nhb();
                cell.present = true;
                cell.mean = stats::mean(nhb);
                cell.standard_error = stats::standard_error(nhb);
                cell.episodes = episodes;
            } else {
                logger()->warn("grid: no checkpoint for SD_max {} lambda {}", sd_max, lambda);
            }
            grid.cells.push_back(cell);
        }
    }
    return grid;
}

/// Non-decreasing along SD_max within each λ row and along λ within each
/// SD_max column, allowing `tolerance` combined standard errors.
inline bool grid_gradient_holds(const NhbGrid& g, double tolerance = 2.0)
{
    auto ok = [&](const GridCell* a, const GridCell* b) {
        if (!a || !b || !a->present || !b->present) {
            return false;
        }
        const double se = std::sqrt(a->standard_error * a->standard_error + b->standard_error * b->standard_error);
        return b->mean >= a->mean - tolerance * se;
    };
    const auto& sds = grid_sd_levels();
    const auto& ls = grid_lambdas();
    for (double l : ls) {
        for (std::size_t k = 0; k + 1 < sds.size(); ++k) {
            if (!ok(g.find(sds[k], l), g.find(sds[k + 1], l))) {
                return false;
            }
        }
    }
    for (double s : sds) {
        for (std::size_t k = 0; k + 1 < ls.size(); ++k) {
            if (!ok(g.find(s, ls[k]), g.find(s, ls[k + 1]))) {
                return false;
            }
        }
    }
    return true;
}

inline void write_grid_csv(std::ostream& out, const NhbGrid& g)
{
    out << "sd_max,lambda,present,mean_nhb,standard_error,episodes\n";
    char buf[192];
    for (const auto& c : g.cells) {
        if (c.present) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,1,%.17g,%.17g,%d\n", c.sd_max, c.lambda, c.mean,
                          c.standard_error, c.episodes);
        } else {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,0,,,0\n", c.sd_max, c.lambda);
        }
        out << buf;
    }
}

}  // namespace epinet
