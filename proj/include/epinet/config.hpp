#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinet/environment.hpp"
#include "epinet/interventions.hpp"
#include "epinet/population.hpp"
#include "epinet/ppo.hpp"
#include "epinet/vaccination.hpp"

namespace epinet {

/// Raised for any malformed configuration document; the message names the
/// offending key path.
class ConfigError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

enum class ScenarioMode : std::uint8_t { Optimisation, ValidationStyle };

struct SensitivitySettings {
    int horizon_days = 114;
    int reps = 30;
    std::vector<double> sd_levels{0.3, 0.4, 0.5};
};

struct BaselineSettings {
    int episodes = 100;
    std::uint64_t seed = 0xBA5E11Eull;
    /// Precomputed baseline JSON; empty means build on demand.
    std::string path;
};

struct ScenarioConfig {
    ScenarioMode mode = ScenarioMode::Optimisation;
    PopulationConfig population;
    EnvConfig env;
    BaselineSettings baseline;
    TrainConfig train;
    SensitivitySettings sensitivity;
};

/// Pre-pandemic vaccination, CI and HQ only, thresholds 5/5.
inline ScenarioConfig optimisation_preset()
{
    ScenarioConfig c;
    c.mode = ScenarioMode::Optimisation;
    c.env.epidemic.params.alpha_asymp = 0.5;
    c.env.epidemic.school_closure = false;
    c.env.vaccination.mode = RolloutMode::PrePandemic;
    c.env.vaccination.coverage = 0.85;
    c.env.tr_threshold = 5;
    c.env.sd_trigger_threshold = 5;
    return c;
}

/// Progressive vaccination, CI, HQ and school closure, thresholds 20/400.
inline ScenarioConfig validation_preset()
{
    ScenarioConfig c;
    c.mode = ScenarioMode::ValidationStyle;
    c.env.epidemic.params.alpha_asymp = 0.3;
    c.env.epidemic.school_closure = true;
    c.env.vaccination.mode = RolloutMode::Progressive;
    c.env.tr_threshold = 20;
    c.env.sd_trigger_threshold = 400;
    return c;
}

namespace detail {

template <class T>
T get_as(const nlohmann::json& v, const std::string& path)
{
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path + ": wrong type (got " + std::string(v.type_name()) + ")");
    }
}

inline void expect_object(const nlohmann::json& v, const std::string& path)
{
    if (!v.is_object()) {
        throw ConfigError(path + ": expected an object");
    }
}

[[noreturn]] inline void unknown_key(const std::string& path, const std::string& key)
{
    throw ConfigError(path + ": unknown key '" + key + "'");
}

inline RolloutMode rollout_mode_from_string(const std::string& s, const std::string& path)
{
    if (s == "none") {
        return RolloutMode::None;
    }
    if (s == "prepandemic") {
        return RolloutMode::PrePandemic;
    }
    if (s == "progressive") {
        return RolloutMode::Progressive;
    }
    throw ConfigError(path + ": expected one of none, prepandemic, progressive");
}

inline void apply_population(const nlohmann::json& j, PopulationConfig& p, const std::string& path)
{
    expect_object(j, path);
    for (const auto& [k, v] : j.items()) {
        const std::string at = path + "." + k;
        if (k == "n_agents") p.n_agents = get_as<int>(v, at);
        else if (k == "seed") p.rng_seed = get_as<std::uint64_t>(v, at);
        else if (k == "age_distribution") p.age_distribution = get_as<std::vector<double>>(v, at);
        else if (k == "life_expectancy_table") p.life_expectancy_table = get_as<std::vector<double>>(v, at);
        else if (k == "life_expectancy") p.default_life_expectancy = get_as<double>(v, at);
        else if (k == "household_size_distribution") {
            const auto w = get_as<std::vector<double>>(v, at);
            if (w.size() != p.household_size_distribution.size()) {
                throw ConfigError(at + ": expected 6 weights for sizes 1..6");
            }
            std::copy(w.begin(), w.end(), p.household_size_distribution.begin());
        }
        else if (k == "cluster_size") p.cluster_size = get_as<int>(v, at);
        else if (k == "workgroup_size") p.workgroup_size = get_as<int>(v, at);
        else if (k == "class_size") p.class_size = get_as<int>(v, at);
        else if (k == "classes_per_grade") p.classes_per_grade = get_as<int>(v, at);
        else if (k == "grades_per_school") p.grades_per_school = get_as<int>(v, at);
        else if (k == "neighborhood_size") p.neighborhood_size = get_as<int>(v, at);
        else if (k == "community_size") p.community_size = get_as<int>(v, at);
        else if (k == "employment_rate") p.employment_rate = get_as<double>(v, at);
        else if (k == "school_enrollment_rate") p.school_enrollment_rate = get_as<double>(v, at);
        else unknown_key(path, k);
    }
}

inline void apply_epidemic(const nlohmann::json& j, EpidemicConfig& e, const std::string& path)
{
    expect_object(j, path);
    int t_inc = e.history.incubation_steps();
    int t_inf = e.history.infectious_steps();
    for (const auto& [k, v] : j.items()) {
        const std::string at = path + "." + k;
        if (k == "kappa") e.params.kappa = get_as<double>(v, at);
        else if (k == "alpha_asymp") e.params.alpha_asymp = get_as<double>(v, at);
        else if (k == "sigma_adult") e.params.sigma_adult = get_as<double>(v, at);
        else if (k == "sigma_child") e.params.sigma_child = get_as<double>(v, at);
        else if (k == "t_inc_days") t_inc = days_to_steps(get_as<int>(v, at));
        else if (k == "t_inf_days") t_inf = days_to_steps(get_as<int>(v, at));
        else if (k == "detect_symptomatic") e.detect_symptomatic = get_as<double>(v, at);
        else if (k == "detect_asymptomatic") e.detect_asymptomatic = get_as<double>(v, at);
        else if (k == "hq_days") e.hq_days = get_as<int>(v, at);
        else if (k == "case_isolation") e.case_isolation = get_as<bool>(v, at);
        else if (k == "home_quarantine") e.home_quarantine = get_as<bool>(v, at);
        else if (k == "school_closure") e.school_closure = get_as<bool>(v, at);
        else if (k == "npi_table") {
            try {
                e.npis = npi_table_from_json(v, e.npis);
            } catch (const std::exception& ex) {
                throw ConfigError(at + ": " + ex.what());
            }
        }
        else if (k == "vaccines") {
            expect_object(v, at);
            for (const auto& [brand, doc] : v.items()) {
                try {
                    if (brand == "pfizer") e.vaccines.pfizer = vaccine_profile_from_json(doc, e.vaccines.pfizer);
                    else if (brand == "az") e.vaccines.az = vaccine_profile_from_json(doc, e.vaccines.az);
                    else unknown_key(at, brand);
                } catch (const ConfigError&) {
                    throw;
                } catch (const std::exception& ex) {
                    throw ConfigError(at + "." + brand + ": " + ex.what());
                }
            }
        }
        else unknown_key(path, k);
    }
    if (t_inc != e.history.incubation_steps() || t_inf != e.history.infectious_steps()) {
        try {
            e.history = NaturalHistory(e.history.latent_steps(), t_inc, t_inf);
        } catch (const std::exception& ex) {
            throw ConfigError(path + ": " + ex.what());
        }
    }
}

inline void apply_vaccination(const nlohmann::json& j, VaccinationSetup& s, const std::string& path)
{
    expect_object(j, path);
    for (const auto& [k, v] : j.items()) {
        const std::string at = path + "." + k;
        if (k == "mode") s.mode = rollout_mode_from_string(get_as<std::string>(v, at), at);
        else if (k == "coverage") s.coverage = get_as<double>(v, at);
        else if (k == "schedule") {
            try {
                s.schedule = read_dose_schedule_file(get_as<std::string>(v, at));
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& ex) {
                throw ConfigError(at + ": " + ex.what());
            }
        }
        else unknown_key(path, k);
    }
    if (!(s.coverage >= 0.0 && s.coverage <= 1.0)) {
        throw ConfigError(path + ".coverage: must lie in [0,1]");
    }
}

inline void apply_econ(const nlohmann::json& j, EconConfig& e, const std::string& path)
{
    expect_object(j, path);
    for (const auto& [k, v] : j.items()) {
        const std::string at = path + "." + k;
        if (k == "lambda") e.lambda = get_as<double>(v, at);
        else if (k == "national_weekly_full_sd_cost") e.national_weekly_full_sd_cost = get_as<double>(v, at);
        else if (k == "reference_population") e.reference_population = get_as<double>(v, at);
        else unknown_key(path, k);
    }
}

inline void apply_env(const nlohmann::json& j, EnvConfig& e, const std::string& path)
{
    expect_object(j, path);
    for (const auto& [k, v] : j.items()) {
        const std::string at = path + "." + k;
        if (k == "tr_threshold") e.tr_threshold = get_as<int>(v, at);
        else if (k == "sd_trigger_threshold") e.sd_trigger_threshold = get_as<int>(v, at);
        else if (k == "n_decisions") e.n_decisions = get_as<int>(v, at);
        else if (k == "decision_interval_days") e.decision_interval_days = get_as<int>(v, at);
        else if (k == "max_seeding_days") e.max_seeding_days = get_as<int>(v, at);
        else if (k == "seeding_p") e.seeding_p = get_as<double>(v, at);
        else if (k == "sd_max") e.sd_max = get_as<double>(v, at);
        else if (k == "strict_actions") e.strict_actions = get_as<bool>(v, at);
        else unknown_key(path, k);
    }
}

inline void apply_baseline(const nlohmann::json& j, BaselineSettings& b, const std::string& path)
{
    expect_object(j, path);
    for (const auto& [k, v] : j.items()) {
        const std::string at = path + "." + k;
        if (k == "episodes") b.episodes = get_as<int>(v, at);
        else if (k == "seed") b.seed = get_as<std::uint64_t>(v, at);
        else if (k == "path") b.path = get_as<std::string>(v, at);
        else unknown_key(path, k);
    }
    if (b.episodes < 1) {
        throw ConfigError(path + ".episodes: must be >= 1");
    }
}

inline void apply_sensitivity(const nlohmann::json& j, SensitivitySettings& s, const std::string& path)
{
    expect_object(j, path);
    for (const auto& [k, v] : j.items()) {
        const std::string at = path + "." + k;
        if (k == "horizon_days") s.horizon_days = get_as<int>(v, at);
        else if (k == "reps") s.reps = get_as<int>(v, at);
        else if (k == "sd_levels") s.sd_levels = get_as<std::vector<double>>(v, at);
        else unknown_key(path, k);
    }
    if (s.horizon_days < 1 || s.reps < 1) {
        throw ConfigError(path + ": horizon_days and reps must be >= 1");
    }
    for (double l : s.sd_levels) {
        if (!(l >= 0.0 && l <= 1.0)) {
            throw ConfigError(path + ".sd_levels: levels must lie in [0,1]");
        }
    }
}

}  // namespace detail

/// Reads a scenario document: "mode" selects the preset, the remaining
/// sections overlay it. Unknown keys and type mismatches are errors.
inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j)
{
    using namespace detail;
    expect_object(j, "config");
    ScenarioConfig c = optimisation_preset();
    if (j.contains("mode")) {
        const auto mode = get_as<std::string>(j.at("mode"), "config.mode");
        if (mode == "validation") {
            c = validation_preset();
        } else if (mode != "optimisation") {
            throw ConfigError("config.mode: expected optimisation or validation");
        }
    }
    for (const auto& [k, v] : j.items()) {
        const std::string at = "config." + k;
        if (k == "mode") continue;
        else if (k == "population") apply_population(v, c.population, at);
        else if (k == "epidemic") apply_epidemic(v, c.env.epidemic, at);
        else if (k == "vaccination") apply_vaccination(v, c.env.vaccination, at);
        else if (k == "econ") apply_econ(v, c.env.econ, at);
        else if (k == "env") apply_env(v, c.env, at);
        else if (k == "baseline") apply_baseline(v, c.baseline, at);
        else if (k == "sensitivity") apply_sensitivity(v, c.sensitivity, at);
        else if (k == "train") {
            try {
                expect_object(v, at);
                c.train = train_config_from_json(v, c.train);
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& ex) {
                throw ConfigError(at + ": " + ex.what());
            }
        }
        else unknown_key("config", k);
    }
    try {
        c.population.validate();
        EnvConfig probe = c.env;
        probe.econ.town_population = static_cast<double>(c.population.n_agents);
        probe.validate();
    } catch (const std::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
    return c;
}

inline ScenarioConfig load_scenario_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& ex) {
        throw ConfigError("config: " + path + " is not valid JSON: " + ex.what());
    }
    return scenario_config_from_json(j);
}

inline std::string to_string(ScenarioMode m) { return m == ScenarioMode::Optimisation ? "optimisation" : "validation"; }

inline std::string to_string(RolloutMode m)
{
    switch (m) {
    case RolloutMode::None: return "none";
    case RolloutMode::PrePandemic: return "prepandemic";
    case RolloutMode::Progressive: return "progressive";
    }
    return "none";
}

/// Echo of the effective configuration for output manifests.
inline nlohmann::json scenario_config_to_json(const ScenarioConfig& c)
{
    const auto& e = c.env.epidemic;
    const auto& p = c.population;
    return {{"mode", to_string(c.mode)},
            {"population",
             {{"n_agents", p.n_agents},
              {"seed", p.rng_seed},
              {"cluster_size", p.cluster_size},
              {"workgroup_size", p.workgroup_size},
              {"class_size", p.class_size},
              {"classes_per_grade", p.classes_per_grade},
              {"grades_per_school", p.grades_per_school},
              {"neighborhood_size", p.neighborhood_size},
              {"community_size", p.community_size},
              {"employment_rate", p.employment_rate},
              {"school_enrollment_rate", p.school_enrollment_rate},
              {"life_expectancy", p.default_life_expectancy}}},
            {"epidemic",
             {{"kappa", e.params.kappa},
              {"alpha_asymp", e.params.alpha_asymp},
              {"sigma_adult", e.params.sigma_adult},
              {"sigma_child", e.params.sigma_child},
              {"t_inc_days", e.history.incubation_steps() / kStepsPerDay},
              {"t_inf_days", e.history.infectious_steps() / kStepsPerDay},
              {"detect_symptomatic", e.detect_symptomatic},
              {"detect_asymptomatic", e.detect_asymptomatic},
              {"hq_days", e.hq_days},
              {"case_isolation", e.case_isolation},
              {"home_quarantine", e.home_quarantine},
              {"school_closure", e.school_closure},
              {"npi_table", npi_table_to_json(e.npis)}}},
            {"vaccination",
             {{"mode", to_string(c.env.vaccination.mode)},
              {"coverage", c.env.vaccination.coverage}}},
            {"econ",
             {{"lambda", c.env.econ.lambda},
              {"national_weekly_full_sd_cost", c.env.econ.national_weekly_full_sd_cost},
              {"reference_population", c.env.econ.reference_population}}},
            {"env",
             {{"tr_threshold", c.env.tr_threshold},
              {"sd_trigger_threshold", c.env.sd_trigger_threshold},
              {"n_decisions", c.env.n_decisions},
              {"decision_interval_days", c.env.decision_interval_days},
              {"max_seeding_days", c.env.max_seeding_days},
              {"seeding_p", c.env.seeding_p},
              {"sd_max", c.env.sd_max},
              {"strict_actions", c.env.strict_actions}}},
            {"baseline", {{"episodes", c.baseline.episodes}, {"seed", c.baseline.seed}, {"path", c.baseline.path}}},
            {"train", train_config_to_json(c.train)},
            {"sensitivity",
             {{"horizon_days", c.sensitivity.horizon_days},
              {"reps", c.sensitivity.reps},
              {"sd_levels", c.sensitivity.sd_levels}}}};
}

}  // namespace epinet
