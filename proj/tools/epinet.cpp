#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "epinet/config.hpp"
#include "epinet/environment.hpp"
#include "epinet/logging.hpp"
#include "epinet/population.hpp"
#include "epinet/ppo.hpp"
#include "epinet/scenario.hpp"
#include "epinet/service.hpp"
#include "epinet/stats.hpp"

namespace fs = std::filesystem;
using namespace epinet;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
    std::string population;
    std::string checkpoint;
    int episodes = 0;
    int reps = 0;
};

ScenarioConfig load_config(const Common& c)
{
    return c.config.empty() ? optimisation_preset() : load_scenario_config(c.config);
}

std::shared_ptr<const Population> load_population(const Common& c, const ScenarioConfig& sc)
{
    if (!c.population.empty()) {
        std::ifstream in(c.population);
        if (!in) {
            throw std::runtime_error("cannot open population " + c.population);
        }
        return std::make_shared<const Population>(population_from_json(nlohmann::json::parse(in)));
    }
    return std::make_shared<const Population>(generate_population(sc.population));
}

std::shared_ptr<const NullBaseline> load_baseline(const std::shared_ptr<const Population>& pop,
                                                  const ScenarioConfig& sc)
{
    if (!sc.baseline.path.empty()) {
        std::ifstream in(sc.baseline.path);
        if (!in) {
            throw ConfigError("config.baseline.path: cannot open " + sc.baseline.path);
        }
        return std::make_shared<const NullBaseline>(baseline_from_json(nlohmann::json::parse(in)));
    }
    logger()->info("building null baseline: K = {}", sc.baseline.episodes);
    return std::make_shared<const NullBaseline>(build_null_baseline(pop, sc.env, sc.baseline.episodes, sc.baseline.seed));
}

fs::path out_dir(const Common& c)
{
    const fs::path p = c.out.empty() ? fs::path(".") : fs::path(c.out);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + p.string());
    }
    out << text;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

std::string fmt_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json manifest(const std::string& command, const Common& c, const ScenarioConfig& sc)
{
    return {{"command", command},
            {"seed", c.seed},
            {"population", c.population.empty() ? nlohmann::json("generated") : nlohmann::json(c.population)},
            {"config", scenario_config_to_json(sc)}};
}

Checkpoint read_checkpoint(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path);
    }
    return checkpoint_from_json(nlohmann::json::parse(in));
}

// ---------------------------------------------------------------------------

int cmd_generate_population(const Common& c, bool seed_given)
{
    ScenarioConfig sc = load_config(c);
    if (seed_given) {
        sc.population.rng_seed = c.seed;
    }
    const Population pop = generate_population(sc.population);
    const fs::path dir = out_dir(c);
    write_file(dir / "population.json", population_to_json(pop).dump() + "\n");
    std::printf("population: %zu agents, %zu contexts -> %s\n", pop.size(), pop.contexts.size(),
                (dir / "population.json").string().c_str());
    return 0;
}

int cmd_calibrate_r0(const Common& c)
{
    const ScenarioConfig sc = load_config(c);
    const auto pop = load_population(c, sc);
    const int reps = c.reps > 0 ? c.reps : 500;
    const R0Estimate est = estimate_r0(*pop, sc.env.epidemic, reps, c.seed);
    std::printf("R0 %.3f (95%% CI %.3f-%.3f) reps %d\n", est.mean, est.low, est.high, reps);
    if (!c.out.empty()) {
        const fs::path dir = out_dir(c);
        nlohmann::json j = manifest("calibrate-r0", c, sc);
        j["reps"] = reps;
        j["r0"] = {{"mean", est.mean}, {"low", est.low}, {"high", est.high}, {"standard_error", est.standard_error}};
        write_json(dir / "r0.json", j);
        std::ostringstream csv;
        csv << "replicate,secondary_cases\n";
        for (std::size_t k = 0; k < est.secondaries.size(); ++k) {
            csv << k << ',' << est.secondaries[k] << '\n';
        }
        write_file(dir / "r0_replicates.csv", csv.str());
    }
    return 0;
}

int cmd_baseline(const Common& c)
{
    ScenarioConfig sc = load_config(c);
    if (c.episodes > 0) {
        sc.baseline.episodes = c.episodes;
    }
    sc.baseline.seed = c.seed;
    sc.baseline.path.clear();
    const auto pop = load_population(c, sc);
    const auto b = load_baseline(pop, sc);
    const fs::path dir = out_dir(c);
    write_json(dir / "baseline.json", baseline_to_json(*b));
    std::printf("null baseline: K = %d, mean total loss %.4f DALY -> %s\n", b->episodes, b->total(),
                (dir / "baseline.json").string().c_str());
    return 0;
}

TrainResult train_cell(const std::shared_ptr<const Population>& pop, const ScenarioConfig& sc,
                       const std::shared_ptr<const NullBaseline>& baseline, std::uint64_t seed)
{
    const EnvConfig cfg = sc.env;
    return train([&] { return std::make_unique<EpidemicPolicyEnv>(pop, cfg, baseline); }, sc.train, seed, cfg.sd_max,
                 [](const TrainProgress& p) {
                     logger()->info("train: {} episodes, moving average {:.4f}, value loss {:.4f}", p.episodes,
                                    p.moving_average, p.stats.value_loss);
                 });
}

void write_training(const fs::path& dir, const std::string& stem, const TrainResult& r, const ScenarioConfig& sc,
                    std::uint64_t seed)
{
    write_json(dir / (stem + ".json"), checkpoint_to_json(make_checkpoint(r, sc.train, sc.env.econ.lambda, seed)));
    std::ostringstream curve;
    write_learning_curve(curve, r);
    write_file(dir / (stem + "_learning_curve.csv"), curve.str());
}

int cmd_train(const Common& c, std::optional<double> sd_max, std::optional<double> lambda)
{
    ScenarioConfig sc = load_config(c);
    if (sd_max) {
        sc.env.sd_max = *sd_max;
    }
    if (lambda) {
        sc.env.econ.lambda = *lambda;
    }
    if (c.episodes > 0) {
        sc.train.total_episodes = c.episodes;
        sc.train.min_episodes = std::min(sc.train.min_episodes, c.episodes);
    }
    sc.env.validate();
    const auto pop = load_population(c, sc);
    const auto baseline = load_baseline(pop, sc);
    const TrainResult r = train_cell(pop, sc, baseline, c.seed);
    const fs::path dir = out_dir(c);
    write_training(dir, "checkpoint", r, sc, c.seed);
    nlohmann::json m = manifest("train", c, sc);
    m["episodes"] = r.episodes;
    m["converged"] = r.converged;
    m["final_moving_average"] = r.moving_average.empty() ? 0.0 : r.moving_average.back();
    write_json(dir / "train_manifest.json", m);
    std::printf("trained %d episodes (converged: %s), final moving average %.4f -> %s\n", r.episodes,
                r.converged ? "yes" : "no", m["final_moving_average"].get<double>(),
                (dir / "checkpoint.json").string().c_str());
    return 0;
}

int cmd_evaluate(const Common& c, const std::string& policy, std::optional<double> level,
                 std::optional<double> sd_max, std::optional<double> lambda)
{
    ScenarioConfig sc = load_config(c);
    PolicySpec spec;
    spec.kind = policy_kind_from_string(policy);
    spec.level = level;
    if (spec.kind == PolicyKind::Adaptive) {
        if (c.checkpoint.empty()) {
            throw std::invalid_argument("--policy adaptive requires --checkpoint");
        }
        const Checkpoint ck = read_checkpoint(c.checkpoint);
        spec.params = std::make_shared<const PolicyParams>(ck.params);
        if (!sd_max) {
            sc.env.sd_max = ck.params.sd_max;
        }
        if (!lambda) {
            sc.env.econ.lambda = ck.lambda;
        }
    }
    if (sd_max) {
        sc.env.sd_max = *sd_max;
    }
    if (lambda) {
        sc.env.econ.lambda = *lambda;
    }
    const int episodes = c.episodes > 0 ? c.episodes : 100;
    const auto pop = load_population(c, sc);
    const auto baseline = load_baseline(pop, sc);
    const PolicyEvaluation eval = run_policy_eval(pop, sc.env, baseline, spec, episodes, c.seed);
    const fs::path dir = out_dir(c);
    std::ostringstream summary;
    summary << "episode,seed,cum_nhb,total_cost,effect\n";
    for (std::size_t e = 0; e < eval.episodes.size(); ++e) {
        const auto& ep = eval.episodes[e];
        char stem[64];
        std::snprintf(stem, sizeof stem, "episode_%04zu", e);
        std::ostringstream acc;
        ep.account.write_csv(acc);
        write_file(dir / (std::string(stem) + "_account.csv"), acc.str());
        std::ostringstream trace;
        for (const auto& r : ep.history) {
            trace << to_json(r).dump() << '\n';
        }
        write_file(dir / (std::string(stem) + "_trace.jsonl"), trace.str());
        summary << e << ',' << ep.seed << ',' << fmt_double(ep.cum_nhb) << ',' << fmt_double(ep.total_cost) << ','
                << fmt_double(ep.effect) << '\n';
    }
    write_file(dir / "summary.csv", summary.str());
    std::ostringstream profile;
    profile << "week,mean_sd_level\n";
    const auto prof = eval.mean_profile();
    for (std::size_t t = 0; t < prof.size(); ++t) {
        profile << t << ',' << fmt_double(prof[t]) << '\n';
    }
    write_file(dir / "sd_profile.csv", profile.str());
    const auto nhb = eval.nhb();
    nlohmann::json m = manifest("evaluate", c, sc);
    m["policy"] = policy;
    m["episodes"] = episodes;
    m["mean_nhb"] = stats::mean(nhb);
    m["standard_error"] = nhb.size() > 1 ? stats::standard_error(nhb) : 0.0;
    write_json(dir / "evaluate_manifest.json", m);
    std::printf("%s policy: mean cumulative NHB %.4f DALY over %d episodes\n", policy.c_str(), stats::mean(nhb),
                episodes);
    return 0;
}

std::vector<double> parse_values(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) {
            throw std::invalid_argument("bad number in list: " + item);
        }
        out.push_back(v);
    }
    return out;
}

int cmd_sweep(const Common& c, const std::string& param, const std::string& values)
{
    ScenarioConfig sc = c.config.empty() ? validation_preset() : load_config(c);
    SweepSpec spec;
    spec.param = sweep_param_from_string(param);
    spec.values = values.empty() ? default_grid(spec.param) : parse_values(values);
    spec.sd_levels = sc.sensitivity.sd_levels;
    spec.reps = c.reps > 0 ? c.reps : sc.sensitivity.reps;
    spec.horizon_days = sc.sensitivity.horizon_days;
    const auto pop = load_population(c, sc);
    const SweepTable t = run_sensitivity(*pop, sc.env, spec, c.seed);
    const fs::path dir = out_dir(c);
    std::ostringstream raw, summary;
    write_sweep_csv(raw, t);
    write_sweep_summary_csv(summary, t);
    write_file(dir / "sweep.csv", raw.str());
    write_file(dir / "sweep_summary.csv", summary.str());
    nlohmann::json m = manifest("sweep", c, sc);
    m["parameter"] = param;
    m["values"] = spec.values;
    m["reps"] = spec.reps;
    write_json(dir / "sweep_manifest.json", m);
    std::cout << summary.str();
    return 0;
}

int cmd_grid(const Common& c, bool train_missing)
{
    ScenarioConfig sc = load_config(c);
    if (c.episodes > 0) {
        sc.train.total_episodes = c.episodes;
        sc.train.min_episodes = std::min(sc.train.min_episodes, c.episodes);
    }
    const auto pop = load_population(c, sc);
    const auto baseline = load_baseline(pop, sc);
    const fs::path dir = out_dir(c);
    std::vector<Checkpoint> checkpoints;
    if (!c.checkpoint.empty()) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(c.checkpoint)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                checkpoints.push_back(read_checkpoint(f.string()));
            } catch (const std::exception& e) {
                logger()->debug("grid: skipping {}: {}", f.string(), e.what());
            }
        }
    }
    auto lookup = [&](double sd_max, double lambda) -> const Checkpoint* {
        for (const auto& ck : checkpoints) {
            if (ck.params.sd_max == sd_max && ck.lambda == lambda) {
                return &ck;
            }
        }
        return nullptr;
    };
    if (train_missing) {
        for (double lambda : grid_lambdas()) {
            for (double sd_max : grid_sd_levels()) {
                if (lookup(sd_max, lambda)) {
                    continue;
                }
                ScenarioConfig cell = sc;
                cell.env.sd_max = sd_max;
                cell.env.econ.lambda = lambda;
                const std::uint64_t seed = derive_seed(c.seed, {0x6121ull, static_cast<std::uint64_t>(sd_max * 10),
                                                                static_cast<std::uint64_t>(lambda)});
                logger()->info("grid: training SD_max {} lambda {}", sd_max, lambda);
                const TrainResult r = train_cell(pop, cell, baseline, seed);
                char stem[64];
                std::snprintf(stem, sizeof stem, "policy_sd%02d_wtp%06d", static_cast<int>(std::lround(sd_max * 10)),
                              static_cast<int>(lambda));
                write_training(dir, stem, r, cell, seed);
                checkpoints.push_back(make_checkpoint(r, cell.train, lambda, seed));
            }
        }
    }
    const int episodes = 100;
    const NhbGrid grid = nhb_grid(
        pop, sc.env, [&](const EnvConfig&) { return baseline; },
        [&](double sd_max, double lambda) -> std::shared_ptr<const PolicyParams> {
            const Checkpoint* ck = lookup(sd_max, lambda);
            return ck ? std::make_shared<const PolicyParams>(ck->params) : nullptr;
        },
        episodes, c.seed);
    std::ostringstream csv;
    write_grid_csv(csv, grid);
    write_file(dir / "grid.csv", csv.str());
    nlohmann::json m = manifest("grid", c, sc);
    m["gradient_holds"] = grid_gradient_holds(grid);
    write_json(dir / "grid_manifest.json", m);
    std::cout << csv.str();
    return 0;
}

int cmd_npi_table(const Common& c)
{
    const ScenarioConfig sc = load_config(c);
    const std::string text = npi_table_to_json(sc.env.epidemic.npis).dump(2) + "\n";
    std::cout << text;
    if (!c.out.empty()) {
        write_file(out_dir(c) / "npi_table.json", text);
    }
    return 0;
}

httplib::Server* g_server = nullptr;

void on_signal(int)
{
    if (g_server) {
        g_server->stop();
    }
}

int cmd_serve(const Common& c, const std::string& bind)
{
    const ScenarioConfig sc = load_config(c);
    const auto pop = load_population(c, sc);
    ServiceOptions opts;
    opts.base = sc;
    opts.checkpoint_dir = c.checkpoint;
    opts.seed = c.seed;
    if (!c.out.empty()) {
        opts.trace_dir = out_dir(c).string();
    }
    SessionManager mgr(pop, opts);
    httplib::Server server;
    register_routes(server, mgr);
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("--bind expects host:port");
    }
    const std::string host = bind.substr(0, colon);
    const int port = std::stoi(bind.substr(colon + 1));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::printf("serving on http://%s:%d (%zu policies loaded)\n", host.c_str(), port, mgr.policies().size());
    std::fflush(stdout);
    if (!server.listen(host, port)) {
        throw std::runtime_error("cannot bind " + bind);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Agent-based COVID-19 simulator with NHB economics and PPO policy search"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&c](CLI::App* sub) {
        sub->add_option("--config", c.config, "Scenario JSON");
        sub->add_option("--seed", c.seed, "Master seed");
        sub->add_option("--out", c.out, "Output directory");
        sub->add_option("--population", c.population, "Population JSON (default: generate from config)");
    };

    auto* gen = app.add_subcommand("generate-population", "Write a synthetic population");
    add_common(gen);

    auto* r0 = app.add_subcommand("calibrate-r0", "Estimate R0 from attack-rate-weighted index cases");
    add_common(r0);
    r0->add_option("--reps", c.reps, "Index-case replicates (default 500)");

    auto* base = app.add_subcommand("baseline", "Build the zero-SD null baseline");
    add_common(base);
    base->add_option("--episodes", c.episodes, "Ensemble size K");

    std::optional<double> sd_max, lambda, level;
    auto* tr = app.add_subcommand("train", "Train an adaptive SD policy with PPO");
    add_common(tr);
    tr->add_option("--episodes", c.episodes, "Episode cap");
    tr->add_option("--sd-max", sd_max, "SD_max");
    tr->add_option("--lambda", lambda, "Willingness to pay, $/DALY");

    std::string policy = "zero";
    auto* ev = app.add_subcommand("evaluate", "Evaluate a policy");
    add_common(ev);
    ev->add_option("--policy", policy, "zero, fixed, random or adaptive");
    ev->add_option("--level", level, "Fixed SD level (default SD_max)");
    ev->add_option("--checkpoint", c.checkpoint, "Checkpoint for the adaptive policy");
    ev->add_option("--episodes", c.episodes, "Evaluation episodes (default 100)");
    ev->add_option("--sd-max", sd_max, "SD_max");
    ev->add_option("--lambda", lambda, "Willingness to pay, $/DALY");

    std::string param = "sd_trigger_threshold", values;
    auto* sw = app.add_subcommand("sweep", "Local sensitivity sweep (validation-style scenario)");
    add_common(sw);
    sw->add_option("--param", param, "sd_trigger_threshold, kappa, T_inf, sigma_child or alpha_asymp");
    sw->add_option("--values", values, "Comma-separated grid (default: standard range)");
    sw->add_option("--reps", c.reps, "Replicates per cell");

    bool train_missing = false;
    auto* gr = app.add_subcommand("grid", "NHB over SD_max x lambda");
    add_common(gr);
    gr->add_option("--checkpoint", c.checkpoint, "Directory of checkpoints");
    gr->add_option("--episodes", c.episodes, "Training episode cap for --train-missing");
    gr->add_flag("--train-missing", train_missing, "Train cells without a checkpoint");

    auto* npi = app.add_subcommand("npi-table", "Print the interaction-strength table");
    add_common(npi);

    std::string bind = "127.0.0.1:8080";
    auto* sv = app.add_subcommand("serve", "HTTP session service");
    add_common(sv);
    sv->add_option("--bind", bind, "host:port");
    sv->add_option("--checkpoint", c.checkpoint, "Directory of policy checkpoints");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    logger();
    try {
        if (gen->parsed()) return cmd_generate_population(c, gen->count("--seed") > 0);
        if (r0->parsed()) return cmd_calibrate_r0(c);
        if (base->parsed()) return cmd_baseline(c);
        if (tr->parsed()) return cmd_train(c, sd_max, lambda);
        if (ev->parsed()) return cmd_evaluate(c, policy, level, sd_max, lambda);
        if (sw->parsed()) return cmd_sweep(c, param, values);
        if (gr->parsed()) return cmd_grid(c, train_missing);
        if (npi->parsed()) return cmd_npi_table(c);
        if (sv->parsed()) return cmd_serve(c, bind);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
