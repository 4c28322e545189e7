#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "epinet/config.hpp"
#include "epinet/logging.hpp"
#include "epinet/ppo.hpp"
#include "epinet/scenario.hpp"
#include "epinet/stats.hpp"
#include "epinet/transmission.hpp"
#include "epinet/vaccination.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using namespace epinet;

namespace {

struct Options {
    std::string cli;
    std::string work = "acceptance_work";
    std::uint64_t seed = 20240601;
    int train_episodes = 12800;
    int grid_episodes = 6400;
    int eval_episodes = 100;
    bool strict = false;
};

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
};

class Report
{
  public:
    void add(std::string name, bool pass, std::string detail)
    {
        std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
        verdicts_.push_back({std::move(name), pass, std::move(detail)});
    }

    int failures() const
    {
        return static_cast<int>(std::count_if(verdicts_.begin(), verdicts_.end(), [](const Verdict& v) {
            return !v.pass;
        }));
    }

    std::size_t size() const { return verdicts_.size(); }

  private:
    std::vector<Verdict> verdicts_;
};

std::string format(const char* pattern, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

/// Every evaluated episode is checked for the reward/NHB identity.
struct IdentityLedger {
    int episodes = 0;
    double worst = 0.0;

    void add(const EvalEpisode& ep)
    {
        double sum = 0.0;
        for (const auto& r : ep.history) {
            sum += r.reward;
        }
        worst = std::max(worst, std::abs(sum - ep.account.pw_nhb()));
        ++episodes;
    }

    void add(const PolicyEvaluation& eval)
    {
        for (const auto& ep : eval.episodes) {
            add(ep);
        }
    }
};

struct Context {
    Options opt;
    ScenarioConfig sc = optimisation_preset();
    std::shared_ptr<const Population> pop;
    std::shared_ptr<const NullBaseline> baseline;
    IdentityLedger identity;
};

PolicyParams train_policy(const Context& ctx, double sd_max, double lambda, int episodes, std::uint64_t seed)
{
    EnvConfig cfg = ctx.sc.env;
    cfg.sd_max = sd_max;
    cfg.econ.lambda = lambda;
    TrainConfig tc = ctx.sc.train;
    tc.total_episodes = episodes;
    tc.min_episodes = episodes;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train([&] { return std::make_unique<EpidemicPolicyEnv>(ctx.pop, cfg, ctx.baseline); }, tc, seed,
                         sd_max);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << format("  trained SD_max %.1f lambda %.0f: %d episodes, converged %d, %.0f s", sd_max, lambda,
                     r.episodes, static_cast<int>(r.converged), secs)
              << std::endl;
    return r.params;
}

void r0_reproduction(Context& ctx, Report& rep)
{
    EpidemicConfig cfg = ctx.sc.env.epidemic;
    cfg.params.kappa = 6.0;
    cfg.params.alpha_asymp = 0.5;
    const auto est = estimate_r0(*ctx.pop, cfg, 500, derive_seed(ctx.opt.seed, {1}));
    rep.add("R0 reproduction", est.mean >= 7.0 && est.mean <= 8.0,
            format("R0 %.3f (95%% CI %.3f-%.3f) over 500 reps, band [7.0, 8.0]", est.mean, est.low, est.high));
}

void vaccine_algebra(Report& rep)
{
    const double a = solve_ves_ved(0.9);
    const double b = solve_ves_ved(0.6);
    const bool pass = std::abs(a - 0.684) <= 5e-4 && std::abs(b - 0.368) <= 5e-4;
    rep.add("Vaccine algebra", pass, format("solve(0.9) = %.6f, solve(0.6) = %.6f", a, b));
}

void ifr_formula(Report& rep)
{
    const double a = ifr(80.0);
    const double b = ifr(30.0);
    const bool pass = a == 0.1 && std::abs(b - 4.65e-4) <= 1e-6;
    rep.add("IFR formula", pass, format("ifr(80) = %.6g, ifr(30) = %.6g", a, b));
}

void transmission_oracle(const Context& ctx, Report& rep)
{
    struct Case {
        Cycle cycle;
        bool symptomatic;
        double kappa;
    };
    const Case cases[] = {{Cycle::Day, true, 1.0}, {Cycle::Day, false, 1.0}, {Cycle::Night, true, 1.0},
                          {Cycle::Night, false, 2.5}, {Cycle::Day, true, 6.0}};
    double worst = 0.0;
    bool pass = true;
    int k = 0;
    for (const auto& c : cases) {
        const auto o = fixtures::run_transmission_oracle(c.cycle, c.symptomatic, c.kappa, 10000,
                                                         derive_seed(ctx.opt.seed, {5, static_cast<std::uint64_t>(k++)}));
        worst = std::max(worst, o.max_z);
        pass = pass && o.max_z <= 3.0 && !o.impossible_infection;
    }
    rep.add("Transmission oracle", pass, format("max |z| %.2f over 5 fixtures x 10 agents x 1e4 reps", worst));
}

void sensitivity_orderings(const Context& ctx, Report& rep)
{
    const EnvConfig base = validation_preset().env;
    std::ostringstream detail;
    bool pass = true;
    for (auto param : {SweepParam::SdTrigger, SweepParam::Kappa}) {
        SweepSpec spec;
        spec.param = param;
        spec.values = default_grid(param);
        const auto t = run_sensitivity(*ctx.pop, base, spec, derive_seed(ctx.opt.seed, {6}));
        const bool ok = median_fatalities_non_decreasing(t);
        pass = pass && ok;
        detail << to_string(param) << (ok ? " monotone" : " NOT monotone") << "; ";
        std::ofstream(fs::path(ctx.opt.work) / ("sweep_" + to_string(param) + ".csv")) << [&] {
            std::ostringstream s;
            write_sweep_summary_csv(s, t);
            return s.str();
        }();
    }
    SweepSpec spec;
    spec.param = SweepParam::SigmaChild;
    spec.values = default_grid(SweepParam::SigmaChild);
    const auto t = run_sensitivity(*ctx.pop, base, spec, derive_seed(ctx.opt.seed, {6}));
    double min_p = 1.0;
    for (const auto& k : sweep_trend(t, true)) {
        min_p = std::min(min_p, k.p_two_sided);
    }
    pass = pass && min_p > 0.05;
    detail << format("sigma_child Kendall min p %.3f", min_p);
    rep.add("Sensitivity orderings", pass, detail.str());
}

bool declining(const std::vector<double>& profile)
{
    std::vector<double> weeks(profile.size());
    for (std::size_t k = 0; k < weeks.size(); ++k) {
        weeks[k] = static_cast<double>(k);
    }
    return profile.back() < profile.front() && stats::kendall_tau(weeks, profile).tau_b < 0.0;
}

std::shared_ptr<const PolicyParams> policy_ordering(Context& ctx, Report& rep)
{
    const double sd_max = 0.7;
    const double lambda = 1e5;
    EnvConfig cfg = ctx.sc.env;
    cfg.sd_max = sd_max;
    cfg.econ.lambda = lambda;
    auto params = std::make_shared<const PolicyParams>(
        train_policy(ctx, sd_max, lambda, ctx.opt.train_episodes, derive_seed(ctx.opt.seed, {7})));
    const std::uint64_t eval_seed = derive_seed(ctx.opt.seed, {7, 1});
    const int n = ctx.opt.eval_episodes;
    const auto adaptive = run_policy_eval(ctx.pop, cfg, ctx.baseline, PolicySpec::adaptive(params), n, eval_seed);
    const auto fixed = run_policy_eval(ctx.pop, cfg, ctx.baseline, PolicySpec::fixed(), n, eval_seed);
    const auto random = run_policy_eval(ctx.pop, cfg, ctx.baseline, PolicySpec::random(), n, eval_seed);
    const auto zero = run_policy_eval(ctx.pop, cfg, ctx.baseline, PolicySpec::zero(), n, eval_seed);
    for (const auto* e : {&adaptive, &fixed, &random, &zero}) {
        ctx.identity.add(*e);
    }
    const auto na = adaptive.nhb();
    const double ma = stats::mean(na);
    const double mf = stats::mean(fixed.nhb());
    const double mr = stats::mean(random.nhb());
    const double mz = stats::mean(zero.nhb());
    const auto vs_fixed = stats::mann_whitney(na, fixed.nhb());
    const auto vs_zero = stats::mann_whitney(na, zero.nhb());
    const auto profile = adaptive.mean_profile();
    const bool week0 = std::abs(profile.front() - sd_max) <= 0.1;
    const bool decline = declining(profile);
    const bool pass = ma >= mf && ma >= mr && ma > mz && vs_zero.p_greater < 0.05 && week0 && decline;
    rep.add("Policy ordering", pass,
            format("NHB adaptive %.2f, fixed %.2f (MW one-sided p %.3f that adaptive is larger), random %.2f, zero "
                "%.2f (MW p %.2g); week-0 SD %.3f, week-%zu SD %.3f, declining %s",
                ma, mf, vs_fixed.p_greater, mr, mz, vs_zero.p_greater, profile.front(), profile.size() - 1,
                profile.back(), decline ? "yes" : "no"));
    return params;
}

void nhb_gradient(Context& ctx, Report& rep, const std::shared_ptr<const PolicyParams>& headline)
{
    int cell = 0;
    const auto g = nhb_grid(
        ctx.pop, ctx.sc.env, [&](const EnvConfig&) { return ctx.baseline; },
        [&](double sd_max, double lambda) -> std::shared_ptr<const PolicyParams> {
            const auto c = static_cast<std::uint64_t>(cell++);
            if (headline && sd_max == 0.7 && lambda == 1e5) {
                return headline;
            }
            return std::make_shared<const PolicyParams>(
                train_policy(ctx, sd_max, lambda, ctx.opt.grid_episodes, derive_seed(ctx.opt.seed, {8, c})));
        },
        ctx.opt.eval_episodes, derive_seed(ctx.opt.seed, {8, 99}));
    std::ostringstream csv;
    write_grid_csv(csv, g);
    std::ofstream(fs::path(ctx.opt.work) / "grid.csv") << csv.str();
    std::ostringstream detail;
    for (double lambda : grid_lambdas()) {
        detail << format("lambda %.0fK:", lambda / 1e3);
        for (double sd : grid_sd_levels()) {
            const auto* c = g.find(sd, lambda);
            detail << format(" %.2f", c ? c->mean : NAN);
        }
        detail << "; ";
    }
    rep.add("NHB gradient", grid_gradient_holds(g, 2.0), detail.str());
}

double surrogate_fd_error(PolicyParams p, const std::vector<Transition>& batch, const std::vector<double>& adv)
{
    const double eps = 0.2;
    const auto sur = clipped_surrogate(p, batch, adv, eps);
    std::vector<double> analytic = sur.grad_actor;
    analytic.push_back(sur.grad_log_std);
    const double h = 1e-6;
    auto central = [&](double& w) {
        const double w0 = w;
        w = w0 + h;
        const double up = clipped_surrogate(p, batch, adv, eps).objective;
        w = w0 - h;
        const double down = clipped_surrogate(p, batch, adv, eps).objective;
        w = w0;
        return (up - down) / (2.0 * h);
    };
    std::vector<double> numeric;
    for (double& w : p.actor.params()) {
        numeric.push_back(central(w));
    }
    numeric.push_back(central(p.log_std));
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
        diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
        norm += numeric[k] * numeric[k];
    }
    return std::sqrt(diff / norm);
}

struct Bandit final : PolicyEnv {
    Observation reset(std::uint64_t) override { return Observation{}; }
    double step(double a, Observation& next, bool& done) override
    {
        next = {};
        done = true;
        return -(a - 0.4) * (a - 0.4);
    }
};

void ppo_oracles(const Context& ctx, Report& rep)
{
    Rng rng(derive_seed(ctx.opt.seed, {9}));
    const std::size_t n = 40;
    std::vector<double> r(n), v(n);
    std::vector<char> done_flags(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        r[k] = 3.0 * rng.normal();
        v[k] = rng.normal();
    }
    done_flags[9] = done_flags[24] = done_flags[n - 1] = 1;
    bool dones[n];
    for (std::size_t k = 0; k < n; ++k) {
        dones[k] = done_flags[k] != 0;
    }
    const double gamma = 0.99;
    const double ups = 0.95;
    const auto res = gae(r, v, std::span<const bool>(dones, n), gamma, ups);
    double gae_err = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double a = 0.0;
        for (std::size_t l = t; l < n; ++l) {
            const double next_v = (dones[l] || l + 1 == n) ? 0.0 : v[l + 1];
            a += std::pow(gamma * ups, static_cast<double>(l - t)) * (r[l] + gamma * next_v - v[l]);
            if (dones[l]) {
                break;
            }
        }
        gae_err = std::max(gae_err, std::abs(res.advantages[t] - a));
    }

    auto p = PolicyParams::create({8, 8}, 0.7, -0.3, rng);
    p.normalize_obs = false;
    for (double& w : p.actor.params()) {
        w += 0.3 * rng.normal();
    }
    std::vector<Transition> batch;
    std::vector<double> adv;
    for (int k = 0; k < 64; ++k) {
        Transition t;
        for (double& o : t.obs) {
            o = rng.uniform();
        }
        const double mu = p.mean_z(t.obs);
        t.raw_action = mu + std::exp(p.log_std) * rng.normal();
        t.log_prob = gaussian_log_prob(t.raw_action, mu, p.log_std) + 0.4 * (2.0 * rng.uniform() - 1.0);
        batch.push_back(t);
        adv.push_back(rng.normal());
    }
    const double fd_err = surrogate_fd_error(p, batch, adv);

    TrainConfig tc;
    tc.total_episodes = 200 * tc.episodes_per_rollout;
    tc.min_episodes = tc.total_episodes;
    const auto bandit = train([] { return std::make_unique<Bandit>(); }, tc, derive_seed(ctx.opt.seed, {9, 1}), 1.0);
    const double action = bandit.params.mean_action(Observation{});

    const bool pass = gae_err <= 1e-10 && fd_err < 1e-4 && std::abs(action - 0.4) <= 0.05;
    rep.add("PPO unit oracles", pass,
            format("GAE max error %.2e, surrogate FD relative error %.2e, bandit mean action %.4f", gae_err, fd_err,
                action));
}

void baseline_exactness(Context& ctx, Report& rep)
{
    const EnvConfig& cfg = ctx.sc.env;
    const std::uint64_t seed = derive_seed(ctx.opt.seed, {10});
    const auto fixed = run_policy_eval(ctx.pop, cfg, ctx.baseline, PolicySpec::fixed(), ctx.opt.eval_episodes, seed);
    const auto zero = run_policy_eval(ctx.pop, cfg, ctx.baseline, PolicySpec::zero(), ctx.opt.eval_episodes, seed);
    ctx.identity.add(fixed);
    ctx.identity.add(zero);
    const double weekly = cfg.sd_max * cfg.econ.c1();
    bool fixed_exact = true;
    double expected = 0.0;
    for (int k = 0; k < cfg.n_decisions; ++k) {
        expected += weekly;
    }
    for (const auto& ep : fixed.episodes) {
        fixed_exact = fixed_exact && ep.total_cost == expected && ep.history.size() == static_cast<std::size_t>(cfg.n_decisions);
        for (const auto& r : ep.history) {
            fixed_exact = fixed_exact && r.cost == weekly;
        }
    }
    bool zero_free = true;
    std::vector<double> effects;
    for (const auto& ep : zero.episodes) {
        zero_free = zero_free && ep.total_cost == 0.0;
        effects.push_back(ep.effect);
    }
    const double m = stats::mean(effects);
    const double se = stats::standard_error(effects);
    const bool pass = fixed_exact && zero_free && std::abs(m) <= 2.0 * se;
    rep.add("Baseline exactness", pass,
            format("fixed cost %.6f vs t*f*C1 %.6f (%s), zero cost %s, zero-SD effect %.3f (2 SE %.3f)",
                fixed.episodes.front().total_cost, cfg.n_decisions * weekly, fixed_exact ? "exact" : "MISMATCH",
                zero_free ? "0" : "non-zero", m, 2.0 * se));
}

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            std::ifstream in(e.path(), std::ios::binary);
            std::ostringstream s;
            s << in.rdbuf();
            files[fs::relative(e.path(), dir).string()] = s.str();
        }
    }
    return files;
}

/// Console output with the run's own output directory masked.
std::string stdout_of(const fs::path& dir, const std::string& run, const std::string& name)
{
    std::ifstream in(dir / (run + "_" + name + ".stdout"));
    std::ostringstream s;
    s << in.rdbuf();
    std::string text = s.str();
    const std::string own = (dir / run).string();
    for (auto pos = text.find(own); pos != std::string::npos; pos = text.find(own, pos)) {
        text.replace(pos, own.size(), "<out>");
    }
    return text;
}

void cli_determinism(const Context& ctx, Report& rep)
{
    if (ctx.opt.cli.empty()) {
        rep.add("Determinism", false, "no --cli binary given");
        return;
    }
    const fs::path dir = fs::path(ctx.opt.work) / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto config = dir / "small.json";
    std::ofstream(config) << R"({"baseline": {"episodes": 8},
 "train": {"total_episodes": 256, "episodes_per_rollout": 32, "min_episodes": 256, "hidden": [16]},
 "sensitivity": {"reps": 3, "horizon_days": 60}})";
    const std::string c = " --config " + config.string() + " --seed 11";
    const std::vector<std::pair<std::string, std::string>> commands{
        {"pop", "generate-population" + c},
        {"r0", "calibrate-r0" + c + " --reps 100"},
        {"baseline", "baseline" + c},
        {"train", "train" + c},
        {"eval", "evaluate" + c + " --policy adaptive --episodes 5 --checkpoint " + (dir / "model.json").string()},
        {"random", "evaluate" + c + " --policy random --episodes 5"},
        {"sweep", "sweep" + c + " --param sigma_child --values 0.1,0.3"},
    };
    bool ok = true;
    std::string first_diff;
    int compared = 0;
    for (const char* run : {"a", "b"}) {
        for (const auto& [name, args] : commands) {
            const auto out = dir / run / name;
            const std::string cmd = ctx.opt.cli + " " + args + " --out " + out.string() + " > " +
                                    (dir / (std::string(run) + "_" + name + ".stdout")).string() + " 2> /dev/null";
            if (std::system(cmd.c_str()) != 0) {
                ok = false;
                first_diff = "command failed: " + args;
            }
            if (name == "train" && std::string(run) == "a") {
                fs::copy_file(out / "checkpoint.json", dir / "model.json", fs::copy_options::overwrite_existing);
            }
        }
    }
    for (const auto& [name, args] : commands) {
        const auto a = snapshot(dir / "a" / name);
        const auto b = snapshot(dir / "b" / name);
        if (a != b || a.empty()) {
            ok = false;
            if (first_diff.empty()) {
                first_diff = name + " artifacts differ";
            }
        }
        compared += static_cast<int>(a.size());
        if (stdout_of(dir, "a", name) != stdout_of(dir, "b", name)) {
            ok = false;
            if (first_diff.empty()) {
                first_diff = name + " stdout differs";
            }
        }
    }
    rep.add("Determinism", ok,
            ok ? format("%d artifacts from %zu commands byte-identical across two runs", compared, commands.size())
               : first_diff);
}

}  // namespace

int main(int argc, char** argv)
{
    Options opt;
    CLI::App app{"Acceptance criteria"};
    app.add_option("--cli", opt.cli, "epinet CLI binary");
    app.add_option("--work", opt.work, "Scratch directory");
    app.add_option("--seed", opt.seed, "Master seed");
    app.add_option("--train-episodes", opt.train_episodes, "Training cap for the headline policy");
    app.add_option("--grid-episodes", opt.grid_episodes, "Training cap per grid cell");
    app.add_option("--eval-episodes", opt.eval_episodes, "Evaluation episodes per policy");
    app.add_flag("--strict", opt.strict, "Exit non-zero when any criterion fails");
    CLI11_PARSE(app, argc, argv);

    fs::create_directories(opt.work);
    Context ctx;
    ctx.opt = opt;
    ctx.pop = std::make_shared<const Population>(generate_population(ctx.sc.population));
    ctx.baseline = std::make_shared<const NullBaseline>(
        build_null_baseline(ctx.pop, ctx.sc.env, ctx.sc.baseline.episodes, ctx.sc.baseline.seed));

    Report rep;
    try {
        r0_reproduction(ctx, rep);
        vaccine_algebra(rep);
        ifr_formula(rep);
        transmission_oracle(ctx, rep);
        sensitivity_orderings(ctx, rep);
        const auto headline = policy_ordering(ctx, rep);
        nhb_gradient(ctx, rep, headline);
        ppo_oracles(ctx, rep);
        baseline_exactness(ctx, rep);
        {
            // Identity over every episode evaluated above plus a stochastic batch.
            const auto random = run_policy_eval(ctx.pop, ctx.sc.env, ctx.baseline, PolicySpec::random(),
                                                ctx.opt.eval_episodes, derive_seed(ctx.opt.seed, {2}));
            ctx.identity.add(random);
            rep.add("Reward/NHB identity", ctx.identity.worst <= 1e-9,
                    format("max |sum rewards - PW-NHB| %.2e over %d episodes", ctx.identity.worst,
                        ctx.identity.episodes));
        }
        cli_determinism(ctx, rep);
    } catch (const std::exception& e) {
        std::cout << "ERROR " << e.what() << std::endl;
        return 1;
    }
    std::cout << format("%zu criteria, %d failed", rep.size(), rep.failures()) << std::endl;
    return opt.strict && rep.failures() > 0 ? 1 : 0;
}
