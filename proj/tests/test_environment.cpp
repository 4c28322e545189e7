#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "epinet/environment.hpp"
#include "epinet/stats.hpp"

using namespace epinet;

namespace {

std::shared_ptr<const Population> town()
{
    static const auto pop = std::make_shared<const Population>(generate_population(PopulationConfig{}));
    return pop;
}

EnvConfig base_config()
{
    EnvConfig cfg;
    cfg.epidemic.params.alpha_asymp = 0.5;
    return cfg;
}

std::shared_ptr<const NullBaseline> baseline(int k, std::uint64_t seed)
{
    return std::make_shared<const NullBaseline>(build_null_baseline(town(), base_config(), k, seed));
}

}  // namespace

TEST(Environment, ResetStopsSeedingAtThresholdAndDecidesImmediately)
{
    EpidemicEnv env(town(), base_config(), baseline(1, 1));
    for (std::uint64_t s = 0; s < 20; ++s) {
        env.reset(derive_seed(42, {s}));
        EXPECT_GE(env.simulator().cumulative_detected(), 5);
        EXPECT_EQ(env.decision_start_step(), env.seeding_days() * kStepsPerDay);
        EXPECT_EQ(env.period(), 0);
        EXPECT_TRUE(env.active());
    }
}

TEST(Environment, SingleDetectionEndsSeeding)
{
    EnvConfig cfg = base_config();
    cfg.tr_threshold = 1;
    cfg.sd_trigger_threshold = 1;
    EpidemicEnv env(town(), cfg);
    for (std::uint64_t s = 0; s < 20; ++s) {
        env.reset(derive_seed(43, {s}));
        const auto& ledger = env.simulator().ledger();
        const int before_last_day = env.decision_start_step() - kStepsPerDay;
        const double earlier = ledger.sum(0, before_last_day, [](const LedgerRow& r) {
            return r.detected_sym + r.detected_asym;
        });
        EXPECT_EQ(earlier, 0.0);
        EXPECT_GE(env.simulator().cumulative_detected(), 1);
    }
}

TEST(Environment, SeedingAveragesOneCasePerDay)
{
    EpidemicEnv env(town(), base_config());
    double seeded = 0.0;
    double days = 0.0;
    for (std::uint64_t s = 0; s < 400; ++s) {
        env.reset(derive_seed(44, {s}));
        seeded += env.seeded_cases();
        days += env.seeding_days();
    }
    const double rate = seeded / days;
    EXPECT_NEAR(rate, 1.0, 4.0 * std::sqrt(1.0 / days));
}

TEST(Environment, SeedingCapAborts)
{
    EnvConfig cfg = base_config();
    cfg.seeding_p = 1e-9;
    cfg.max_seeding_days = 5;
    EpidemicEnv env(town(), cfg);
    EXPECT_THROW(env.reset(1), std::runtime_error);
}

TEST(Environment, RewardIdentityPerPeriodAndEpisode)
{
    EpidemicEnv env(town(), base_config(), baseline(20, 2));
    const double c1 = env.config().econ.c1();
    for (std::uint64_t s = 0; s < 10; ++s) {
        env.reset(derive_seed(45, {s}));
        double sum = 0.0;
        int k = 0;
        while (env.active()) {
            const double level = 0.07 * (k++ % 11);
            const auto r = env.step(level);
            const auto& rec = r.record;
            EXPECT_EQ(rec.reward, rec.loss_null - rec.loss_controlled - rec.cost / env.config().econ.lambda);
            EXPECT_DOUBLE_EQ(rec.cost, level * c1);
            sum += r.reward;
        }
        EXPECT_NEAR(sum, env.account().pw_nhb(), 1e-9);
        EXPECT_NEAR(sum, env.cum_nhb(), 1e-12);
    }
}

TEST(Environment, CostTermArithmetic)
{
    EnvConfig cfg = base_config();
    cfg.econ.lambda = 50000.0;
    EpidemicEnv env(town(), cfg, baseline(1, 3));
    env.reset(7);
    const auto r = env.step(0.5);
    EXPECT_NEAR(r.record.cost / cfg.econ.lambda, 0.5 * 1.4e9 * 2393.0 / 24190907.0 / 50000.0, 1e-12);
    EXPECT_NEAR(r.record.cost / cfg.econ.lambda, 1.38486, 1e-4);
}

TEST(Environment, SingleEpisodeBaselineSubtractsItself)
{
    const std::uint64_t master = 77;
    EpidemicEnv env(town(), base_config(), baseline(1, master));
    env.reset(baseline_episode_seed(master, 0));
    while (env.active()) {
        EXPECT_EQ(env.step(0.0).reward, 0.0);
    }
}

TEST(Environment, BaselineStabilises)
{
    const auto b100 = build_null_baseline(town(), base_config(), 100, 5);
    const auto b200 = build_null_baseline(town(), base_config(), 200, 5);
    for (std::size_t t = 0; t < b100.mean_loss.size(); ++t) {
        EXPECT_GE(b100.mean_loss[t], 0.0);
        const double se = std::sqrt(b100.var_loss[t] / 100.0 + b200.var_loss[t] / 200.0);
        EXPECT_LE(std::abs(b100.mean_loss[t] - b200.mean_loss[t]), 2.0 * se + 1e-12) << t;
    }
    ASSERT_EQ(b200.episode_totals.size(), 200u);
}

TEST(Environment, ObservationsBoundedAndEpisodeLengthFixed)
{
    EpidemicEnv env(town(), base_config(), baseline(1, 6));
    Rng rng(3);
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto o = env.reset(derive_seed(46, {s}));
        int steps = 0;
        bool done = false;
        while (!done) {
            for (double v : o) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
            const auto r = env.step(rng.uniform() * 0.7);
            o = r.observation;
            done = r.done;
            ++steps;
        }
        EXPECT_EQ(steps, 20);
        EXPECT_FALSE(env.active());
        EXPECT_THROW(env.step(0.1), std::logic_error);
    }
}

TEST(Environment, ActionBounds)
{
    EnvConfig cfg = base_config();
    EpidemicEnv lenient(town(), cfg, baseline(1, 8));
    lenient.reset(1);
    EXPECT_DOUBLE_EQ(lenient.step(0.9).record.sd_level, 0.7);
    EXPECT_DOUBLE_EQ(lenient.step(-0.2).record.sd_level, 0.0);
    EXPECT_DOUBLE_EQ(lenient.level_from_action(0.5), 0.35);
    EXPECT_DOUBLE_EQ(lenient.level_from_action(0.0), 0.0);
    cfg.strict_actions = true;
    EpidemicEnv strict(town(), cfg, baseline(1, 8));
    strict.reset(1);
    EXPECT_THROW(strict.step(0.9), std::invalid_argument);
    EXPECT_THROW(strict.step(std::nan("")), std::invalid_argument);
}

TEST(Environment, StepBeforeResetFails)
{
    EpidemicEnv env(town(), base_config());
    EXPECT_THROW(env.step(0.0), std::logic_error);
}

TEST(Environment, ZeroPolicyMatchesBaselineInExpectation)
{
    EpidemicEnv env(town(), base_config(), baseline(100, 9));
    std::vector<double> nhb;
    for (std::uint64_t s = 0; s < 100; ++s) {
        env.reset(derive_seed(47, {s}));
        while (env.active()) {
            env.step(0.0);
        }
        EXPECT_EQ(env.account().total_cost(), 0.0);
        nhb.push_back(env.cum_nhb());
    }
    EXPECT_LE(std::abs(stats::mean(nhb)), 2.0 * stats::standard_error(nhb));
}

TEST(Environment, BaselineJsonRoundTrip)
{
    const auto b = build_null_baseline(town(), base_config(), 3, 10);
    const auto back = baseline_from_json(baseline_to_json(b));
    EXPECT_EQ(baseline_to_json(back).dump(), baseline_to_json(b).dump());
    EXPECT_THROW(baseline_from_json({{"format", "x"}}), std::invalid_argument);
}

TEST(Environment, TraceHasOneLinePerDecision)
{
    EpidemicEnv env(town(), base_config(), baseline(1, 11));
    env.reset(5);
    while (env.active()) {
        env.step(0.3);
    }
    std::ostringstream out;
    env.write_trace_jsonl(out);
    std::istringstream in(out.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("t").get<int>(), lines);
        ++lines;
    }
    EXPECT_EQ(lines, 20);
}

TEST(Environment, ShortBaselineRejected)
{
    auto b = std::make_shared<NullBaseline>();
    b->mean_loss.assign(5, 0.0);
    EXPECT_THROW(EpidemicEnv(town(), base_config(), b), std::invalid_argument);
}
