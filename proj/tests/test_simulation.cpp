#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "epinet/simulation.hpp"
#include "fixtures.hpp"

using namespace epinet;

namespace {

const Population& town()
{
    static const Population pop = generate_population(PopulationConfig{});
    return pop;
}

EpidemicConfig no_npis()
{
    EpidemicConfig cfg;
    cfg.case_isolation = false;
    cfg.home_quarantine = false;
    return cfg;
}

Simulator seeded_outbreak(const EpidemicConfig& cfg, std::uint64_t seed, int steps)
{
    Simulator sim(town(), cfg, seed);
    sim.seed_random(5);
    sim.run(steps);
    return sim;
}

}  // namespace

TEST(Simulator, StepParityGivesCycle)
{
    Simulator sim(town(), no_npis(), 1);
    EXPECT_EQ(sim.current_cycle(), Cycle::Day);
    sim.step();
    EXPECT_EQ(sim.current_cycle(), Cycle::Night);
    sim.step();
    EXPECT_EQ(sim.current_cycle(), Cycle::Day);
}

TEST(Simulator, CompartmentsAreConserved)
{
    Simulator sim(town(), EpidemicConfig{}, 3);
    sim.seed_random(5);
    for (int n = 0; n < 200; ++n) {
        sim.step();
        const auto& c = sim.counts();
        ASSERT_EQ(c.susceptible + c.infected + c.removed, static_cast<int>(town().size()));
        ASSERT_EQ(c.removed, sim.cumulative_deaths() + sim.cumulative_recoveries());
        ASSERT_EQ(c.infected + c.removed, sim.cumulative_infections());
    }
}

TEST(Simulator, LedgerSumsMatchCounters)
{
    const Simulator sim = seeded_outbreak(EpidemicConfig{}, 4, 160);
    const auto& ledger = sim.ledger();
    auto total = [&](auto field) { return ledger.sum(0, static_cast<int>(ledger.rows.size()), field); };
    EXPECT_EQ(total([](const LedgerRow& r) { return r.new_infections; }), sim.cumulative_infections());
    EXPECT_EQ(total([](const LedgerRow& r) { return r.deaths; }), sim.cumulative_deaths());
    EXPECT_EQ(total([](const LedgerRow& r) { return r.recoveries; }), sim.cumulative_recoveries());
    EXPECT_EQ(total([](const LedgerRow& r) { return r.detected_sym; }), sim.cumulative_detected_sym());
    EXPECT_EQ(total([](const LedgerRow& r) { return r.detected_asym; }), sim.cumulative_detected_asym());
    double booked = 0.0;
    for (const auto& s : sim.states()) {
        booked += s.phase == Phase::Susceptible ? 0.0 : s.booked_daly;
    }
    EXPECT_NEAR(ledger.total_daly(), booked, 1e-9);
    for (std::size_t n = 0; n < ledger.rows.size(); ++n) {
        EXPECT_EQ(ledger.rows[n].step, static_cast<int>(n));
    }
}

TEST(Simulator, RemovalAfterInfectiousPeriod)
{
    Simulator sim(town(), no_npis(), 5);
    ASSERT_TRUE(sim.introduce(100));
    EXPECT_FALSE(sim.introduce(100));
    sim.run(30);
    EXPECT_EQ(sim.states()[100].phase, Phase::Infected);
    sim.step();
    EXPECT_EQ(sim.states()[100].phase, Phase::Removed);
}

TEST(Simulator, DetectionOnlyAtEndOfIncubation)
{
    const Simulator sim = seeded_outbreak(EpidemicConfig{}, 6, 120);
    int detected = 0;
    for (const auto& s : sim.states()) {
        if (s.detected) {
            ++detected;
            EXPECT_EQ(s.detection_step - s.infection_step, sim.config().history.incubation_steps());
        }
    }
    EXPECT_GT(detected, 0);
}

TEST(Simulator, RemovedIsAbsorbing)
{
    Simulator sim(town(), EpidemicConfig{}, 7);
    sim.seed_random(10);
    std::vector<Phase> last(town().size(), Phase::Susceptible);
    for (int n = 0; n < 300; ++n) {
        sim.step();
        for (std::size_t i = 0; i < last.size(); ++i) {
            const Phase now = sim.states()[i].phase;
            ASSERT_GE(static_cast<int>(now), static_cast<int>(last[i]));
            last[i] = now;
        }
    }
    for (AgentId i = 0; i < town().size(); ++i) {
        if (sim.states()[i].phase == Phase::Removed) {
            EXPECT_FALSE(sim.introduce(i));
        }
    }
}

TEST(Simulator, ZeroKappaNeverTransmits)
{
    EpidemicConfig cfg;
    cfg.params.kappa = 0.0;
    const Simulator sim = seeded_outbreak(cfg, 8, 100);
    EXPECT_EQ(sim.cumulative_infections(), 5);
}

TEST(Simulator, AttackSizeGrowsWithKappa)
{
    std::vector<double> mean_size;
    for (double kappa : {1.0, 3.0, 6.0}) {
        EpidemicConfig cfg = no_npis();
        cfg.params.kappa = kappa;
        double total = 0.0;
        for (std::uint64_t r = 0; r < 8; ++r) {
            total += seeded_outbreak(cfg, 100 + r, 120).cumulative_infections();
        }
        mean_size.push_back(total / 8.0);
    }
    EXPECT_LT(mean_size[0], mean_size[1]);
    EXPECT_LT(mean_size[1], mean_size[2]);
}

TEST(Simulator, NoClampingWithoutInterventions)
{
    const Simulator sim = seeded_outbreak(no_npis(), 9, 200);
    EXPECT_EQ(sim.clamps().pairwise, 0u);
    EXPECT_EQ(sim.clamps().adjusted, 0u);
}

TEST(Simulator, SameSeedSameEpisode)
{
    const Simulator a = seeded_outbreak(EpidemicConfig{}, 11, 150);
    const Simulator b = seeded_outbreak(EpidemicConfig{}, 11, 150);
    EXPECT_EQ(a.snapshot_json().dump(), b.snapshot_json().dump());
    const Simulator c = seeded_outbreak(EpidemicConfig{}, 12, 150);
    EXPECT_NE(a.snapshot_json().dump(), c.snapshot_json().dump());
}

TEST(Simulator, SocialDistancingReducesSpread)
{
    double open = 0.0;
    double distanced = 0.0;
    for (std::uint64_t r = 0; r < 8; ++r) {
        open += seeded_outbreak(no_npis(), 200 + r, 120).cumulative_infections();
        Simulator sim(town(), no_npis(), 200 + r);
        sim.set_sd_level(0.9);
        sim.seed_random(5);
        sim.run(120);
        distanced += sim.cumulative_infections();
    }
    EXPECT_LT(distanced, open);
}

TEST(Simulator, SdLevelRange)
{
    Simulator sim(town(), EpidemicConfig{}, 1);
    EXPECT_THROW(sim.set_sd_level(1.1), std::invalid_argument);
    EXPECT_THROW(sim.set_sd_level(-0.1), std::invalid_argument);
    EXPECT_NO_THROW(sim.set_sd_level(1.0));
}

TEST(Simulator, AttributionNamesAnEarlierContact)
{
    EpidemicConfig cfg = no_npis();
    cfg.attribution = true;
    const Simulator sim = seeded_outbreak(cfg, 13, 120);
    const auto& pop = town();
    int attributed = 0;
    for (AgentId i = 0; i < pop.size(); ++i) {
        const auto& s = sim.states()[i];
        if (s.phase == Phase::Susceptible || s.infector == kNoAgent) {
            continue;
        }
        ++attributed;
        const auto& src = sim.states()[s.infector];
        EXPECT_LT(src.infection_step, s.infection_step);
        const auto& a = pop.agents[i];
        const auto& b = pop.agents[s.infector];
        std::vector<ContextId> ca(a.day_contexts);
        for (ContextId g : a.home_contexts()) {
            ca.push_back(g);
        }
        bool shared = std::find(ca.begin(), ca.end(), b.household) != ca.end() ||
                      std::find(ca.begin(), ca.end(), b.cluster) != ca.end() ||
                      std::find(ca.begin(), ca.end(), b.neighborhood) != ca.end() ||
                      std::find(ca.begin(), ca.end(), b.community) != ca.end();
        for (ContextId g : b.day_contexts) {
            shared = shared || std::find(ca.begin(), ca.end(), g) != ca.end();
        }
        EXPECT_TRUE(shared);
    }
    EXPECT_EQ(attributed, sim.cumulative_infections() - 5);
}

TEST(Simulator, SeedCountDrawIsBounded)
{
    Simulator sim(town(), EpidemicConfig{}, 14);
    EXPECT_EQ(sim.draw_seed_count(0.0), 0u);
    EXPECT_EQ(sim.draw_seed_count(1.0), town().size());
    EXPECT_LE(sim.draw_seed_count(0.001), town().size());
}

TEST(Simulator, VaccinationPlanMustMatchPopulation)
{
    VaccinationPlan plan(3);
    EXPECT_THROW(Simulator(town(), EpidemicConfig{}, 1, plan), std::invalid_argument);
}
