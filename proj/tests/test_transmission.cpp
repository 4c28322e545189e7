#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "epinet/transmission.hpp"
#include "fixtures.hpp"

using namespace epinet;

TEST(NaturalHistory, ProfileShape)
{
    const NaturalHistory h;
    EXPECT_EQ(h.incubation_steps(), 8);
    EXPECT_EQ(h.infectious_steps(), 30);
    EXPECT_DOUBLE_EQ(h.infectivity(8), 1.0);
    EXPECT_NEAR(h.infectivity(0), 0.01, 1e-15);
    EXPECT_DOUBLE_EQ(h.infectivity(30), 0.0);
    EXPECT_DOUBLE_EQ(h.infectivity(-1), 0.0);
    EXPECT_NEAR(h.infectivity(19), 0.5, 1e-15);
    const double ratio = h.infectivity(2) / h.infectivity(1);
    for (int d = 1; d < 8; ++d) {
        EXPECT_NEAR(h.infectivity(d + 1) / h.infectivity(d), ratio, 1e-12);
    }
    for (int d = 9; d < 30; ++d) {
        EXPECT_LT(h.infectivity(d), h.infectivity(d - 1));
    }
}

TEST(NaturalHistory, LatentPeriodIsSilent)
{
    const auto h = NaturalHistory::from_days(1, 4, 15);
    EXPECT_DOUBLE_EQ(h.infectivity(0), 0.0);
    EXPECT_DOUBLE_EQ(h.infectivity(1), 0.0);
    EXPECT_NEAR(h.infectivity(2), 0.01, 1e-15);
    EXPECT_DOUBLE_EQ(h.infectivity(8), 1.0);
}

TEST(NaturalHistory, RejectsInconsistentDurations)
{
    EXPECT_THROW(NaturalHistory(5, 4, 10), std::invalid_argument);
    EXPECT_THROW(NaturalHistory(0, 8, 8), std::invalid_argument);
    EXPECT_THROW(NaturalHistory(0, 8, 30, 0.0), std::invalid_argument);
}

TEST(TransmissionTable, LookupsAndGaps)
{
    const auto t = TransmissionTable::defaults();
    EXPECT_DOUBLE_EQ(t.q(ContextKind::Household, 2, AgeBand::Adult, AgeBand::SchoolAge), 0.09335);
    EXPECT_DOUBLE_EQ(t.q(ContextKind::Household, 6, AgeBand::Infant, AgeBand::Senior), 0.00653);
    EXPECT_DOUBLE_EQ(t.q(ContextKind::Class, 25, AgeBand::SchoolAge, AgeBand::Infant), 0.00865);
    EXPECT_DOUBLE_EQ(t.q(ContextKind::Community, 100, AgeBand::Adult, AgeBand::Senior), 13.92e-6);
    EXPECT_THROW(t.q(ContextKind::WorkGroup, 20, AgeBand::SchoolAge, AgeBand::Adult), std::out_of_range);
    EXPECT_THROW(t.q(ContextKind::Household, 1, AgeBand::Adult, AgeBand::Adult), std::out_of_range);
    EXPECT_THROW(t.q(ContextKind::Household, 7, AgeBand::Adult, AgeBand::Adult), std::out_of_range);
    EXPECT_DOUBLE_EQ(t.max_q(), 0.09335);
}

TEST(PairwiseProb, ScalesAndClamps)
{
    EXPECT_DOUBLE_EQ(pairwise_prob(6.0, 0.5, 0.1, true, 0.5), 0.3);
    EXPECT_DOUBLE_EQ(pairwise_prob(6.0, 0.5, 0.1, false, 0.5), 0.15);
    ClampCounter clamps;
    EXPECT_DOUBLE_EQ(pairwise_prob(20.0, 1.0, 0.09335, true, 0.5, &clamps), 1.0);
    EXPECT_EQ(clamps.pairwise, 1u);
    EXPECT_DOUBLE_EQ(pairwise_prob(0.0, 1.0, 0.09, true, 0.5, &clamps), 0.0);
    EXPECT_EQ(clamps.pairwise, 1u);
}

TEST(AgentInfectionProb, MatchesEnumerationOfFiringSources)
{
    const std::vector<SourceTerm> sources{{0.3, 1.0, 0.0}, {0.2, 0.25, 0.1}, {0.05, 2.0, 0.0}, {0.6, 0.1, 0.5}};
    std::vector<double> p;
    for (const auto& s : sources) {
        p.push_back((1.0 - s.infectiousness_ve) * s.interaction * s.pairwise);
    }
    double at_least_one = 0.0;
    for (unsigned mask = 1; mask < (1u << sources.size()); ++mask) {
        double prob = 1.0;
        for (std::size_t k = 0; k < sources.size(); ++k) {
            prob *= (mask >> k & 1u) ? p[k] : 1.0 - p[k];
        }
        at_least_one += prob;
    }
    EXPECT_NEAR(agent_infection_prob(0.0, sources), at_least_one, 1e-15);
    EXPECT_NEAR(agent_infection_prob(0.4, sources), 0.6 * at_least_one, 1e-15);
}

TEST(AgentInfectionProb, AdjustedTermClamps)
{
    ClampCounter clamps;
    EXPECT_DOUBLE_EQ(adjusted_source_prob({0.8, 2.0, 0.0}, &clamps), 1.0);
    EXPECT_EQ(clamps.adjusted, 1u);
    EXPECT_THROW(adjusted_source_prob({0.1, -1.0, 0.0}), std::invalid_argument);
    const std::vector<SourceTerm> certain{{0.8, 2.0, 0.0}};
    EXPECT_DOUBLE_EQ(agent_infection_prob(0.0, certain), 1.0);
}

TEST(Ifr, ClosedForm)
{
    EXPECT_DOUBLE_EQ(ifr(80.0), 0.1);
    EXPECT_NEAR(ifr(30.0), 4.65e-4, 1e-6);
    EXPECT_NEAR(ifr(30.0), 0.0232 * std::pow(10.0, -3.27 + 0.0524 * 30.0), 1e-18);
    EXPECT_NEAR(ifr(30.0, 0.5), 0.5 * ifr(30.0), 1e-18);
    EXPECT_LT(ifr(60.0), ifr(61.0));
    EXPECT_THROW(ifr(-1.0), std::invalid_argument);
}

TEST(Daly, BookingSplitsDeathAndRecovery)
{
    const OnsetToRecovery rec;
    const auto b = book_daly(40, 82.5, 0.01, rec);
    EXPECT_NEAR(b.yll, 0.01 * 42.5, 1e-12);
    EXPECT_NEAR(b.yld, 0.99 * 24.7 / 365.0, 1e-12);
    EXPECT_NEAR(b.expected_daly, b.yll + b.yld, 1e-15);
    EXPECT_FALSE(b.residual_clamped);
    const auto old = book_daly(100, 82.5, 0.1, rec);
    EXPECT_TRUE(old.residual_clamped);
    EXPECT_DOUBLE_EQ(old.yll, 0.0);
}

struct OracleCase {
    Cycle cycle;
    bool symptomatic;
    double kappa;
};

class TransmissionOracle : public ::testing::TestWithParam<OracleCase>
{
};

TEST_P(TransmissionOracle, MonteCarloMatchesExactProbabilities)
{
    const auto c = GetParam();
    const auto out = fixtures::run_transmission_oracle(c.cycle, c.symptomatic, c.kappa, 10000, 0x7E57);
    EXPECT_FALSE(out.impossible_infection);
    EXPECT_LT(out.max_z, 3.0);
    int positive = 0;
    for (double p : out.exact) {
        positive += p > 0.0 ? 1 : 0;
    }
    EXPECT_GT(positive, 0);
}

INSTANTIATE_TEST_SUITE_P(Cases, TransmissionOracle,
                         ::testing::Values(OracleCase{Cycle::Day, true, 6.0}, OracleCase{Cycle::Night, true, 6.0},
                                           OracleCase{Cycle::Day, false, 20.0},
                                           OracleCase{Cycle::Night, false, 20.0},
                                           OracleCase{Cycle::Night, true, 30.0}));

TEST(TransmissionOracle, DayStepNeverInfectsThroughHomes)
{
    const auto pop = fixtures::tiny_town();
    const auto cfg = fixtures::oracle_config(Cycle::Day, true, 6.0);
    const auto exact = fixtures::exact_infection_probs(pop, cfg, Cycle::Day);
    EXPECT_DOUBLE_EQ(exact[0], 0.0);
    EXPECT_DOUBLE_EQ(exact[3], 0.0);
    EXPECT_DOUBLE_EQ(exact[5], 0.0);
    EXPECT_GT(exact[6], 0.0);
    EXPECT_GT(exact[8], 0.0);
}
