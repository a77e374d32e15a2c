#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace offgrid;

namespace {

void expect_matches_enumerator(const ModelInputs& in, prec_t z, const RewardModel& rm) {
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{z}), rm);
    const auto dense = oracle::enumerate(in, ReleaseTable::uniform(in.config.threshold, in.config.capacity, z), rm);
    ASSERT_EQ(mdp.states(), dense.states.size());
    const auto& am = mdp.actions[0];
    std::size_t dense_arcs = 0;
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const std::size_t di = dense.index.at(mdp.space[i]);
        for (std::size_t j = 0; j < mdp.states(); ++j) {
            const double p = dense.P(static_cast<Eigen::Index>(di),
                                     static_cast<Eigen::Index>(dense.index.at(mdp.space[j])));
            EXPECT_NEAR(am.transitions.at(i, j), p, 1e-15) << to_string(mdp.space[i]) << " -> " << to_string(mdp.space[j]);
            dense_arcs += p != 0.0;
        }
        EXPECT_NEAR(am.expected_reward[i], dense.r[di], 1e-12) << to_string(mdp.space[i]);
        EXPECT_NEAR(am.release_gain[i], dense.gain[di], 1e-12);
        EXPECT_NEAR(am.lost_packets[i], dense.lost[di], 1e-12);
        EXPECT_NEAR(am.empty_demand[i], dense.empty[di], 1e-12);
    }
    EXPECT_EQ(am.transitions.nonzeros(), dense_arcs);
}

EpDistributionSet barcelona_august() {
    std::ifstream f(oracle::data_path("barcelona_like_pvwatts.csv"));
    return build_ep_distributions(parse_pvwatts_csv(f), 8, 300);
}

} // namespace

TEST(BuildTransitionMatrix, ToyMatchesEventEnumerator) {
    expect_matches_enumerator(oracle::toy_inputs(), 0.5, RewardModel{});
}

TEST(BuildRewards, MatchEnumeratorUnderAllPenalties) {
    RewardModel rm{1.0, -100.0, -25.0, GainFunction::identity};
    expect_matches_enumerator(oracle::toy_inputs(), 0.5, rm);
    rm.gain = GainFunction::threshold_shifted;
    expect_matches_enumerator(oracle::small_battery_inputs(), 0.3, rm);
    expect_matches_enumerator(oracle::small_battery_inputs(5, 2), 0.7, RewardModel{0.5, -3.0, -1.0});
}

TEST(BuildTransitionMatrix, DrainWithoutArrivalBelowThreshold) {
    const auto in = oracle::small_battery_inputs();
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.5}), RewardModel{});
    const State s{10, 2, Phase::on};
    const double expect = (1 - in.config.alpha) * in.arrivals.pmf(10)[0] * in.service.prob(10);
    EXPECT_NEAR(mdp.actions[0].transitions.at(mdp.space.index(s), mdp.space.index({11, 1, Phase::on})), expect, 1e-15);
}

TEST(BuildTransitionMatrix, DeadlineRowsReleaseWithPhasePreserved) {
    auto mdp = oracle::toy_mdp();
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const State& s = mdp.space[i];
        if (s.hour != 12) continue;
        auto row = mdp.actions[0].transitions.row(i);
        ASSERT_EQ(row.size(), 1u);
        EXPECT_EQ(mdp.space[row[0].col], (State{9, 0, s.phase}));
        EXPECT_DOUBLE_EQ(row[0].value, 1.0);
        EXPECT_DOUBLE_EQ(mdp.actions[0].expected_reward[i], s.level);
    }
}

TEST(EventReward, OverflowAndReleaseCases) {
    RewardModel rm{1.0, -100.0, -25.0};
    EventOutcome overflow{{10, 3, Phase::on}, false, 0, 2, false};
    EXPECT_DOUBLE_EQ(event_reward(overflow, rm, 3), -200.0);
    EventOutcome sale{{9, 0, Phase::on}, true, 3, 0, false};
    EXPECT_DOUBLE_EQ(event_reward(sale, rm, 3), 3.0);
    rm.gain = GainFunction::threshold_shifted;
    EXPECT_DOUBLE_EQ(event_reward(sale, rm, 3), 0.0);
    EventOutcome empty{{10, 0, Phase::off}, false, 0, 0, true};
    EXPECT_DOUBLE_EQ(event_reward(empty, rm, 3), -25.0);
}

TEST(ForEachEvent, FullBatteryOverflowEvent) {
    const auto in = oracle::small_battery_inputs();
    const auto actions = uniform_release_actions(in.config, std::vector<prec_t>{0.5});
    const State s{11, in.config.capacity, Phase::on};
    double p_found = 0.0;
    for_each_event(in, actions[0], s, [&](double p, const EventOutcome& ev) {
        if (!ev.release && ev.lost == 2 && ev.next.phase == Phase::on) p_found += p;
    });
    const double expect = (1 - in.config.alpha) * 0.5 * in.arrivals.pmf(11)[2] * (1 - in.service.prob(11)) +
                          (1 - in.config.alpha) * 0.5 * in.arrivals.pmf(11)[3] * in.service.prob(11);
    EXPECT_NEAR(p_found, expect, 1e-15);
}

TEST(BuildRewards, TransitionRewardsReproduceExpectedRewards) {
    RewardModel rm{1.0, -100.0, -25.0};
    const auto in = oracle::small_battery_inputs();
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.1, 0.9}), rm);
    for (const auto& am : mdp.actions) {
        ASSERT_EQ(am.transition_rewards.size(), am.transitions.nonzeros());
        const auto ptr = am.transitions.row_pointers();
        for (std::size_t i = 0; i < mdp.states(); ++i) {
            CompensatedSum s;
            for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k)
                s.add(am.transitions.entries()[k].value * am.transition_rewards[k]);
            EXPECT_NEAR(s.value(), am.expected_reward[i], 1e-12);
        }
    }
}

TEST(BuildRewards, NonNegativeWithoutPenalties) {
    const auto in = oracle::small_battery_inputs();
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.2, 0.8}), RewardModel{});
    for (const auto& am : mdp.actions)
        for (double r : am.expected_reward) EXPECT_GE(r, 0.0);
}

TEST(AssembleMdp, ActionsDifferOnlyOnReleaseRows) {
    const auto in = oracle::small_battery_inputs();
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.1, 0.9}), RewardModel{});
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const State& s = mdp.space[i];
        if (s.level >= in.config.threshold || s.hour == in.config.T) continue;
        auto a = mdp.actions[0].transitions.row(i), b = mdp.actions[1].transitions.row(i);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            EXPECT_EQ(a[k].col, b[k].col);
            EXPECT_EQ(a[k].value, b[k].value);
        }
    }
}

TEST(AssembleMdp, BarcelonaFiveActionsAreValid) {
    ModelInputs in;
    in.arrivals = barcelona_august();
    in.service = build_service_profile("erlang-two-peak");
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.1, 0.3, 0.5, 0.7, 0.9}),
                            RewardModel{});
    ASSERT_EQ(mdp.core.actions(), 5u);
    for (const auto& P : mdp.core.transitions) {
        EXPECT_NO_THROW(check_stochastic(P, 1e-12));
        EXPECT_NO_THROW(verify_type_b(P, mdp.core.ordering));
    }
    EXPECT_EQ(mdp.core.action_ids[0], "Z=0.1");
}

TEST(AssembleMdp, AlphaZeroHasNoOffRows) {
    auto in = oracle::toy_inputs();
    in.config.alpha = 0.0;
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.5}), RewardModel{});
    for (const auto& s : mdp.space.states()) EXPECT_EQ(s.phase, Phase::on);
}

TEST(AssembleMdp, Errors) {
    auto in = oracle::toy_inputs();
    EXPECT_THROW(ReleaseTable::uniform(3, 3, 1.0), ConfigError);
    EXPECT_THROW(assemble_mdp(in, {}, RewardModel{}), ConfigError);
    RewardModel bad;
    bad.loss_penalty = 5.0;
    EXPECT_THROW(assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.5}), bad), ConfigError);
    auto wrong_packets = in;
    wrong_packets.arrivals.packet_size_wh = 250;
    EXPECT_THROW(assemble_mdp(wrong_packets, uniform_release_actions(in.config, std::vector<prec_t>{0.5}), {}),
                 ConfigError);
    auto leaky = in;
    leaky.arrivals.dists[10] = {0.3, 0.3, 0.3};
    try {
        assemble_mdp(leaky, uniform_release_actions(in.config, std::vector<prec_t>{0.5}), {});
        FAIL();
    } catch (const StructureError& e) {
        EXPECT_NE(std::string(e.what()).find("(10,"), std::string::npos) << e.what();
    }
    auto mismatched = uniform_release_actions(in.config, std::vector<prec_t>{0.5});
    mismatched[0].release = ReleaseTable::uniform(2, 3, 0.5);
    EXPECT_THROW(assemble_mdp(in, mismatched, {}), ConfigError);
}
