#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace offgrid;

namespace {

SparseMdp two_state(double p, double r0, double r1) {
    SparseMdp m;
    m.root = 0;
    m.ordering = {0, 1};
    SparseMatrix P(2);
    P.push_row({{0, 1 - p}, {1, p}});
    P.push_row({{0, 1.0}});
    m.transitions = {P};
    m.rewards = {{r0, r1}};
    m.action_ids = {"only"};
    return m;
}

SolverOptions with(Evaluator e, double eps = 1e-10) {
    SolverOptions o;
    o.evaluator = e;
    o.epsilon = eps;
    return o;
}

} // namespace

TEST(QValues, ZeroValuesGiveRewards) {
    auto mdp = oracle::toy_mdp({0.2, 0.8}, RewardModel{1, -1, -1});
    auto q = q_values(mdp.core, numvec(mdp.states(), 0.0));
    for (std::size_t s = 0; s < mdp.states(); ++s)
        for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(q(s, a), mdp.core.rewards[a][s]);
}

TEST(QValues, MatchDenseExpansion) {
    auto mdp = oracle::toy_mdp({0.2, 0.8}, RewardModel{1, -1, -1});
    numvec V(mdp.states());
    for (std::size_t i = 0; i < V.size(); ++i) V[i] = std::sin(static_cast<double>(i));
    auto q = q_values(mdp.core, V);
    for (std::size_t a = 0; a < 2; ++a) {
        auto D = oracle::dense(mdp.core.transitions[a]);
        Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(V.data(), static_cast<Eigen::Index>(V.size()));
        Eigen::VectorXd pv = D * v;
        for (std::size_t s = 0; s < mdp.states(); ++s)
            EXPECT_NEAR(q(s, a), mdp.core.rewards[a][s] + pv(static_cast<Eigen::Index>(s)), 1e-13);
    }
}

TEST(QValues, BellmanIdentityAtFixedPoint) {
    auto mdp = oracle::toy_mdp({0.5}, RewardModel{1, -1, -1});
    auto rep = policy_iteration(mdp.core, {});
    auto q = q_values(mdp.core, rep.evaluation.values);
    for (std::size_t s = 0; s < mdp.states(); ++s)
        EXPECT_NEAR(q(s, 0) - rep.evaluation.values[s], rep.evaluation.rho, 1e-12);
}

TEST(Improve, DominantTiedAndPerturbed) {
    QTable q{3, 2, {0, 1, 0, 1, 0, 1}};
    EXPECT_EQ(improve(q, Policy{{0, 0, 0}}).choice, (std::vector<std::size_t>{1, 1, 1}));
    QTable tied{3, 2, numvec(6, 4.0)};
    EXPECT_EQ(improve(tied, Policy{{1, 0, 1}}).choice, (std::vector<std::size_t>{1, 0, 1}));
    EXPECT_EQ(improve(tied, Policy{}).choice, (std::vector<std::size_t>{0, 0, 0}));
    QTable perturbed = tied;
    perturbed(1, 1) += 1e-6;
    EXPECT_EQ(improve(perturbed, Policy{{0, 0, 0}}).choice, (std::vector<std::size_t>{0, 1, 0}));
}

TEST(PolicyIteration, SingleActionTerminatesInOneRound) {
    auto mdp = oracle::toy_mdp({0.5});
    for (auto e : {Evaluator::structured, Evaluator::fixed_point, Evaluator::direct}) {
        auto rep = policy_iteration(mdp.core, with(e));
        EXPECT_EQ(rep.iterations, 1u);
        EXPECT_TRUE(rep.converged);
        for (auto c : rep.policy.choice) EXPECT_EQ(c, 0u);
    }
}

TEST(PolicyIteration, BackendsAndRviAgreeOnToy) {
    auto mdp = oracle::toy_mdp({0.1, 0.3, 0.5, 0.7, 0.9}, RewardModel{1, -1, -0.5});
    auto ref = policy_iteration(mdp.core, with(Evaluator::structured));
    for (auto e : {Evaluator::fixed_point, Evaluator::direct}) {
        auto rep = policy_iteration(mdp.core, with(e));
        EXPECT_EQ(rep.policy, ref.policy) << to_string(e);
        EXPECT_NEAR(rep.evaluation.rho, ref.evaluation.rho, 1e-8);
    }
    auto rvi = relative_value_iteration(mdp.core, with(Evaluator::structured));
    EXPECT_TRUE(rvi.converged);
    EXPECT_EQ(rvi.policy, ref.policy);
    EXPECT_NEAR(rvi.evaluation.rho, ref.evaluation.rho, 1e-8);
}

TEST(PolicyIteration, ReportedRhoMatchesReevaluation) {
    auto in = oracle::small_battery_inputs();
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.1, 0.5, 0.9}),
                            RewardModel{1, -5, -2});
    for (auto e : {Evaluator::structured, Evaluator::fixed_point, Evaluator::direct}) {
        auto rep = policy_iteration(mdp.core, with(e));
        auto ev = evaluate_policy(mdp, rep.policy);
        EXPECT_NEAR(rep.evaluation.rho, ev.rho, 1e-9);
        EXPECT_LE(rep.iterations, 20u);
        for (std::size_t k = 1; k < rep.rho_history.size(); ++k)
            EXPECT_GE(rep.rho_history[k], rep.rho_history[k - 1] - 1e-10);
    }
}

TEST(RelativeValueIteration, SingleState) {
    SparseMdp m;
    m.ordering = {0};
    SparseMatrix P(1);
    P.push_row({{0, 1.0}});
    m.transitions = {P};
    m.rewards = {{3.5}};
    m.action_ids = {"a"};
    auto rep = relative_value_iteration(m, {});
    EXPECT_EQ(rep.iterations, 1u);
    EXPECT_DOUBLE_EQ(rep.evaluation.rho, 3.5);
}

TEST(RelativeValueIteration, IterationCapFlagsNonConvergence) {
    auto mdp = oracle::toy_mdp({0.2, 0.8});
    SolverOptions o;
    o.max_iterations = 2;
    auto rep = relative_value_iteration(mdp.core, o);
    EXPECT_FALSE(rep.converged);
    EXPECT_EQ(rep.iterations, 2u);
}

TEST(Evaluators, TwoStateClosedForm) {
    const double p = 0.4, r0 = 2.0, r1 = -1.0;
    const auto m = two_state(p, r0, r1);
    const double rho = (r0 + p * r1) / (1 + p);
    auto fp = evaluate_fixed_point(m.transitions[0], m.rewards[0], 0, 1e-13, 100000);
    auto gj = evaluate_direct(m.transitions[0], m.rewards[0], 0);
    for (const auto* ev : {&fp, &gj}) {
        EXPECT_NEAR(ev->rho, rho, 1e-10);
        EXPECT_NEAR(ev->values[0], 0.0, 1e-10);
        EXPECT_NEAR(ev->values[1], r1 - rho, 1e-10);
    }
}

TEST(Evaluators, ToyArbitraryPoliciesAgree) {
    auto mdp = oracle::toy_mdp({0.1, 0.5, 0.9}, RewardModel{1, -3, -1});
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> pick(0, 2);
    for (int t = 0; t < 10; ++t) {
        Policy pol;
        for (std::size_t s = 0; s < mdp.states(); ++s) pol.choice.push_back(pick(rng));
        auto [P, r] = policy_system(mdp.core, pol);
        auto rb = evaluate_structured(P, r, mdp.core.ordering);
        auto fp = evaluate_fixed_point(P, r, mdp.core.root, 1e-12, 1000000);
        auto gj = evaluate_direct(P, r, mdp.core.root);
        EXPECT_NEAR(fp.rho, rb.rho, 1e-8);
        EXPECT_NEAR(gj.rho, rb.rho, 1e-8);
        EXPECT_LE(max_abs_diff(fp.values, rb.values), 1e-8);
        EXPECT_LE(max_abs_diff(gj.values, rb.values), 1e-8);
    }
}

TEST(Evaluators, OperationCountsSeparateDirectFromStructured) {
    auto in = oracle::small_battery_inputs(20, 8);
    auto mdp = assemble_mdp(in, uniform_release_actions(in.config, std::vector<prec_t>{0.5}), RewardModel{});
    auto [P, r] = policy_system(mdp.core, Policy{std::vector<std::size_t>(mdp.states(), 0)});
    OpCounter rb, gj;
    evaluate_structured(P, r, mdp.core.ordering, &rb);
    evaluate_direct(P, r, mdp.core.root, &gj);
    const double n = static_cast<double>(P.rows());
    EXPECT_LE(rb.total(), 2 * P.nonzeros() + 4 * P.rows());
    EXPECT_GE(static_cast<double>(gj.total()), 0.1 * n * n * n);
}

TEST(Evaluators, FixedPointNonConvergenceThrows) {
    auto mdp = oracle::toy_mdp({0.5});
    auto [P, r] = policy_system(mdp.core, Policy{std::vector<std::size_t>(mdp.states(), 0)});
    EXPECT_THROW(evaluate_fixed_point(P, r, mdp.core.root, 1e-12, 3), SolverError);
}

TEST(Evaluators, DirectRejectsSingularSystem) {
    // Two closed classes: not unichain.
    SparseMatrix P(3);
    P.push_row({{0, 1.0}});
    P.push_row({{2, 1.0}});
    P.push_row({{1, 1.0}});
    EXPECT_THROW(evaluate_direct(P, numvec{1, 2, 3}, 0), SolverError);
}

TEST(Solvers, RandomTypeBBackendEquivalence) {
    std::mt19937_64 rng(21);
    for (std::size_t n : {5u, 30u, 150u, 400u}) {
        auto m = oracle::random_type_b_mdp(n, 4, rng);
        m.validate();
        auto rb = policy_iteration(m, with(Evaluator::structured));
        auto fp = policy_iteration(m, with(Evaluator::fixed_point, 1e-12));
        auto gj = policy_iteration(m, with(Evaluator::direct));
        auto rvi = relative_value_iteration(m, with(Evaluator::structured));
        EXPECT_EQ(fp.policy, rb.policy) << n;
        EXPECT_EQ(gj.policy, rb.policy) << n;
        EXPECT_EQ(rvi.policy, rb.policy) << n;
        EXPECT_LE(max_abs_diff(fp.evaluation.values, rb.evaluation.values), 1e-8);
        EXPECT_LE(max_abs_diff(gj.evaluation.values, rb.evaluation.values), 1e-8);
        EXPECT_NEAR(rvi.evaluation.rho, rb.evaluation.rho, 1e-8);
    }
}

TEST(Solvers, OptionValidationAndDeadline) {
    auto mdp = oracle::toy_mdp({0.5});
    SolverOptions o;
    o.epsilon = 0;
    EXPECT_THROW(policy_iteration(mdp.core, o), ConfigError);
    o = {};
    o.max_iterations = 0;
    EXPECT_THROW(relative_value_iteration(mdp.core, o), ConfigError);
    o = {};
    o.deadline = Clock::now() - std::chrono::seconds(1);
    EXPECT_THROW(policy_iteration(mdp.core, o), TimeoutError);
}
