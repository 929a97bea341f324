#include "doctest.h"

#include <cmath>

#include "dhp/oracle.hpp"
#include "dhp/returns.hpp"

using namespace dhp;

namespace {

/// D=1 tree with the given child flags; rewards follow the flags.
TreeTrajectory small_tree(int depth, std::vector<std::uint8_t> terminal) {
    auto t = TreeTrajectory::filled(depth, Task{});
    t.terminal = std::move(terminal);
    for (std::size_t i = 0; i < t.size(); ++i) t.rewards[i] = t.terminal[i];
    t.values.assign(t.size(), 0.0);
    return t;
}

double sup(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    ReturnConfig cfg;
    CHECK(cfg.gamma == 0.95);
    CHECK(cfg.lambda == 0.95);
    CHECK(cfg.gamma_linear == 0.99);
    CHECK(cfg.lambda_contraction_factor() == doctest::Approx(0.0475 / 0.0975).epsilon(1e-12));
    cfg.gamma = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.gamma = 0.9;
    cfg.lambda = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("monte-carlo tree return") {
    const ReturnConfig cfg;
    CHECK(tree_mc_return(small_tree(1, {1, 1, 1}), cfg)[0] == 0.0);
    CHECK(tree_mc_return(small_tree(1, {0, 1, 1}), cfg)[0] == 1.0);

    // Left subtree closes at depth 2, the right branch is cut off without terminating:
    // the root gets nothing, the left ancestor still earns its return.
    auto t = small_tree(2, {0, 0, 0, 1, 1, 0, 0});
    const auto g = tree_mc_return(t, cfg);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
    CHECK(g[2] == 0.0);

    // bootstrapping the truncated leaves with their values
    t.values = {0, 0, 0, 0, 0, 0.5, 0.7};
    const auto b = tree_mc_return(t, cfg, t.values);
    CHECK(b[2] == doctest::Approx(cfg.gamma * 0.5));
    CHECK(b[0] == doctest::Approx(cfg.gamma * std::min(1.0, cfg.gamma * 0.5)));
}

TEST_CASE("one-step tree return") {
    const ReturnConfig cfg;
    CHECK(tree_one_step_return(small_tree(1, {0, 1, 1}), std::vector<double>(3, 0.0), cfg)[0] == 1.0);
    auto t = small_tree(1, {0, 0, 0});
    const std::vector<double> v{0.0, 0.5, 0.9};
    CHECK(tree_one_step_return(t, v, cfg)[0] == doctest::Approx(0.475).epsilon(1e-15));
    CHECK(tree_one_step_return(small_tree(1, {1, 1, 1}), v, cfg)[0] == 0.0);
}

TEST_CASE("lambda return reductions and the recursive oracle") {
    Rng rng(11);
    const ReturnConfig cfg;
    ReturnConfig zero = cfg, one = cfg;
    zero.lambda = 0.0;
    one.lambda = 1.0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto t = oracle::random_tree(rng, 4, cfg.gamma);
        CHECK(tree_lambda_return(t, t.values, zero) == tree_one_step_return(t, t.values, zero));
        CHECK(tree_lambda_return(t, t.values, one) == tree_mc_return(t, one, t.values));
        CHECK(sup(tree_lambda_return(t, t.values, cfg),
                  oracle::oracle_tree_return(t, t.values, cfg, oracle::ReturnKind::lambda)) <= 1e-12);
        CHECK(sup(tree_mc_return(t, cfg), oracle::oracle_tree_return(t, {}, cfg, oracle::ReturnKind::mc)) <= 1e-12);
    }
}

TEST_CASE("linear lambda return") {
    ReturnConfig cfg;
    CHECK(linear_lambda_return(std::vector<double>{1.0}, std::vector<double>{0.0}, cfg)[0] == 1.0);

    const std::vector<double> r{0.3, -0.2, 1.0}, v{0.5, 2.0, -1.0};
    cfg.lambda = 0.0;
    const auto td = linear_lambda_return(r, v, cfg);
    for (std::size_t k = 0; k < r.size(); ++k) CHECK(td[k] == doctest::Approx(r[k] + cfg.gamma_linear * v[k]));

    // brute-force expansion of the length-3 recursion
    cfg.lambda = 0.7;
    const double g = cfg.gamma_linear, l = cfg.lambda;
    const double G2 = r[2] + g * v[2];
    const double G1 = r[1] + g * ((1 - l) * v[1] + l * G2);
    const double G0 = r[0] + g * ((1 - l) * v[0] + l * G1);
    const auto out = linear_lambda_return(r, v, cfg);
    CHECK(out[0] == doctest::Approx(G0).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(G1).epsilon(1e-14));
    CHECK(out[2] == doctest::Approx(G2).epsilon(1e-14));

    CHECK_THROWS_AS(linear_lambda_return(r, std::vector<double>{1.0}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(linear_lambda_return(std::vector<double>{}, std::vector<double>{}, cfg), std::invalid_argument);
}

TEST_CASE("reward schemes") {
    const RoomMaze env(generate_maze_layout(5, 4, 7));
    auto t = TreeTrajectory::filled(1, Task{StateId{0}, StateId{2}});
    t.nodes[1] = Task{StateId{0}, StateId{1}};
    t.nodes[2] = Task{StateId{1}, StateId{2}};
    t = mark_terminal(std::move(t), env, 1);
    const ReturnConfig cfg;
    t.values = {0.0, 0.0, 0.0};

    auto neg = t;
    assign_rewards(neg, env, RewardScheme::neg_rew);
    CHECK(neg.rewards == std::vector<double>{-1.0, 0.0, 0.0});
    CHECK(scheme_returns(neg, neg.values, cfg, RewardScheme::neg_rew)[0] == 0.0);

    auto dist = t;
    assign_rewards(dist, env, RewardScheme::dist_sum);
    CHECK(dist.rewards[0] == doctest::Approx(-2.0 / env.diameter()));
    CHECK(dist.rewards[1] == doctest::Approx(-1.0 / env.diameter()));
    CHECK(scheme_returns(dist, dist.values, cfg, RewardScheme::dist_sum)[0] ==
          doctest::Approx(-2.0 / env.diameter()));

    CHECK(parse_reward_scheme("default") == RewardScheme::standard);
    CHECK(to_string(RewardScheme::gae) == "gae");
    CHECK_THROWS_AS(parse_reward_scheme("nope"), ConfigError);
}

TEST_CASE("tree gae") {
    const ReturnConfig cfg;
    auto t = small_tree(1, {0, 1, 0});
    t.values = {0.4, 0.0, 0.6};
    const auto a = tree_gae_advantage(t, t.values, cfg);
    // delta_left = 1 + 0 - 0.4, delta_right = 0 + gamma * 0.6 - 0.4; the right leaf is truncated (A = 0)
    CHECK(a[0] == doctest::Approx(std::min(0.6, cfg.gamma * 0.6 - 0.4)));
    CHECK(a[1] == 0.0);
    // critic target for gae is advantage + value
    CHECK(scheme_returns(t, t.values, cfg, RewardScheme::gae)[0] == doctest::Approx(a[0] + 0.4));
}

TEST_CASE("bellman operators") {
    ReturnConfig cfg;
    Rng rng(5);

    SUBCASE("zero rewards keep zero values fixed") {
        auto mdp = oracle::random_tree_mdp(rng);
        for (auto& node : mdp.branches) {
            for (auto& b : node) b.left_reward = b.right_reward = 0.0;
        }
        const std::vector<double> z(mdp.size(), 0.0);
        for (auto kind : {OperatorKind::one_step, OperatorKind::monte_carlo, OperatorKind::lambda}) {
            for (double x : bellman_operator(kind, mdp, z, cfg)) CHECK(x == 0.0);
        }
    }

    SUBCASE("contraction on random instances") {
        for (int trial = 0; trial < 200; ++trial) {
            const auto mdp = oracle::random_tree_mdp(rng);
            std::vector<double> v1(mdp.size()), v2(mdp.size());
            for (auto& x : v1) x = 20.0 * uniform_real(rng);
            for (auto& x : v2) x = 20.0 * uniform_real(rng);
            const double dv = sup(v1, v2);
            const double d0 = sup(bellman_operator(OperatorKind::one_step, mdp, v1, cfg),
                                  bellman_operator(OperatorKind::one_step, mdp, v2, cfg));
            const double dl = sup(bellman_operator(OperatorKind::lambda, mdp, v1, cfg),
                                  bellman_operator(OperatorKind::lambda, mdp, v2, cfg));
            CHECK(d0 <= cfg.gamma * dv + 1e-12);
            CHECK(dl <= cfg.lambda_contraction_factor() * dv + 1e-12);
        }
    }

    SUBCASE("iterating the lambda operator shrinks successive differences") {
        const auto mdp = oracle::random_tree_mdp(rng);
        std::vector<double> v(mdp.size());
        for (auto& x : v) x = 20.0 * uniform_real(rng);
        auto next = bellman_operator(OperatorKind::lambda, mdp, v, cfg);
        double prev = sup(next, v);
        for (int k = 0; k < 10 && prev > 1e-10; ++k) {
            const auto after = bellman_operator(OperatorKind::lambda, mdp, next, cfg);
            const double d = sup(after, next);
            CHECK(d <= cfg.lambda_contraction_factor() * prev + 1e-12);
            prev = d;
            next = after;
        }
    }

    SUBCASE("fixed-point iteration converges within the geometric budget") {
        const auto mdp = oracle::random_tree_mdp(rng);
        std::vector<double> v(mdp.size(), 0.0);
        const int budget = static_cast<int>(std::ceil(std::log(1e-8) / std::log(cfg.gamma)));
        double residual = 1.0;
        for (int k = 0; k < budget; ++k) {
            const auto nv = bellman_operator(OperatorKind::one_step, mdp, v, cfg);
            residual = sup(nv, v);
            v = nv;
        }
        CHECK(residual <= 1e-8);
    }

    SUBCASE("a chain with identical children is a linear trajectory") {
        const std::vector<double> r{0.2, 1.0, -0.5, 0.3, 0.9};
        TreeMdp mdp;
        const std::size_t n = r.size() + 1;
        mdp.branches.resize(n);
        mdp.terminal.assign(n, 0);
        mdp.terminal[n - 1] = 1;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            mdp.branches[i] = {TreeMdpBranch{1.0, static_cast<int>(i + 1), static_cast<int>(i + 1), r[i], r[i]}};
        }
        const std::vector<double> v(n, 0.0);
        const auto mc = bellman_operator(OperatorKind::monte_carlo, mdp, v, cfg);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            double expected = 0.0, disc = 1.0;
            for (std::size_t k = i; k + 1 < n; ++k) {
                expected += disc * r[k];
                disc *= cfg.gamma;
            }
            CHECK(mc[i] == doctest::Approx(expected).epsilon(1e-12));
        }
        std::vector<double> rewards(r), values(r.size(), 0.0);
        ReturnConfig lin = cfg;
        lin.gamma_linear = cfg.gamma;
        lin.lambda = 1.0;
        CHECK(linear_lambda_return(rewards, values, lin)[0] == doctest::Approx(mc[0]).epsilon(1e-12));
    }
}

TEST_CASE("min-child returns are non-expansive in the children") {
    Rng rng(9);
    const auto rep = oracle::min_lemma_check(20000, rng);
    CHECK(rep.passed());
    CHECK(rep.max_ratio <= 1.0);
}
