#include "doctest.h"

#include <cmath>

#include "dhp/explorer.hpp"
#include "dhp/harness.hpp"

using namespace dhp;

namespace {

std::vector<StateId> ids(std::initializer_list<std::uint32_t> xs) {
    std::vector<StateId> out;
    for (auto x : xs) out.push_back(StateId{x});
    return out;
}

}  // namespace

TEST_CASE("triplet novelty reward") {
    const std::vector<int> q{2, 4};
    TripletTable table;

    SUBCASE("fresh triplets at both resolutions pay 2") {
        const auto r = exploration_reward(table, ids({0, 1, 2, 3, 4}), q);
        CHECK(r[0] == 0.0);
        CHECK(r[1] == 0.0);
        CHECK(r[2] == 1.0);
        CHECK(r[3] == 1.0);
        CHECK(r[4] == 2.0);
    }
    SUBCASE("a triplet seen three times pays a quarter") {
        for (int i = 0; i < 3; ++i) table.increment(StateId{0}, StateId{1}, StateId{2}, 2);
        const auto c = ids({0, 1, 2});
        CHECK(triplet_novelty(table, c, 2, q) == 0.25);
    }
    SUBCASE("below the smallest resolution there is nothing to score") {
        const auto c = ids({5, 6});
        CHECK(triplet_novelty(table, c, 1, q) == 0.0);
    }
    SUBCASE("repeats decay monotonically and never exceed one per term") {
        const auto c = ids({3, 4, 5});
        double prev = 2.0;
        for (int i = 0; i < 20; ++i) {
            const double r = triplet_novelty(table, c, 2, std::vector<int>{2});
            CHECK(r <= 1.0);
            CHECK(r < prev);
            prev = r;
            record_triplets(table, c, 2, std::vector<int>{2});
        }
    }
    SUBCASE("a repeat inside one sequence already pays less") {
        const auto r = exploration_reward(table, ids({0, 1, 0, 1, 0}), std::vector<int>{2});
        CHECK(r[2] == 1.0);
        CHECK(r[4] == 0.5);
        CHECK(table.distinct(2) == 2);
    }
}

TEST_CASE("memory buffer") {
    MemoryBuffer mem(2, 8);
    CHECK(mem.slots() == 3);
    for (auto s : mem.extract(0)) CHECK(s == kNullState);

    std::vector<StateId> log;
    for (std::uint32_t t = 0; t <= 40; ++t) {
        log.push_back(StateId{100 + t});
        mem.observe(t, log.back());
        const auto m = mem.extract(t);
        if (t == 8) {
            CHECK(m[0] == StateId{106});
            CHECK(m[1] == StateId{104});
            CHECK(m[2] == kNullState);  // s_0 is never stored
        }
        if (t % 2 == 0) {
            // replay equivalence: slot j holds s_{t - K 2^j} when that step exists and is not the start
            for (std::size_t j = 0; j < 3; ++j) {
                const std::size_t off = std::size_t{2} << j;
                if (t > off) CHECK(m[j] == log[t - off]);
                else CHECK(m[j] == kNullState);
            }
        }
    }
    mem.reset();
    for (auto s : mem.extract(40)) CHECK(s == kNullState);
    CHECK_THROWS_AS(MemoryBuffer(2, 6), ConfigError);
}

TEST_CASE("explorer update") {
    ReturnConfig cfg;
    ExplorerPolicy policy(4, 1, 0.5, 0.5, 0.0);
    const auto key = policy.key(StateId{1}, std::vector<StateId>{kNullState});

    SUBCASE("zero advantage leaves logits alone") {
        ExplorerRollout ro{{key}, {2}, {0.0}, 0.0};
        update_explorer(policy, std::vector<ExplorerRollout>{ro}, cfg);
        for (double p : policy.probabilities(key)) CHECK(p == doctest::Approx(0.25));
    }
    SUBCASE("positive advantage raises the chosen goal") {
        ExplorerRollout ro{{key}, {2}, {1.0}, 0.0};
        update_explorer(policy, std::vector<ExplorerRollout>{ro}, cfg);
        CHECK(policy.probabilities(key)[2] > 0.25);
        CHECK(policy.value(key) > 0.0);
    }
    SUBCASE("empty input") {
        CHECK_THROWS_AS(update_explorer(policy, std::vector<ExplorerRollout>{}, cfg), std::invalid_argument);
    }
}

TEST_CASE("explorer gradient matches finite differences of its loss") {
    ReturnConfig cfg;
    const double lr = 0.1, eta = 0.2;
    ExplorerPolicy policy(3, 1, lr, 0.5, eta);
    const auto k1 = policy.key(StateId{0}, std::vector<StateId>{kNullState});
    const auto k2 = policy.key(StateId{1}, std::vector<StateId>{StateId{0}});
    policy.mutable_logits(k1) = {0.3, -0.2, 0.5};
    policy.mutable_logits(k2) = {1.0, 0.0, -0.4};
    policy.mutable_value(k1) = 0.2;
    policy.mutable_value(k2) = -0.1;
    const std::vector<ExplorerRollout> rollouts{{{k1, k2}, {2, 0}, {0.5, 1.0}, 0.3}, {{k2}, {1}, {0.2}, 0.0}};

    // advantages held fixed at the pre-update critic
    std::vector<std::vector<double>> adv;
    for (const auto& ro : rollouts) {
        const auto G = explorer_returns(policy, ro, cfg);
        std::vector<double> a;
        for (std::size_t j = 0; j < G.size(); ++j) a.push_back(G[j] - policy.value(ro.keys[j]));
        adv.push_back(a);
    }
    auto loss = [&](const ExplorerPolicy& p) {
        double l = 0;
        for (std::size_t r = 0; r < rollouts.size(); ++r) {
            for (std::size_t j = 0; j < rollouts[r].keys.size(); ++j) {
                const auto probs = p.probabilities(rollouts[r].keys[j]);
                l -= (adv[r][j] * std::log(probs[rollouts[r].goals[j]]) + eta * entropy(probs)) / rollouts.size();
            }
        }
        return l;
    };

    ExplorerPolicy updated = policy;
    update_explorer(updated, rollouts, cfg);
    const double h = 1e-6;
    for (auto key : {k1, k2}) {
        for (std::size_t c = 0; c < 3; ++c) {
            ExplorerPolicy plus = policy, minus = policy;
            plus.mutable_logits(key)[c] += h;
            minus.mutable_logits(key)[c] -= h;
            const double fd = (loss(plus) - loss(minus)) / (2 * h);
            const double step = (updated.mutable_logits(key)[c] - policy.mutable_logits(key)[c]) / lr;
            CHECK(std::abs(-fd - step) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("exploration episodes") {
    const RoomMaze env(default_maze_layout(5));
    ReturnConfig rc;
    ExplorerConfig cfg;
    cfg.k = 8;
    cfg.horizon = 64;
    cfg.imagined_rollouts = 4;
    CHECK(cfg.decisions() == 8);

    auto run = [&](std::uint64_t seed) {
        ExplorerPolicy policy(env.state_count(), MemoryBuffer(cfg.k, cfg.memory).slots(), cfg.learning_rate,
                              cfg.value_learning_rate, cfg.entropy_coeff);
        TripletTable table;
        Rng rng(seed);
        return run_exploration(env, policy, table, cfg, 5, rc, rng);
    };
    const auto a = run(3), b = run(3);
    REQUIRE(a.episodes.size() == 5);
    for (std::size_t e = 0; e < 5; ++e) {
        CHECK(a.episodes[e].states == b.episodes[e].states);
        CHECK(a.episodes[e].states.size() == 65);
        CHECK(a.episodes[e].coarse.size() == 9);
        CHECK(a.episodes[e].goals.size() == 8);
        for (std::size_t t = 0; t + 1 < a.episodes[e].states.size(); ++t) {
            CHECK(env.reachable(a.episodes[e].states[t], a.episodes[e].states[t + 1], 1));
        }
        for (std::size_t j = 0; j < a.episodes[e].coarse.size(); ++j) {
            CHECK(a.episodes[e].coarse[j] == a.episodes[e].states[j * cfg.k]);
        }
    }
    for (std::size_t e = 1; e < a.coverage.size(); ++e) CHECK(a.coverage[e] >= a.coverage[e - 1]);

    cfg.horizon = 60;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("episode log round-trips and feeds hindsight tasks") {
    ExplorationEpisode ep;
    ep.states = ids({0, 1, 2, 7});
    ep.coarse = ids({0, 2});
    ep.goals = ids({2});
    ep.rewards = {0.0, 1.0};
    const std::vector<ExplorationEpisode> eps{ep};
    const auto back = episodes_from_jsonl(episodes_to_jsonl(eps));
    REQUIRE(back.size() == 1);
    CHECK(back[0].states == ep.states);
    CHECK(back[0].coarse == ep.coarse);
    CHECK(back[0].rewards == ep.rewards);

    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto t = sample_logged_task(eps, rng);
        const auto pi = std::find(ep.states.begin(), ep.states.end(), t.init);
        const auto pj = std::find(ep.states.begin(), ep.states.end(), t.goal);
        CHECK(pi < pj);
    }
    CHECK_THROWS_AS(sample_logged_task(std::vector<ExplorationEpisode>{}, rng), std::invalid_argument);
}
