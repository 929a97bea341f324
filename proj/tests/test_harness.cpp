#include "doctest.h"

#include <cstdlib>

#include "dhp/harness.hpp"
#include "json.hpp"

using namespace dhp;

namespace {

ExperimentConfig lights_out(int size, int updates) {
    ExperimentConfig cfg;
    cfg.size = size;
    cfg.updates = updates;
    cfg.eval_episodes = 50;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    ExperimentConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.depth = 9;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.depth = 5;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(parse_run_mode("sideways"), ConfigError);
    CHECK(parse_task_source("random_explorer") == TaskSource::random_explorer);
    CHECK(parse_env_kind("maze") == EnvKind::room_maze);
    const auto j = nlohmann::json::parse(config_to_json(ExperimentConfig{}));
    CHECK(j["depth"] == 5);
    CHECK(j["infer_depth"] == 8);
}

TEST_CASE("same seed, same stream") {
    auto cfg = lights_out(2, 150);
    cfg.eval_every = 50;
    std::vector<std::string> a, b;
    run_training(cfg, [&](const MetricsRecord& r) { a.push_back(r.to_json()); });
    run_training(cfg, [&](const MetricsRecord& r) { b.push_back(r.to_json()); });
    REQUIRE(a.size() == 3);
    CHECK(a == b);
    cfg.seed = 1;
    const auto c = run_training(cfg);
    CHECK(c.planner->rows() != run_training(lights_out(2, 150)).planner->rows());
}

TEST_CASE("explore-only runs emit coverage and train no planner") {
    ExperimentConfig cfg;
    cfg.env = EnvKind::room_maze;
    cfg.size = 5;
    cfg.mode = RunMode::explore_only;
    cfg.task_source = TaskSource::explorer;
    cfg.explore_episodes = 20;
    cfg.eval_every = 10;
    const auto res = run_training(cfg);
    CHECK(res.planner == nullptr);
    REQUIRE(res.records.size() == 2);
    for (const auto& r : res.records) REQUIRE(r.explorer_coverage.has_value());
    CHECK(*res.records[1].explorer_coverage >= *res.records[0].explorer_coverage);
    CHECK(res.logged.size() == 20);
}

TEST_CASE("evaluation reads the policy only and tells trained from untrained") {
    const auto cfg = lights_out(2, 400);
    const auto env = make_environment(cfg);
    const auto res = run_training(cfg);
    const auto before = res.planner->rows();
    const auto trained = run_eval(*res.planner, *env, cfg);
    CHECK(res.planner->rows() == before);
    CHECK(run_eval(*res.planner, *env, cfg).to_json() == trained.to_json());

    const PlannerPolicy untrained(TaskFrame::for_env(*env));
    const auto base = run_eval(untrained, *env, cfg);
    CHECK(trained.success_rate > base.success_rate);
}

TEST_CASE("2x2 lights out is solved with short plans") {
    const auto res = run_training(lights_out(2, 500));
    const auto& last = res.records.back();
    CHECK(last.success_rate == 1.0);
    CHECK(last.avg_path_length >= 2.0);
    CHECK(last.avg_path_length <= 3.0);
    CHECK(last.optimality_ratio >= 1.0);
}

TEST_CASE("evaluation tasks") {
    ExperimentConfig cfg;
    cfg.env = EnvKind::room_maze;
    cfg.size = 5;
    const auto env = make_environment(cfg);
    const auto tasks = eval_tasks(*env, cfg);
    CHECK(tasks.size() == 100);
    CHECK(eval_tasks(*env, cfg) == tasks);
    for (const auto& t : tasks) CHECK(t.init != t.goal);

    const auto lo = make_environment(lights_out(3, 1));
    for (const auto& t : eval_tasks(*lo, lights_out(3, 1))) {
        CHECK(t.goal == StateId{0});
        CHECK(t.init != t.goal);
    }
}

TEST_CASE("offline runs report the flat baseline") {
    ExperimentConfig cfg;
    cfg.env = EnvKind::room_maze;
    cfg.size = 5;
    cfg.mode = RunMode::offline;
    cfg.updates = 500;
    cfg.dataset_episodes = 20;
    cfg.eval_episodes = 10;
    cfg.eval_min_distance = 4;
    const auto res = run_training(cfg);
    REQUIRE(res.offline != nullptr);
    REQUIRE_FALSE(res.records.empty());
    CHECK(res.records.back().baseline_success_rate.has_value());
    CHECK(res.dataset.size() == 20);
    CHECK_FALSE(res.offline->buffer.landmarks.empty());
}

TEST_CASE("ablation labels and json") {
    auto cfg = lights_out(2, 100);
    cfg.eval_episodes = 10;
    auto neg = cfg;
    neg.reward_scheme = RewardScheme::neg_rew;
    neg.depth = 3;
    const auto rows = run_ablation({cfg, neg}, {0, 1});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].label == "default/D=5");
    CHECK(rows[1].label == "neg_rew/D=3");
    CHECK(rows[0].finals.size() == 2);
    const auto j = nlohmann::json::parse(ablation_to_json(rows));
    CHECK(j.size() == 2);
}

TEST_CASE("output directory") {
    CHECK(output_dir("here") == "here");
    ::setenv("DHP_OUT_DIR", "/tmp/dhp-out", 1);
    CHECK(output_dir("") == "/tmp/dhp-out");
    ::unsetenv("DHP_OUT_DIR");
    CHECK(output_dir("") == "runs");
}
