#include "dhp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace dhp {

using nlohmann::json;

RunMode parse_run_mode(const std::string& name) {
    if (name == "online") return RunMode::online;
    if (name == "offline") return RunMode::offline;
    if (name == "explore-only" || name == "explore_only") return RunMode::explore_only;
    throw ConfigError("unknown mode: " + name);
}

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::online: return "online";
        case RunMode::offline: return "offline";
        case RunMode::explore_only: return "explore-only";
    }
    return "?";
}

TaskSource parse_task_source(const std::string& name) {
    if (name == "uniform") return TaskSource::uniform;
    if (name == "explorer") return TaskSource::explorer;
    if (name == "random-explorer" || name == "random_explorer") return TaskSource::random_explorer;
    throw ConfigError("unknown task source: " + name);
}

std::string to_string(TaskSource source) {
    switch (source) {
        case TaskSource::uniform: return "uniform";
        case TaskSource::explorer: return "explorer";
        case TaskSource::random_explorer: return "random-explorer";
    }
    return "?";
}

EnvKind parse_env_kind(const std::string& name) {
    if (name == "lightsout") return EnvKind::lights_out;
    if (name == "maze") return EnvKind::room_maze;
    throw ConfigError("unknown env: " + name);
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("experiment config: " + what); };
    if (env == EnvKind::lights_out && (size < 1 || size > LightsOut::kMaxSide)) fail("LightsOut size must be 1..3");
    if (env == EnvKind::room_maze && layout_path.empty() && size < 2) fail("maze size must be >= 2");
    if (depth < 1) fail("depth must be >= 1");
    if (infer_depth < depth) fail("inference depth must be >= training depth");
    if (k_reach < 1) fail("k_reach must be >= 1");
    returns.validate();
    if (!(learning_rate > 0.0) || !(value_learning_rate > 0.0)) fail("learning rates must be positive");
    if (entropy_coeff < 0.0) fail("entropy coefficient must be >= 0");
    if (batch_size < 1) fail("batch size must be >= 1");
    if (updates < 0) fail("updates must be >= 0");
    if (eval_every < 0) fail("eval_every must be >= 0");
    if (eval_episodes < 1) fail("eval_episodes must be >= 1");
    if (!(explore_fraction > 0.0 && explore_fraction <= 1.0)) fail("explore_fraction must be in (0, 1]");
    if (mode == RunMode::explore_only || task_source != TaskSource::uniform) {
        if (explore_episodes < 1) fail("explore_episodes must be >= 1");
        explorer.validate();
    }
    if (mode == RunMode::offline) {
        offline.validate();
        if (dataset_episodes < 1 || dataset_horizon < 2) fail("dataset needs episodes of at least 2 steps");
        if (!(expert_epsilon >= 0.0 && expert_epsilon <= 1.0)) fail("expert epsilon must be in [0, 1]");
        if (eval_min_distance < 1) fail("eval_min_distance must be >= 1");
    }
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j{
        {"env", cfg.env == EnvKind::lights_out ? "lightsout" : "maze"},
        {"size", cfg.size},
        {"layout", cfg.layout_path},
        {"depth", cfg.depth},
        {"infer_depth", cfg.infer_depth},
        {"k_reach", cfg.k_reach},
        {"gamma", cfg.returns.gamma},
        {"lambda", cfg.returns.lambda},
        {"gamma_linear", cfg.returns.gamma_linear},
        {"reward_scheme", to_string(cfg.reward_scheme)},
        {"learning_rate", cfg.learning_rate},
        {"value_learning_rate", cfg.value_learning_rate},
        {"entropy_coeff", cfg.entropy_coeff},
        {"batch_size", cfg.batch_size},
        {"updates", cfg.updates},
        {"eval_every", cfg.eval_every},
        {"eval_episodes", cfg.eval_episodes},
        {"seed", cfg.seed},
        {"eval_seed", cfg.eval_seed},
        {"mode", to_string(cfg.mode)},
        {"task_source", to_string(cfg.task_source)},
        {"explore_fraction", cfg.explore_fraction},
        {"explore_episodes", cfg.explore_episodes},
    };
    if (cfg.mode == RunMode::offline) {
        j["dataset_episodes"] = cfg.dataset_episodes;
        j["dataset_horizon"] = cfg.dataset_horizon;
        j["expert_epsilon"] = cfg.expert_epsilon;
        j["eval_min_distance"] = cfg.eval_min_distance;
    }
    return j.dump();
}

MazeLayout default_maze_layout(int side) {
    if (side == 5) return generate_maze_layout(5, 4, 7);
    if (side == 7) return generate_maze_layout(7, 8, 11);
    return generate_maze_layout(side, side + 1, static_cast<std::uint64_t>(side));
}

EnvPtr make_environment(const ExperimentConfig& cfg) {
    if (cfg.env == EnvKind::lights_out) return std::make_shared<LightsOut>(cfg.size);
    if (!cfg.layout_path.empty()) return std::make_shared<RoomMaze>(load_maze_layout(cfg.layout_path));
    return std::make_shared<RoomMaze>(default_maze_layout(cfg.size));
}

std::string MetricsRecord::to_json() const {
    json j{
        {"step", step},
        {"success_rate", success_rate},
        {"avg_path_length", avg_path_length},
        {"path_length_std", path_length_std},
        {"avg_path_length_all", avg_path_length_all},
        {"optimality_ratio", optimality_ratio},
        {"mean_return", mean_return},
        {"mean_plan_depth", mean_plan_depth},
    };
    if (explorer_coverage) j["explorer_coverage"] = *explorer_coverage;
    if (baseline_success_rate) j["baseline_success_rate"] = *baseline_success_rate;
    return j.dump();
}

namespace {

StateId corner_room(int side, int cx, int cy, Rng& rng) {
    const int block = std::min(2, side);
    const int x = cx * (side - block) + static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(block)));
    const int y = cy * (side - block) + static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(block)));
    return StateId{static_cast<std::uint32_t>(y * side + x)};
}

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads over contiguous ranges.
template <class Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

struct EpisodeOutcome {
    bool success = false;
    double length = 0.0;
    double cap = 0.0;
    double ratio = 0.0;
    double root_return = 0.0;
    std::optional<int> plan_depth;
};

int tree_level(std::size_t i) {
    int level = 0;
    while (i > 0) {
        i = TreeTrajectory::parent(i);
        ++level;
    }
    return level;
}

/// Height of the plan if every leaf terminated.
std::optional<int> plan_height(const TreeTrajectory& tree) {
    for (std::size_t i = tree.internal_count(); i < tree.size(); ++i) {
        if (!tree.is_terminal(i)) return std::nullopt;
    }
    int height = 0;
    for (std::size_t i = 0; i < tree.size(); ++i) {
        const bool first = tree.is_terminal(i) && (i == 0 || !tree.is_terminal(TreeTrajectory::parent(i)));
        if (first) height = std::max(height, tree_level(i));
    }
    return height;
}

MetricsRecord summarize(const std::vector<EpisodeOutcome>& outcomes) {
    MetricsRecord rec;
    double n_ok = 0, sum = 0, sq = 0, all = 0, ratio = 0, ret = 0, depth = 0, n_depth = 0;
    for (const auto& o : outcomes) {
        ret += o.root_return;
        if (o.plan_depth) {
            depth += *o.plan_depth;
            ++n_depth;
        }
        if (o.success) {
            ++n_ok;
            sum += o.length;
            sq += o.length * o.length;
            ratio += o.ratio;
            all += o.length;
        } else {
            all += o.cap;
        }
    }
    const double n = static_cast<double>(outcomes.size());
    rec.success_rate = n_ok / n;
    if (n_ok > 0) {
        rec.avg_path_length = sum / n_ok;
        rec.path_length_std = std::sqrt(std::max(0.0, sq / n_ok - rec.avg_path_length * rec.avg_path_length));
        rec.optimality_ratio = ratio / n_ok;
    }
    rec.avg_path_length_all = all / n;
    rec.mean_return = ret / n;
    rec.mean_plan_depth = n_depth > 0 ? depth / n_depth : 0.0;
    return rec;
}

}  // namespace

std::vector<Task> eval_tasks(const Environment& env, const ExperimentConfig& cfg) {
    Rng rng(derive_seed(cfg.eval_seed, 0));
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(cfg.eval_episodes));
    const auto* maze = dynamic_cast<const RoomMaze*>(&env);
    while (tasks.size() < static_cast<std::size_t>(cfg.eval_episodes)) {
        if (cfg.mode == RunMode::offline) {
            tasks.push_back(sample_task(env, rng, TaskConstraint::at_least(cfg.eval_min_distance)));
        } else if (maze) {
            const int side = maze->layout().side;
            const auto c = static_cast<int>(uniform_index(rng, 4));
            const int cx = c & 1, cy = c >> 1;
            const Task t{corner_room(side, cx, cy, rng), corner_room(side, 1 - cx, 1 - cy, rng)};
            if (t.init != t.goal) tasks.push_back(t);
        } else {
            tasks.push_back(sample_task(env, rng, TaskConstraint::solvable(1)));
        }
    }
    return tasks;
}

TreeTrajectory greedy_plan_tree(const PlannerPolicy& policy, const Environment& env, Task task, int depth,
                                int k_reach) {
    auto tree = TreeTrajectory::filled(depth, task);
    std::vector<std::uint8_t> closed(tree.size(), 0);
    Rng unused(0);
    for (std::size_t i = 0; i < tree.internal_count(); ++i) {
        const Task node = tree.nodes[i];
        const auto l = TreeTrajectory::left(i), r = TreeTrajectory::right(i);
        if (!closed[i] && env.reachable(node.init, node.goal, k_reach)) closed[i] = 1;
        if (closed[i]) {
            tree.nodes[l] = tree.nodes[r] = node;
            closed[l] = closed[r] = 1;
            continue;
        }
        const auto choice = policy_sample(policy, node, unused, SampleMode::greedy);
        tree.actions[i] = choice;
        tree.nodes[l] = Task{node.init, choice.subgoal};
        tree.nodes[r] = Task{choice.subgoal, node.goal};
    }
    return mark_terminal(std::move(tree), env, k_reach);
}

MetricsRecord run_eval(const PlannerPolicy& policy, const Environment& env, const ExperimentConfig& cfg) {
    const auto tasks = eval_tasks(env, cfg);
    std::vector<EpisodeOutcome> outcomes(tasks.size());
    const bool lights = env.kind() == EnvKind::lights_out;

    parallel_for(tasks.size(), [&](std::size_t e) {
        const Task task = tasks[e];
        EpisodeOutcome& out = outcomes[e];
        const auto tree = greedy_plan_tree(policy, env, task, cfg.infer_depth, cfg.k_reach);
        out.root_return = tree_mc_return(tree, cfg.returns)[0];
        out.plan_depth = plan_height(tree);
        const int optimal = env.distance(task.init, task.goal);

        if (lights) {
            // Single attempt: the whole plan must close, and its presses are the path.
            out.cap = static_cast<double>(std::size_t{1} << cfg.infer_depth);
            if (!out.plan_depth) return;
            int presses = 0;
            for (std::size_t i = 0; i < tree.size(); ++i) {
                const bool first = tree.is_terminal(i) && (i == 0 || !tree.is_terminal(TreeTrajectory::parent(i)));
                if (first && tree.nodes[i].init != tree.nodes[i].goal) ++presses;
            }
            out.success = true;
            out.length = presses;
            out.ratio = optimal > 0 ? presses / static_cast<double>(optimal) : 1.0;
            return;
        }

        Rng rng(derive_seed(cfg.eval_seed, e + 1));
        const int cap = 4 * optimal;
        out.cap = cap;
        StateId s = task.init;
        int steps = 0;
        while (s != task.goal && steps < cap) {
            const auto stack =
                unroll_inference(policy, env, Task{s, task.goal}, cfg.infer_depth, cfg.k_reach, InferenceMode::greedy, rng);
            if (stack.complete) s = env.move_toward(s, stack.next(), 1);
            ++steps;
        }
        if (s == task.goal) {
            out.success = true;
            out.length = steps;
            out.ratio = optimal > 0 ? steps / static_cast<double>(optimal) : 1.0;
        }
    });
    return summarize(outcomes);
}

OfflineAgent::OfflineAgent(std::uint32_t state_count, int action_count, const OfflineConfig& cfg)
    : values(state_count, cfg.stats_half_life),
      manager(TaskFrame(state_count, TaskEncoding::absolute), cfg.actor_lr, 0.0),
      worker(state_count, action_count),
      flat(state_count, action_count) {
    buffer.capacity = static_cast<std::size_t>(cfg.buffer_capacity);
}

MetricsRecord run_offline_eval(const OfflineAgent& agent, const Environment& env, const ExperimentConfig& cfg) {
    const auto tasks = eval_tasks(env, cfg);
    std::vector<EpisodeOutcome> dhp(tasks.size()), flat(tasks.size());

    parallel_for(tasks.size(), [&](std::size_t e) {
        const Task task = tasks[e];
        const int optimal = env.distance(task.init, task.goal);
        const int cap = 4 * optimal;

        auto& out = dhp[e];
        out.cap = cap;
        const auto first = offline_plan(agent.manager, agent.values, agent.buffer, task, cfg.offline, cfg.infer_depth);
        if (first.complete) out.plan_depth = first.policy_calls;
        StateId s = task.init;
        int steps = 0;
        while (s != task.goal && steps < cap) {
            const auto stack =
                offline_plan(agent.manager, agent.values, agent.buffer, Task{s, task.goal}, cfg.offline, cfg.infer_depth);
            s = env.step(s, agent.worker.act(s, stack.next()));
            ++steps;
        }
        if (s == task.goal) {
            out.success = true;
            out.length = steps;
            out.ratio = steps / static_cast<double>(optimal);
        }

        auto& base = flat[e];
        base.cap = cap;
        s = task.init;
        steps = 0;
        while (s != task.goal && steps < cap) {
            s = env.step(s, agent.flat.act(s, task.goal));
            ++steps;
        }
        if (s == task.goal) {
            base.success = true;
            base.length = steps;
            base.ratio = steps / static_cast<double>(optimal);
        }
    });
    auto rec = summarize(dhp);
    rec.baseline_success_rate = summarize(flat).success_rate;
    return rec;
}

namespace {

ExplorerConfig explorer_config(const ExperimentConfig& cfg, bool random_goals) {
    ExplorerConfig e = cfg.explorer;
    e.random_goals = random_goals;
    return e;
}

struct ExplorerState {
    ExplorerConfig cfg;
    ExplorerPolicy policy;
    TripletTable table;
    Rng rng;

    ExplorerState(const Environment& env, const ExperimentConfig& ec, bool random_goals)
        : cfg(explorer_config(ec, random_goals)),
          policy(env.state_count(), MemoryBuffer(cfg.k, cfg.memory).slots(), cfg.learning_rate,
                 cfg.value_learning_rate, cfg.entropy_coeff),
          rng(derive_seed(ec.seed, 1)) {}

    void collect(const Environment& env, int episodes, const ReturnConfig& returns,
                 std::vector<ExplorationEpisode>& logged) {
        auto result = run_exploration(env, policy, table, cfg, episodes, returns, rng);
        for (auto& ep : result.episodes) logged.push_back(std::move(ep));
    }
};

void emit(TrainingResult& result, MetricsRecord rec, const MetricsSink& sink) {
    if (sink) sink(rec);
    result.records.push_back(std::move(rec));
}

TrainingResult train_explore_only(const ExperimentConfig& cfg, const Environment& env, const MetricsSink& sink) {
    TrainingResult result;
    ExplorerState ex(env, cfg, cfg.task_source == TaskSource::random_explorer);
    const int chunk = cfg.eval_every > 0 ? cfg.eval_every : cfg.explore_episodes;
    int done = 0;
    while (done < cfg.explore_episodes) {
        const int n = std::min(chunk, cfg.explore_episodes - done);
        ex.collect(env, n, cfg.returns, result.logged);
        done += n;
        MetricsRecord rec;
        rec.step = done;
        rec.explorer_coverage = static_cast<double>(ex.table.distinct());
        emit(result, rec, sink);
    }
    return result;
}

TrainingResult train_online(const ExperimentConfig& cfg, const Environment& env, const MetricsSink& sink) {
    TrainingResult result;
    const auto frame = TaskFrame::for_env(env);
    result.planner = std::make_unique<PlannerPolicy>(frame, cfg.learning_rate, cfg.entropy_coeff);
    result.values = std::make_unique<ValueTable>(frame, cfg.value_learning_rate);
    auto& planner = *result.planner;
    auto& values = *result.values;

    std::unique_ptr<ExplorerState> ex;
    if (cfg.task_source != TaskSource::uniform) {
        ex = std::make_unique<ExplorerState>(env, cfg, cfg.task_source == TaskSource::random_explorer);
    }
    const int phase = std::max(1, static_cast<int>(std::lround(cfg.explore_fraction * cfg.updates)));

    Rng rng(cfg.seed);
    const int every = cfg.eval_every > 0 ? cfg.eval_every : std::max(1, cfg.updates);
    std::vector<TreeTrajectory> batch;
    for (int u = 0; u < cfg.updates; ++u) {
        if (ex && u < phase) {
            // Spread the exploration episodes evenly over the first phase of the budget.
            const auto target = static_cast<std::size_t>(
                (static_cast<std::int64_t>(cfg.explore_episodes) * (u + 1) + phase - 1) / phase);
            if (target > result.logged.size()) {
                ex->collect(env, static_cast<int>(target - result.logged.size()), cfg.returns, result.logged);
            }
        }
        batch.clear();
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Task task = ex ? sample_logged_task(result.logged, rng)
                                 : sample_task(env, rng, TaskConstraint::at_least(1));
            auto tree = unroll_training_tree(planner, task, cfg.depth, rng, &env, cfg.k_reach);
            tree = mark_terminal(std::move(tree), env, cfg.k_reach);
            assign_rewards(tree, env, cfg.reward_scheme);
            values.fill(tree);
            tree.returns = scheme_returns(tree, tree.values, cfg.returns, cfg.reward_scheme);
            batch.push_back(std::move(tree));
        }
        update_planner(planner, values, batch, cfg.returns);

        if ((u + 1) % every == 0 || u + 1 == cfg.updates) {
            auto rec = run_eval(planner, env, cfg);
            rec.step = u + 1;
            if (ex) rec.explorer_coverage = static_cast<double>(ex->table.distinct());
            emit(result, rec, sink);
        }
    }
    return result;
}

TrainingResult train_offline(const ExperimentConfig& cfg, const Environment& env, const MetricsSink& sink) {
    TrainingResult result;
    Rng rng(cfg.seed);
    result.dataset = generate_noisy_expert(env, cfg.dataset_episodes, cfg.dataset_horizon, cfg.expert_epsilon, rng);
    result.offline = std::make_unique<OfflineAgent>(env.state_count(), env.action_count(), cfg.offline);
    auto& agent = *result.offline;
    const auto& ocfg = cfg.offline;
    const auto states = dataset_states(result.dataset);

    auto refresh_buffer = [&] {
        GoalBuffer empty;
        empty.capacity = static_cast<std::size_t>(ocfg.buffer_capacity);
        agent.buffer = fps_update(std::move(empty), states, agent.values);
    };

    const int every = cfg.eval_every > 0 ? cfg.eval_every : std::max(1, cfg.updates);
    int done = 0, last_refresh = 0;
    refresh_buffer();
    while (done < cfg.updates) {
        const int next_eval = (done / every + 1) * every;
        const int n = std::min({ocfg.target_period, cfg.updates - done, next_eval - done});
        train_high_value(agent.values, result.dataset, ocfg, rng, n);
        agent.values.freeze_high();
        train_low_value_and_actors(agent.values, agent.manager, agent.worker, env, result.dataset, ocfg, rng, n);
        train_flat_actor(agent.values, agent.flat, result.dataset, ocfg, rng, n);
        done += n;
        if (done - last_refresh >= ocfg.buffer_refresh) {
            refresh_buffer();
            last_refresh = done;
        }
        if (done % every == 0 || done == cfg.updates) {
            refresh_buffer();
            last_refresh = done;
            auto rec = run_offline_eval(agent, env, cfg);
            rec.step = done;
            emit(result, rec, sink);
        }
    }
    return result;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return xs.empty() ? 0.0 : std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace

TrainingResult run_training(const ExperimentConfig& cfg, const MetricsSink& sink) {
    cfg.validate();
    const auto env = make_environment(cfg);
    switch (cfg.mode) {
        case RunMode::explore_only: return train_explore_only(cfg, *env, sink);
        case RunMode::offline: return train_offline(cfg, *env, sink);
        case RunMode::online: break;
    }
    return train_online(cfg, *env, sink);
}

std::vector<AblationRow> run_ablation(const std::vector<ExperimentConfig>& matrix,
                                      const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    std::vector<AblationRow> rows;
    for (const auto& base : matrix) {
        AblationRow row;
        row.config = base;
        row.label = to_string(base.reward_scheme) + "/D=" + std::to_string(base.depth);
        if (base.task_source != TaskSource::uniform) row.label += "/" + to_string(base.task_source);
        std::vector<double> success, path;
        for (auto seed : seeds) {
            auto cfg = base;
            cfg.seed = seed;
            auto result = run_training(cfg);
            if (result.records.empty()) throw ConfigError("ablation config produced no evaluation");
            const auto& last = result.records.back();
            row.finals.push_back(last);
            success.push_back(last.success_rate);
            path.push_back(last.avg_path_length);
        }
        row.success_mean = mean_of(success);
        row.success_std = std_of(success);
        row.path_mean = mean_of(path);
        row.path_std = std_of(path);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_to_json(const std::vector<AblationRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        json finals = json::array();
        for (const auto& f : r.finals) finals.push_back(json::parse(f.to_json()));
        out.push_back({{"label", r.label},
                       {"config", json::parse(config_to_json(r.config))},
                       {"success_mean", r.success_mean},
                       {"success_std", r.success_std},
                       {"path_mean", r.path_mean},
                       {"path_std", r.path_std},
                       {"finals", finals}});
    }
    return out.dump(2);
}

std::string output_dir(const std::string& requested) {
    if (!requested.empty()) return requested;
    if (const char* env = std::getenv("DHP_OUT_DIR"); env && *env) return env;
    return "runs";
}

}  // namespace dhp
