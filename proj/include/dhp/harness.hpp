#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dhp/env.hpp"
#include "dhp/explorer.hpp"
#include "dhp/offline.hpp"
#include "dhp/policy.hpp"
#include "dhp/returns.hpp"

namespace dhp {

enum class RunMode { online, offline, explore_only };

/// Where online planner tasks come from.
enum class TaskSource {
    uniform,          ///< any task with distance >= 1, drawn from the environment
    explorer,         ///< hindsight pairs from episodes of the triplet-novelty explorer
    random_explorer,  ///< hindsight pairs from episodes with uniformly drawn goals
};

RunMode parse_run_mode(const std::string& name);
std::string to_string(RunMode mode);
TaskSource parse_task_source(const std::string& name);
std::string to_string(TaskSource source);
EnvKind parse_env_kind(const std::string& name);

struct ExperimentConfig {
    EnvKind env = EnvKind::lights_out;
    int size = 2;             ///< L for LightsOut, R for the maze
    std::string layout_path;  ///< maze only; empty uses the built-in layout for `size`

    int depth = 5;        ///< D, training unroll depth
    int infer_depth = 8;  ///< D_I
    int k_reach = 1;
    ReturnConfig returns;
    RewardScheme reward_scheme = RewardScheme::standard;

    double learning_rate = 1.0;
    double value_learning_rate = 0.5;
    double entropy_coeff = 0.5;
    int batch_size = 16;
    int updates = 2000;       ///< planner updates (online) or gradient steps (offline)
    int eval_every = 0;       ///< 0: evaluate once, at the end
    int eval_episodes = 100;
    std::uint64_t seed = 0;
    std::uint64_t eval_seed = 999;  ///< shared across training seeds so every run sees the same tasks

    RunMode mode = RunMode::online;
    TaskSource task_source = TaskSource::uniform;
    double explore_fraction = 0.3;  ///< share of the update budget during which the explorer collects data
    int explore_episodes = 100;
    ExplorerConfig explorer;

    OfflineConfig offline;
    int dataset_episodes = 200;
    int dataset_horizon = 200;
    double expert_epsilon = 0.3;
    int eval_min_distance = 8;  ///< offline evaluation tasks

    /// Throws ConfigError on any violated constraint (D > D_I among them).
    void validate() const;
};

std::string config_to_json(const ExperimentConfig& cfg);

/// LightsOut(size), or the maze from layout_path / the built-in layout.
EnvPtr make_environment(const ExperimentConfig& cfg);

/// Built-in layouts: 5x5 with 4 loop doors (seed 7), 7x7 with 8 (seed 11),
/// any other side with side + 1 loop doors (seed = side).
MazeLayout default_maze_layout(int side);

struct MetricsRecord {
    std::int64_t step = 0;
    double success_rate = 0.0;
    double avg_path_length = 0.0;      ///< over successful episodes
    double path_length_std = 0.0;      ///< over successful episodes
    double avg_path_length_all = 0.0;  ///< failures counted at their step cap
    double optimality_ratio = 0.0;     ///< executed / BFS length, over successes
    double mean_return = 0.0;          ///< root MC return of the greedy plan tree
    double mean_plan_depth = 0.0;      ///< height of fully terminated greedy plans
    std::optional<double> explorer_coverage;      ///< distinct triplets so far
    std::optional<double> baseline_success_rate;  ///< flat AWR baseline, offline mode

    std::string to_json() const;
};

/// Evaluation tasks for the config: LightsOut lit boards toward all-off, maze
/// corner-to-corner (opposite 2x2 corner blocks), offline maze pairs at least
/// eval_min_distance apart.
std::vector<Task> eval_tasks(const Environment& env, const ExperimentConfig& cfg);

/// Greedy plan tree: every unreachable internal node takes the argmax subgoal,
/// reachable ones are closed. Marked, with rewards.
TreeTrajectory greedy_plan_tree(const PlannerPolicy& policy, const Environment& env, Task task, int depth,
                                int k_reach);

/// LightsOut: single-attempt scoring of the greedy tree at D_I (any open leaf
/// scores 0; path length counts the presses of the plan). Maze: leftmost-branch
/// replanning every step, one BFS-greedy move toward the next subgoal, capped at
/// 4x the BFS distance; an incomplete stack wastes the step. Reads the policy only.
MetricsRecord run_eval(const PlannerPolicy& policy, const Environment& env, const ExperimentConfig& cfg);

struct OfflineAgent {
    HierValues values;
    PlannerPolicy manager;
    WorkerPolicy worker;
    WorkerPolicy flat;
    GoalBuffer buffer;

    OfflineAgent(std::uint32_t state_count, int action_count, const OfflineConfig& cfg);
};

/// DHP (offline_plan + worker) and the flat baseline on the same tasks.
MetricsRecord run_offline_eval(const OfflineAgent& agent, const Environment& env, const ExperimentConfig& cfg);

struct TrainingResult {
    std::vector<MetricsRecord> records;
    std::unique_ptr<PlannerPolicy> planner;  ///< online mode
    std::unique_ptr<ValueTable> values;
    std::unique_ptr<OfflineAgent> offline;  ///< offline mode
    std::vector<ExplorationEpisode> logged;  ///< explorer data, when collected
    OfflineDataset dataset;                  ///< offline mode
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Deterministic given cfg.seed. Records are emitted in step order.
TrainingResult run_training(const ExperimentConfig& cfg, const MetricsSink& sink = {});

struct AblationRow {
    std::string label;
    ExperimentConfig config;
    std::vector<MetricsRecord> finals;  ///< one per seed
    double success_mean = 0.0, success_std = 0.0;
    double path_mean = 0.0, path_std = 0.0;
};

/// Runs each config over every seed (final record only).
std::vector<AblationRow> run_ablation(const std::vector<ExperimentConfig>& matrix,
                                      const std::vector<std::uint64_t>& seeds);

std::string ablation_to_json(const std::vector<AblationRow>& rows);

/// `requested` if set, else $DHP_OUT_DIR, else "runs".
std::string output_dir(const std::string& requested);

}  // namespace dhp
