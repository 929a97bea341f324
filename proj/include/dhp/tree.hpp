#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dhp/env.hpp"
#include "dhp/types.hpp"

namespace dhp {

class PlannerPolicy;

/// One sampled subgoal decision at an internal tree node.
struct SubgoalChoice {
    StateId subgoal;
    std::uint32_t candidate = 0;  ///< index into the policy's candidate list
    double log_prob = 0.0;        ///< <= 0
    std::uint32_t support = 0;    ///< number of candidates the choice was drawn from
};

/// Dense binary subtask tree in level order: node i has children 2i+1 and 2i+2,
/// so parent(i) = (i - 1) / 2. Nodes below index 2^D - 1 are internal.
///
/// Children of a node that was already reachable when the tree was unrolled
/// hold copies of the parent task and carry no action; the (1 - T_i) mask
/// removes them from every gradient sum.
struct TreeTrajectory {
    int depth = 0;
    std::vector<Task> nodes;
    std::vector<std::optional<SubgoalChoice>> actions;  ///< one slot per internal node
    std::vector<std::uint8_t> terminal;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<double> returns;

    static std::size_t size_for_depth(int depth) { return (std::size_t{1} << (depth + 1)) - 1; }
    static std::size_t internal_for_depth(int depth) { return (std::size_t{1} << depth) - 1; }
    static std::size_t parent(std::size_t i) { return (i - 1) / 2; }
    static std::size_t left(std::size_t i) { return 2 * i + 1; }
    static std::size_t right(std::size_t i) { return 2 * i + 2; }

    std::size_t size() const { return nodes.size(); }
    std::size_t internal_count() const { return internal_for_depth(depth); }
    bool is_internal(std::size_t i) const { return i < internal_count(); }
    bool is_terminal(std::size_t i) const { return terminal[i] != 0; }
    /// Non-terminal leaf: the unroll stopped here without reaching a reachable subtask.
    bool is_truncated(std::size_t i) const { return !is_internal(i) && !is_terminal(i); }

    /// A tree of the given depth whose every node holds `root` and nothing is marked.
    static TreeTrajectory filled(int depth, Task root);
};

/// Marks T_i = T_parent(i) or reachable(init_i, goal_i, k_reach) and sets
/// R_i = T_i. Throws InvalidState for a node task outside the environment.
TreeTrajectory mark_terminal(TreeTrajectory tree, const Environment& env, int k_reach);

/// Samples a subgoal at every internal node and populates both children per the
/// tiling rule. When `env` is given, nodes whose task is already reachable within
/// `k_reach` are not expanded (their children copy the parent task).
TreeTrajectory unroll_training_tree(const PlannerPolicy& policy, Task task, int depth, Rng& rng,
                                    const Environment* env = nullptr, int k_reach = 1);

enum class InferenceMode { greedy, sample };

/// Leftmost-branch decomposition. `subgoals.front()` is the original goal and
/// `subgoals.back()` the first worker-reachable subgoal (when complete).
struct SubgoalStack {
    std::vector<StateId> subgoals;
    bool complete = false;
    int policy_calls = 0;

    StateId next() const { return subgoals.back(); }
};

/// Repeatedly replaces the goal with the policy's subgoal for (init, goal) until
/// the goal is reachable, using at most `max_depth` policy calls. An exhausted
/// budget yields complete == false rather than an error.
SubgoalStack unroll_inference(const PlannerPolicy& policy, const Environment& env, Task task, int max_depth,
                              int k_reach, InferenceMode mode, Rng& rng);

/// {depth, nodes: [[init, goal], ...], terminal, rewards, returns} for external visualisation.
std::string tree_to_json(const TreeTrajectory& tree);

}  // namespace dhp
