#include "dhp/tree.hpp"

#include <stdexcept>

#include "dhp/policy.hpp"
#include "json.hpp"

namespace dhp {

TreeTrajectory TreeTrajectory::filled(int depth, Task root) {
    if (depth < 1) throw ConfigError("tree depth must be at least 1");
    TreeTrajectory t;
    t.depth = depth;
    const std::size_t n = size_for_depth(depth);
    t.nodes.assign(n, root);
    t.actions.assign(internal_for_depth(depth), std::nullopt);
    t.terminal.assign(n, 0);
    t.rewards.assign(n, 0.0);
    return t;
}

TreeTrajectory mark_terminal(TreeTrajectory tree, const Environment& env, int k_reach) {
    if (k_reach < 1) throw ConfigError("k_reach must be at least 1");
    const std::size_t n = tree.size();
    tree.terminal.assign(n, 0);
    tree.rewards.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Task& t = tree.nodes[i];
        env.require_valid(t.init);
        env.require_valid(t.goal);
        const bool inherited = i > 0 && tree.terminal[TreeTrajectory::parent(i)];
        tree.terminal[i] = inherited || env.reachable(t.init, t.goal, k_reach);
        tree.rewards[i] = tree.terminal[i] ? 1.0 : 0.0;
    }
    return tree;
}

TreeTrajectory unroll_training_tree(const PlannerPolicy& policy, Task task, int depth, Rng& rng,
                                    const Environment* env, int k_reach) {
    auto tree = TreeTrajectory::filled(depth, task);
    // a node whose task is reachable (or lies below one) has no decision to make
    std::vector<std::uint8_t> closed(tree.size(), 0);
    for (std::size_t i = 0; i < tree.internal_count(); ++i) {
        const Task node = tree.nodes[i];
        const std::size_t l = TreeTrajectory::left(i), r = TreeTrajectory::right(i);
        if (env != nullptr && !closed[i] && env->reachable(node.init, node.goal, k_reach)) closed[i] = 1;
        if (closed[i]) {
            tree.nodes[l] = tree.nodes[r] = node;
            closed[l] = closed[r] = 1;
            continue;
        }
        auto choice = policy_sample(policy, node, rng);
        tree.nodes[l] = Task{node.init, choice.subgoal};
        tree.nodes[r] = Task{choice.subgoal, node.goal};
        tree.actions[i] = choice;
    }
    return tree;
}

SubgoalStack unroll_inference(const PlannerPolicy& policy, const Environment& env, Task task, int max_depth,
                              int k_reach, InferenceMode mode, Rng& rng) {
    if (max_depth < 1) throw ConfigError("inference depth must be at least 1");
    SubgoalStack stack;
    stack.subgoals.push_back(task.goal);
    const auto sample_mode = mode == InferenceMode::greedy ? SampleMode::greedy : SampleMode::sample;
    while (true) {
        const StateId g = stack.subgoals.back();
        if (env.reachable(task.init, g, k_reach)) {
            stack.complete = true;
            break;
        }
        if (stack.policy_calls >= max_depth) break;
        stack.subgoals.push_back(policy_sample(policy, Task{task.init, g}, rng, sample_mode).subgoal);
        ++stack.policy_calls;
    }
    return stack;
}

std::string tree_to_json(const TreeTrajectory& tree) {
    nlohmann::json j;
    j["depth"] = tree.depth;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& t : tree.nodes) nodes.push_back({t.init.value, t.goal.value});
    std::vector<bool> term;
    for (auto b : tree.terminal) term.push_back(b != 0);
    j["terminal"] = term;
    j["rewards"] = tree.rewards;
    j["returns"] = tree.returns;
    return j.dump();
}

}  // namespace dhp
