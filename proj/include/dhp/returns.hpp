#pragma once

#include <span>
#include <string>
#include <vector>

#include "dhp/tree.hpp"

namespace dhp {

struct ReturnConfig {
    double gamma = 0.95;         ///< tree discount
    double lambda = 0.95;        ///< tree and linear lambda
    double gamma_linear = 0.99;  ///< explorer / worker discount

    /// Throws ConfigError unless gamma, gamma_linear in (0,1) and lambda in [0,1].
    void validate() const;
    /// Contraction factor of the lambda operator, gamma(1-lambda)/(1-gamma*lambda).
    double lambda_contraction_factor() const { return gamma * (1.0 - lambda) / (1.0 - gamma * lambda); }
};

// All tree estimators read `tree.terminal` and `tree.rewards`; none of them
// writes into the tree. Terminal nodes always return 0. When child returns tie,
// the left child is reported as the minimising branch.

/// Monte-Carlo tree return: G_i = (1-T_i) min_c (R_c + gamma G_c). A truncated
/// leaf returns 0, or its value estimate when `leaf_values` is supplied (the
/// D-depth bootstrapped variant).
std::vector<double> tree_mc_return(const TreeTrajectory& tree, const ReturnConfig& cfg,
                                   std::span<const double> leaf_values = {});

/// One-step tree return: G_i = (1-T_i) min_c (R_c + gamma v_c). Truncated leaves
/// return their value estimate.
std::vector<double> tree_one_step_return(const TreeTrajectory& tree, std::span<const double> values,
                                         const ReturnConfig& cfg);

/// Tree lambda return:
///   G_i = (1-T_i) min_c (R_c + gamma ((1-lambda) v_c + lambda G_c)),
/// with truncated leaves bootstrapped as G_leaf = v_leaf.
std::vector<double> tree_lambda_return(const TreeTrajectory& tree, std::span<const double> values,
                                       const ReturnConfig& cfg);

/// TD(lambda) over a linear trajectory. `rewards[k]` is the reward received on the
/// transition out of step k and `values[k]` the critic estimate at the state that
/// transition lands in; the last step bootstraps on its value:
///   G_k = r_k + gamma_L ((1-lambda) v_k + lambda G_{k+1}),  G_{T-1} = r + gamma_L v.
/// Throws std::invalid_argument on a length mismatch or empty input.
std::vector<double> linear_lambda_return(std::span<const double> rewards, std::span<const double> values,
                                         const ReturnConfig& cfg);

// ---------------------------------------------------------------------------
// Reward-scheme variants used by the ablation harness.

enum class RewardScheme { standard, neg_rew, dist_sum, gae };

RewardScheme parse_reward_scheme(const std::string& name);
std::string to_string(RewardScheme scheme);

/// Writes rewards for the scheme: standard R = T; neg_rew R = T - 1;
/// dist_sum R = -distance(node task) / diameter; gae uses the standard rewards.
void assign_rewards(TreeTrajectory& tree, const Environment& env, RewardScheme scheme);

/// Lambda return with the two child terms summed instead of minimised.
std::vector<double> tree_sum_lambda_return(const TreeTrajectory& tree, std::span<const double> values,
                                           const ReturnConfig& cfg);

/// Tree GAE: A_i = (1-T_i) min_c (delta_c + gamma lambda A_c) with
/// delta_c = R_c + gamma v_c - v_i and A_leaf = 0. Returns advantages.
std::vector<double> tree_gae_advantage(const TreeTrajectory& tree, std::span<const double> values,
                                       const ReturnConfig& cfg);

/// Critic targets for a scheme (the value the critic regresses toward and the
/// quantity the actor's advantage is measured against).
std::vector<double> scheme_returns(const TreeTrajectory& tree, std::span<const double> values,
                                   const ReturnConfig& cfg, RewardScheme scheme);

// ---------------------------------------------------------------------------
// Bellman operators on a finite tree MDP.

/// One outcome of choosing a subgoal at a node: a pair of child nodes with rewards.
struct TreeMdpBranch {
    double probability = 0.0;
    int left = 0;
    int right = 0;
    double left_reward = 0.0;
    double right_reward = 0.0;
};

/// Finite node set; each non-terminal node has a fixed stochastic policy over a
/// small support of branches. Children may be any node (cycles allowed), so the
/// recursive lambda return is an infinite-horizon quantity.
struct TreeMdp {
    std::vector<std::vector<TreeMdpBranch>> branches;
    std::vector<std::uint8_t> terminal;

    std::size_t size() const { return branches.size(); }
};

enum class OperatorKind { one_step, monte_carlo, lambda };

/// Applies T^0, T^1 or T^lambda exactly (expectations enumerate the policy support).
/// T^lambda V is the unique W with
///   W(n) = (1-T_n) E_pi[min_c (R_c + gamma((1-lambda) V(c) + lambda W(c)))],
/// solved by fixed-point iteration to machine precision; T^1 is the lambda = 1
/// special case, independent of V.
std::vector<double> bellman_operator(OperatorKind kind, const TreeMdp& mdp, std::span<const double> values,
                                     const ReturnConfig& cfg);

}  // namespace dhp
