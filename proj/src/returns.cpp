#include "dhp/returns.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dhp {

void ReturnConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (!(gamma_linear > 0.0 && gamma_linear < 1.0)) throw ConfigError("gamma_linear must lie in (0, 1)");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
}

namespace {

void require_values(const TreeTrajectory& tree, std::span<const double> values) {
    if (values.size() != tree.size()) {
        throw std::invalid_argument("value array length " + std::to_string(values.size()) +
                                    " does not match tree size " + std::to_string(tree.size()));
    }
}

// Shared backward sweep. `leaf(i)` gives the return of a truncated leaf and
// `child(c, G)` the discounted continuation through child c.
template <typename Leaf, typename Child, typename Combine>
std::vector<double> sweep(const TreeTrajectory& tree, Leaf leaf, Child child, Combine combine) {
    std::vector<double> G(tree.size(), 0.0);
    for (std::size_t i = tree.size(); i-- > 0;) {
        if (tree.is_terminal(i)) {
            G[i] = 0.0;
        } else if (!tree.is_internal(i)) {
            G[i] = leaf(i);
        } else {
            const std::size_t l = TreeTrajectory::left(i), r = TreeTrajectory::right(i);
            G[i] = combine(tree.rewards[l] + child(l, G[l]), tree.rewards[r] + child(r, G[r]));
        }
    }
    return G;
}

constexpr auto min_combine = [](double a, double b) { return std::min(a, b); };
constexpr auto sum_combine = [](double a, double b) { return a + b; };

}  // namespace

std::vector<double> tree_mc_return(const TreeTrajectory& tree, const ReturnConfig& cfg,
                                   std::span<const double> leaf_values) {
    if (!leaf_values.empty()) require_values(tree, leaf_values);
    return sweep(
        tree, [&](std::size_t i) { return leaf_values.empty() ? 0.0 : leaf_values[i]; },
        [&](std::size_t, double g) { return cfg.gamma * g; }, min_combine);
}

std::vector<double> tree_one_step_return(const TreeTrajectory& tree, std::span<const double> values,
                                         const ReturnConfig& cfg) {
    require_values(tree, values);
    return sweep(
        tree, [&](std::size_t i) { return values[i]; }, [&](std::size_t c, double) { return cfg.gamma * values[c]; },
        min_combine);
}

std::vector<double> tree_lambda_return(const TreeTrajectory& tree, std::span<const double> values,
                                       const ReturnConfig& cfg) {
    require_values(tree, values);
    const double lam = cfg.lambda;
    return sweep(
        tree, [&](std::size_t i) { return values[i]; },
        [&](std::size_t c, double g) { return cfg.gamma * ((1.0 - lam) * values[c] + lam * g); }, min_combine);
}

std::vector<double> linear_lambda_return(std::span<const double> rewards, std::span<const double> values,
                                         const ReturnConfig& cfg) {
    if (rewards.empty()) throw std::invalid_argument("linear_lambda_return: empty trajectory");
    if (rewards.size() != values.size()) {
        throw std::invalid_argument("linear_lambda_return: rewards and values differ in length");
    }
    const std::size_t T = rewards.size();
    std::vector<double> G(T);
    double next = values[T - 1];  // bootstrap past the end
    for (std::size_t k = T; k-- > 0;) {
        G[k] = rewards[k] + cfg.gamma_linear * ((1.0 - cfg.lambda) * values[k] + cfg.lambda * next);
        next = G[k];
    }
    return G;
}

// ---------------------------------------------------------------------------

RewardScheme parse_reward_scheme(const std::string& name) {
    if (name == "default" || name == "standard") return RewardScheme::standard;
    if (name == "neg_rew") return RewardScheme::neg_rew;
    if (name == "dist_sum") return RewardScheme::dist_sum;
    if (name == "gae") return RewardScheme::gae;
    throw ConfigError("unknown reward scheme: " + name);
}

std::string to_string(RewardScheme scheme) {
    switch (scheme) {
        case RewardScheme::standard: return "default";
        case RewardScheme::neg_rew: return "neg_rew";
        case RewardScheme::dist_sum: return "dist_sum";
        case RewardScheme::gae: return "gae";
    }
    return "default";
}

void assign_rewards(TreeTrajectory& tree, const Environment& env, RewardScheme scheme) {
    tree.rewards.assign(tree.size(), 0.0);
    const double diameter = std::max(1, env.diameter());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        const double t = tree.is_terminal(i) ? 1.0 : 0.0;
        switch (scheme) {
            case RewardScheme::standard:
            case RewardScheme::gae: tree.rewards[i] = t; break;
            case RewardScheme::neg_rew: tree.rewards[i] = t - 1.0; break;
            case RewardScheme::dist_sum: {
                const int d = env.distance(tree.nodes[i].init, tree.nodes[i].goal);
                tree.rewards[i] = d == kUnreachable ? -1.0 : -static_cast<double>(d) / diameter;
                break;
            }
        }
    }
}

std::vector<double> tree_sum_lambda_return(const TreeTrajectory& tree, std::span<const double> values,
                                           const ReturnConfig& cfg) {
    require_values(tree, values);
    const double lam = cfg.lambda;
    return sweep(
        tree, [&](std::size_t i) { return values[i]; },
        [&](std::size_t c, double g) { return cfg.gamma * ((1.0 - lam) * values[c] + lam * g); }, sum_combine);
}

std::vector<double> tree_gae_advantage(const TreeTrajectory& tree, std::span<const double> values,
                                       const ReturnConfig& cfg) {
    require_values(tree, values);
    std::vector<double> A(tree.size(), 0.0);
    for (std::size_t i = tree.internal_count(); i-- > 0;) {
        if (tree.is_terminal(i)) continue;
        const std::size_t l = TreeTrajectory::left(i), r = TreeTrajectory::right(i);
        const double dl = tree.rewards[l] + cfg.gamma * values[l] - values[i];
        const double dr = tree.rewards[r] + cfg.gamma * values[r] - values[i];
        const double gl = cfg.gamma * cfg.lambda;
        A[i] = std::min(dl + gl * A[l], dr + gl * A[r]);
    }
    return A;
}

std::vector<double> scheme_returns(const TreeTrajectory& tree, std::span<const double> values,
                                   const ReturnConfig& cfg, RewardScheme scheme) {
    switch (scheme) {
        case RewardScheme::standard:
        case RewardScheme::neg_rew: return tree_lambda_return(tree, values, cfg);
        case RewardScheme::dist_sum: return tree_sum_lambda_return(tree, values, cfg);
        case RewardScheme::gae: {
            auto A = tree_gae_advantage(tree, values, cfg);
            for (std::size_t i = 0; i < A.size(); ++i) {
                if (!tree.is_terminal(i)) A[i] += values[i];
            }
            return A;
        }
    }
    return tree_lambda_return(tree, values, cfg);
}

// ---------------------------------------------------------------------------

namespace {

double branch_min(const TreeMdpBranch& b, std::span<const double> v_next, std::span<const double> w_next,
                  double gamma, double lambda) {
    const double l = b.left_reward + gamma * ((1.0 - lambda) * v_next[b.left] + lambda * w_next[b.left]);
    const double r = b.right_reward + gamma * ((1.0 - lambda) * v_next[b.right] + lambda * w_next[b.right]);
    return std::min(l, r);
}

}  // namespace

std::vector<double> bellman_operator(OperatorKind kind, const TreeMdp& mdp, std::span<const double> values,
                                     const ReturnConfig& cfg) {
    const std::size_t n = mdp.size();
    if (values.size() != n) throw std::invalid_argument("bellman_operator: value vector size mismatch");
    const double lambda = kind == OperatorKind::one_step ? 0.0 : kind == OperatorKind::monte_carlo ? 1.0 : cfg.lambda;

    auto apply = [&](std::span<const double> w) {
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (mdp.terminal[i]) continue;
            double acc = 0.0;
            for (const auto& b : mdp.branches[i]) acc += b.probability * branch_min(b, values, w, cfg.gamma, lambda);
            out[i] = acc;
        }
        return out;
    };

    if (lambda == 0.0) return apply(values);

    // W -> apply(W) is a (gamma * lambda)-contraction; iterate until it stops moving.
    const double rate = cfg.gamma * lambda;
    const int max_iterations = static_cast<int>(std::ceil(std::log(1e-18) / std::log(rate))) + 64;
    std::vector<double> w(values.begin(), values.end());
    for (int it = 0; it < max_iterations; ++it) {
        auto next = apply(w);
        double delta = 0.0, scale = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            delta = std::max(delta, std::abs(next[i] - w[i]));
            scale = std::max(scale, std::abs(next[i]));
        }
        w = std::move(next);
        if (delta <= 1e-16 * scale) break;
    }
    return w;
}

}  // namespace dhp
