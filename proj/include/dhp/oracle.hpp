#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhp/env.hpp"
#include "dhp/returns.hpp"
#include "dhp/tree.hpp"

// Brute-force ground truth. Nothing here calls into the code it checks except
// where the check is about that code (the operator under test, the estimator
// being compared).

namespace dhp::oracle {

/// Shortest action count by breadth-first search over env.step alone.
std::optional<int> bfs_distance(const Environment& env, StateId from, StateId to);

/// All distances from one source; unreachable entries are -1.
std::vector<int> bfs_row(const Environment& env, StateId from);

enum class ReturnKind { mc, one_step, lambda };

/// Plain recursive transcription of the min-child returns. `values` may be empty for mc.
std::vector<double> oracle_tree_return(const TreeTrajectory& tree, std::span<const double> values,
                                       const ReturnConfig& cfg, ReturnKind kind);

/// Random tree of depth 1..max_depth: terminal flags closed under descendants,
/// rewards uniform in [-1, 1], values uniform in [0, 1 / (1 - gamma)].
TreeTrajectory random_tree(Rng& rng, int max_depth, double gamma);

struct ReturnEquivalenceReport {
    int trials = 0;
    double max_diff_mc = 0.0;
    double max_diff_one_step = 0.0;
    double max_diff_lambda = 0.0;
    double max_diff_lambda0 = 0.0;  ///< lambda = 0 against one-step, both from the returns module
    double max_diff_lambda1 = 0.0;  ///< lambda = 1 against leaf-bootstrapped MC
    double tolerance = 0.0;
    std::string counterexample;

    bool passed() const {
        return max_diff_mc <= tolerance && max_diff_one_step <= tolerance && max_diff_lambda <= tolerance &&
               max_diff_lambda0 == 0.0 && max_diff_lambda1 == 0.0;
    }
};

/// The returns module against the recursive oracle on random trees.
ReturnEquivalenceReport return_equivalence_check(const ReturnConfig& cfg, int trials, Rng& rng, int max_depth = 5,
                                                 double tolerance = 1e-12);

/// Minimum depth of a subtask tree for every (init, goal) pair, by level-set
/// closure: level 0 holds pairs within k_reach, level j+1 adds (s, g) whenever
/// some w has (s, w) and (w, g) at level j.
class PlanDepthTable {
public:
    PlanDepthTable(const Environment& env, int k_reach, int max_depth = 16);
    /// Throws std::invalid_argument for a pair no tree of depth <= max_depth solves.
    int depth(const Task& task) const;

private:
    std::uint32_t n_;
    std::vector<std::int8_t> depth_;
};

int optimal_plan_depth(const Environment& env, const Task& task, int k_reach);

/// ceil(log2(ceil(d / k))) for d > k, else 0.
int closed_form_plan_depth(int distance, int k_reach);

struct ContractionReport {
    int trials = 0;
    int skipped = 0;  ///< V1 == V2
    double max_ratio_one_step = 0.0;
    double max_ratio_lambda = 0.0;
    double bound_one_step = 0.0;
    double bound_lambda = 0.0;
    int violations = 0;
    std::string counterexample;  ///< JSON of the first violating trial, empty if none

    bool passed() const { return violations == 0; }
};

/// Random tree MDPs (at most 63 nodes, rewards in {0,1}, terminal sets closed
/// under successors, supports of at most 3 branches) with random value pairs.
/// A trial violates when ||TV1 - TV2|| > bound ||V1 - V2|| + slack.
ContractionReport contraction_check(const ReturnConfig& cfg, int trials, Rng& rng, double slack = 1e-12);

TreeMdp random_tree_mdp(Rng& rng, int max_nodes = 63);

struct MinLemmaReport {
    std::size_t samples = 0;
    std::size_t violations = 0;
    double max_ratio = 0.0;  ///< |min(a,b) - min(c,d)| / max(|a-c|, |b-d|)
    std::string counterexample;

    bool passed() const { return violations == 0; }
};

/// |min(a,b) - min(c,d)| <= max(|a-c|, |b-d|) on random quadruples, some of them tied or near-tied.
MinLemmaReport min_lemma_check(std::size_t samples, Rng& rng);

/// Full binary tree shape given as nested split points over a chain of unit segments.
struct TreeShape {
    int leaves = 1;
    std::vector<int> splits;  ///< preorder: left-subtree leaf count at each internal node
    int height() const;
};

/// Every full binary tree shape with n leaves (Catalan(n-1) of them).
std::vector<TreeShape> enumerate_shapes(int leaves);

/// The subtask tree a shape induces on the task (0, leaves) of a unit chain:
/// every leaf segment is terminal, every internal node is not.
TreeTrajectory shape_to_tree(const TreeShape& shape);

struct BalancedTreeReport {
    int leaves = 0;
    std::size_t shapes = 0;
    double balanced_return = 0.0;
    double best_return = 0.0;
    std::size_t counterexamples = 0;  ///< shapes beating the balanced one
    std::size_t formula_mismatches = 0;  ///< shapes whose return is not gamma^(height-1)

    bool passed() const { return counterexamples == 0 && formula_mismatches == 0; }
};

/// Root MC return (via the returns module) over all shapes against the balanced one.
BalancedTreeReport balanced_tree_check(int leaves, const ReturnConfig& cfg);

}  // namespace dhp::oracle
