#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dhp/returns.hpp"
#include "dhp/tree.hpp"

namespace dhp {

/// How a task is turned into a table key and how a candidate index maps back to
/// a subgoal state.
enum class TaskEncoding {
    absolute,      ///< key (init, goal); candidate c is state c
    xor_relative,  ///< key init ^ goal; candidate c is state init ^ c (translation-invariant dynamics)
};

class TaskFrame {
public:
    TaskFrame(std::uint32_t state_count, TaskEncoding encoding);

    /// Picks xor_relative for translation-invariant environments, absolute otherwise.
    static TaskFrame for_env(const Environment& env);

    std::uint64_t key(const Task& task) const;
    StateId subgoal(const Task& task, std::uint32_t candidate) const;
    std::uint32_t candidate_of(const Task& task, StateId subgoal) const;

    std::uint32_t candidate_count() const { return state_count_; }
    std::uint32_t state_count() const { return state_count_; }
    TaskEncoding encoding() const { return encoding_; }

private:
    std::uint32_t state_count_;
    TaskEncoding encoding_;
};

/// Goal-conditioned tabular softmax over candidate subgoals. Rows are created on
/// first write; an unseen task reads as all-zero logits (uniform).
class PlannerPolicy {
public:
    static constexpr double kDefaultLearningRate = 0.05;
    static constexpr double kDefaultEntropyCoeff = 0.5;

    explicit PlannerPolicy(TaskFrame frame, double learning_rate = kDefaultLearningRate,
                           double entropy_coeff = kDefaultEntropyCoeff);

    const TaskFrame& frame() const { return frame_; }
    double learning_rate() const { return learning_rate_; }
    double entropy_coeff() const { return entropy_coeff_; }
    void set_learning_rate(double lr) { learning_rate_ = lr; }
    void set_entropy_coeff(double eta) { entropy_coeff_ = eta; }

    std::span<const double> logits(const Task& task) const;
    std::span<const double> logits_by_key(std::uint64_t key) const;
    std::vector<double>& mutable_logits(const Task& task);
    std::vector<double>& mutable_logits_by_key(std::uint64_t key);
    std::vector<double> probabilities(const Task& task) const;

    std::size_t row_count() const { return rows_.size(); }
    const std::unordered_map<std::uint64_t, std::vector<double>>& rows() const { return rows_; }

    /// {"encoding": ..., "candidates": [...], "rows": {"(init,goal)": [logits...]}}.
    std::string to_json() const;
    static PlannerPolicy from_json(const std::string& text);

private:
    TaskFrame frame_;
    double learning_rate_;
    double entropy_coeff_;
    std::unordered_map<std::uint64_t, std::vector<double>> rows_;
    std::vector<double> zeros_;
};

/// Critic v_P(n) keyed like the policy; unseen tasks read 0.
class ValueTable {
public:
    explicit ValueTable(TaskFrame frame, double learning_rate = PlannerPolicy::kDefaultLearningRate);

    const TaskFrame& frame() const { return frame_; }
    double learning_rate() const { return learning_rate_; }
    void set_learning_rate(double lr) { learning_rate_ = lr; }

    double get(const Task& task) const;
    double get_by_key(std::uint64_t key) const;
    double& at(const Task& task);
    double& at_by_key(std::uint64_t key);
    std::size_t size() const { return values_.size(); }

    /// Fills tree.values from the table.
    void fill(TreeTrajectory& tree) const;

    std::string to_json() const;
    static ValueTable from_json(const std::string& text);

private:
    TaskFrame frame_;
    double learning_rate_;
    std::unordered_map<std::uint64_t, double> values_;
};

struct GradientReport {
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double mean_advantage = 0.0;
    double mean_entropy = 0.0;
    std::size_t nodes_used = 0;  ///< internal, non-terminal, expanded nodes
};

// ---------------------------------------------------------------------------
// Softmax helpers shared by the planner and explorer tables.

std::vector<double> softmax(std::span<const double> logits);
double entropy(std::span<const double> probs);
/// Adds scale * d/dlogits [A log pi(choice) + eta H(pi)] to `grad`.
void accumulate_softmax_ascent(std::span<double> grad, std::span<const double> probs, std::uint32_t choice,
                               double advantage, double entropy_coeff, double scale);
/// Index of the largest entry; ties go to the lowest index.
std::uint32_t argmax(std::span<const double> values);

// ---------------------------------------------------------------------------

enum class SampleMode { sample, greedy };

/// Draws a subgoal from softmax(logits[task]) (or takes the argmax in greedy mode)
/// and records its log-probability.
SubgoalChoice policy_sample(const PlannerPolicy& policy, const Task& task, Rng& rng,
                            SampleMode mode = SampleMode::sample);

/// True for nodes that contribute to the planner losses: internal, non-terminal
/// and carrying a sampled action.
bool gradient_node(const TreeTrajectory& tree, std::size_t i);

/// A_i = (1 - T_i)(G_i - v(n_i)) on gradient nodes, 0 elsewhere. G is read from
/// tree.returns; v from the table.
std::vector<double> compute_advantages(const TreeTrajectory& tree, const ValueTable& values,
                                       const ReturnConfig& cfg);

/// Gradients of the planner losses (averaged over trees):
///   actor  L = -mean_trees sum_i m_i [A_i log pi(z_i|n_i) + eta H(pi(.|n_i))]
///   critic L =  mean_trees sum_i m_i 0.5 (v(n_i) - G_i)^2
/// with m_i the gradient-node mask and A_i held fixed.
struct PlannerGradient {
    std::unordered_map<std::uint64_t, std::vector<double>> logits;
    std::unordered_map<std::uint64_t, double> values;
    GradientReport report;
};

PlannerGradient planner_gradient(const PlannerPolicy& policy, const ValueTable& values,
                                 std::span<const TreeTrajectory> batch, const ReturnConfig& cfg);

/// Loss values matching planner_gradient, for finite-difference checks.
double planner_actor_loss(const PlannerPolicy& policy, std::span<const TreeTrajectory> batch,
                          std::span<const std::vector<double>> advantages);
double planner_critic_loss(const ValueTable& values, std::span<const TreeTrajectory> batch);

/// One SGD step on both tables. Trees must be marked and carry returns.
/// Throws std::invalid_argument on an empty batch.
GradientReport update_planner(PlannerPolicy& policy, ValueTable& values, std::span<const TreeTrajectory> batch,
                              const ReturnConfig& cfg);

/// Empirical check that a state-only baseline contributes nothing to the policy
/// gradient: samples z ~ pi(.|task) and averages b(task) * grad log pi(z).
struct BaselineStatistic {
    std::vector<double> mean_gradient;
    double mean_norm = 0.0;       ///< ||mean gradient||
    double standard_error = 0.0;  ///< sqrt(trace(Cov) / n), the RMS norm of the mean under the null
    std::size_t samples = 0;

    bool within(double sigmas) const { return mean_norm <= sigmas * standard_error; }
};

/// `tasks` and `baseline` are parallel; each sample draws a task uniformly, then
/// a subgoal from the policy. The gradient vector concatenates one row of
/// candidate logits per task.
BaselineStatistic baseline_invariance_check(const PlannerPolicy& policy, std::span<const Task> tasks,
                                            std::span<const double> baseline, std::size_t n_samples, Rng& rng);

}  // namespace dhp
