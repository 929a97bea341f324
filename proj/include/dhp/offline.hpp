#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dhp/env.hpp"
#include "dhp/policy.hpp"
#include "dhp/tree.hpp"

namespace dhp {

struct OfflineConfig {
    double tau = 0.7;        ///< expectile
    double beta_awr = 3.0;   ///< AWR temperature
    double gamma_h = 0.9;
    double gamma_l = 0.99;
    double theta = -2.0;     ///< normalized reachability threshold
    int buffer_capacity = 256;
    int subgoal_steps = 1;         ///< a half is rewarded when it spans at most this many steps
    int valid_subgoal_steps = 3;   ///< pairs this close feed the running statistics of V^l
    double stats_half_life = 1000.0;
    double weight_clip = 100.0;
    double value_lr = 0.2;
    double actor_lr = 0.05;
    int target_period = 500;       ///< updates between refreshes of the frozen V^h copy
    int buffer_refresh = 1000;
    int batch_size = 32;
    double random_goal_prob = 0.2; ///< share of relabelled goals drawn from the whole dataset
    int worker_horizon = 8;        ///< worker subgoals are drawn from the next this-many states

    void validate() const;
};

/// Asymmetric squared loss |tau - 1[u < 0]| u^2 and its derivative in u.
double expectile_loss(double u, double tau);
double expectile_grad(double u, double tau);

/// Exponential moving mean and variance with a half-life counted in samples.
class RunningStats {
public:
    explicit RunningStats(double half_life = 1000.0);
    void add(double x);
    double mean() const { return mean_; }
    double stddev() const;
    std::size_t count() const { return count_; }

private:
    double alpha_;
    double mean_ = 0.0;
    double var_ = 0.0;
    std::size_t count_ = 0;
};

/// Dense (s, g) tables for V^h, its frozen copy and V^l.
class HierValues {
public:
    /// V^l starts at `low_init` everywhere; V^h at 0.
    HierValues(std::uint32_t state_count, double stats_half_life = 1000.0, double low_init = 0.0);

    std::uint32_t state_count() const { return n_; }
    double high(StateId s, StateId g) const { return high_[idx(s, g)]; }
    double high_target(StateId s, StateId g) const { return high_target_[idx(s, g)]; }
    double low(StateId s, StateId g) const { return low_[idx(s, g)]; }
    double& high(StateId s, StateId g) { return high_[idx(s, g)]; }
    double& low(StateId s, StateId g) { return low_[idx(s, g)]; }
    void freeze_high() { high_target_ = high_; }

    /// (V^l - mu) / sigma; sigma floors at 1e-6.
    double normalized_low(StateId s, StateId g) const;
    RunningStats& low_stats() { return stats_; }
    const RunningStats& low_stats() const { return stats_; }

private:
    std::size_t idx(StateId s, StateId g) const { return static_cast<std::size_t>(s.value) * n_ + g.value; }
    std::uint32_t n_;
    std::vector<double> high_, high_target_, low_;
    RunningStats stats_;
};

/// Goal-conditioned action distribution over env actions, dense (s, g) rows.
class WorkerPolicy {
public:
    WorkerPolicy(std::uint32_t state_count, int action_count);
    std::span<const double> logits(StateId s, StateId g) const;
    std::span<double> mutable_logits(StateId s, StateId g);
    /// Greedy action; ties go to the lowest index.
    int act(StateId s, StateId g) const;
    int action_count() const { return actions_; }

private:
    std::uint32_t n_;
    int actions_;
    std::vector<double> logits_;
};

struct OfflineEpisode {
    std::vector<StateId> states;  ///< actions.size() + 1 entries
    std::vector<int> actions;
};

using OfflineDataset = std::vector<OfflineEpisode>;

/// BFS expert toward a random goal with probability 1 - epsilon, a uniform action
/// otherwise; a new goal is drawn whenever the current one is reached.
OfflineDataset generate_noisy_expert(const Environment& env, int episodes, int horizon, double epsilon, Rng& rng);

std::string dataset_to_jsonl(const OfflineDataset& data);
OfflineDataset dataset_from_jsonl(const std::string& text);

struct ExpectileStats {
    double loss = 0.0;  ///< mean expectile loss over the samples of the call
    std::size_t samples = 0;
};

/// Expectile regression of V^h toward the one-step tree target on dataset
/// triples (s_i, s_m, s_j), m the midpoint of i < j:
///   G = min(R_l + gamma_h (1 - R_l) Vbar(s_i, s_m), R_r + gamma_h (1 - R_r) Vbar(s_m, s_j)),
/// with R = 1 when a half spans at most subgoal_steps steps. Runs `steps` batches.
ExpectileStats train_high_value(HierValues& values, const OfflineDataset& data, const OfflineConfig& cfg,
                                Rng& rng, int steps);

struct ActorStats {
    ExpectileStats low_value;
    double manager_weight = 0.0;  ///< mean AWR weight
    double worker_weight = 0.0;
};

/// Expectile TD for V^l with r = 1 when distance(s', g) <= 1 on hindsight goals,
/// AWR for the worker toward subgoals at most worker_horizon steps ahead with
/// A = V^l(s', w) - V^l(s, w), AWR for the manager on dataset midpoints with
/// A^h = G(V^h) - V^h(s, g); weights exp(beta A) clipped at weight_clip.
ActorStats train_low_value_and_actors(HierValues& values, PlannerPolicy& manager, WorkerPolicy& worker,
                                      const Environment& env, const OfflineDataset& data, const OfflineConfig& cfg,
                                      Rng& rng, int steps);

/// Flat goal-conditioned AWR baseline: the same update as the worker, but toward
/// the hindsight goals V^l is trained on. Leaves V^l alone. Returns the mean weight.
double train_flat_actor(const HierValues& values, WorkerPolicy& flat, const OfflineDataset& data,
                        const OfflineConfig& cfg, Rng& rng, int steps);

/// Landmark set maintained by farthest-point sampling under d(s, s') = -V^l(s, s').
struct GoalBuffer {
    std::vector<StateId> landmarks;
    std::size_t capacity = 256;

    bool contains(StateId s) const;
};

/// Greedily inserts the candidate with the largest minimum distance to the buffer
/// until it is full or no unseen candidate is left. Ties go to the earliest candidate.
GoalBuffer fps_update(GoalBuffer buffer, std::span<const StateId> candidates, const HierValues& values);

/// Landmark closest to `s` under the value distance.
StateId nearest_landmark(const GoalBuffer& buffer, StateId s, const HierValues& values);

/// Leftmost-branch decomposition with the manager's greedy proposal snapped to the
/// nearest landmark, until normalized V^l(init, subgoal) > theta.
SubgoalStack offline_plan(const PlannerPolicy& manager, const HierValues& values, const GoalBuffer& buffer,
                          const Task& task, const OfflineConfig& cfg, int max_depth);

/// Distinct states in the dataset, in first-visit order.
std::vector<StateId> dataset_states(const OfflineDataset& data);

}  // namespace dhp
