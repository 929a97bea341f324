#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dhp/policy.hpp"
#include "dhp/returns.hpp"

namespace dhp {

/// Visit counts of coarse triplets (s_{t-q}, s_{t-q/2}, s_t) at resolution q.
class TripletTable {
public:
    std::uint32_t count(StateId a, StateId mid, StateId b, int q) const;
    void increment(StateId a, StateId mid, StateId b, int q);

    /// Distinct triplets seen at resolution q, or over all resolutions.
    std::size_t distinct(int q) const;
    std::size_t distinct() const { return counts_.size(); }

private:
    static std::uint64_t key(StateId a, StateId mid, StateId b, int q);
    std::unordered_map<std::uint64_t, std::uint32_t> counts_;
    std::unordered_map<int, std::size_t> distinct_by_q_;
};

/// Novelty of the newest coarse step t without touching the table:
///   sum_{q in Q, t-q >= 0} 1 / (1 + counts(s_{t-q}, s_{t-q/2}, s_t, q)).
/// `extra` is added to the counts when given (rollout-local visits).
double triplet_novelty(const TripletTable& table, std::span<const StateId> coarse, std::size_t t,
                       std::span<const int> resolutions, const TripletTable* extra = nullptr);

/// Rewards for every coarse step in order; each step is scored before its own
/// triplets are counted, so a triplet repeated later in the same sequence pays less.
std::vector<double> exploration_reward(TripletTable& table, std::span<const StateId> coarse,
                                       std::span<const int> resolutions);

/// Counts the triplets ending at coarse step t.
void record_triplets(TripletTable& table, std::span<const StateId> coarse, std::size_t t,
                     std::span<const int> resolutions);

/// Keeps every K-th visited state (s_K, s_2K, ...; the start state is not stored)
/// and exposes (s_{t-K}, s_{t-2K}, s_{t-4K}, ...), log2(L_mem) slots in all.
class MemoryBuffer {
public:
    explicit MemoryBuffer(int k, int capacity = 8);

    int k() const { return k_; }
    int capacity() const { return capacity_; }
    std::size_t slots() const { return offsets_.size(); }

    void reset();
    /// Called with every visited state and its step index; keeps it when t > 0 and t % K == 0.
    void observe(std::size_t t, StateId state);
    /// Missing slots hold kNullState.
    std::vector<StateId> extract(std::size_t t) const;

private:
    int k_;
    int capacity_;
    std::vector<std::size_t> offsets_;
    std::vector<StateId> ring_;
    std::vector<std::size_t> ring_step_;
};

struct ExplorerConfig {
    int k = 2;                          ///< explorer decision period
    int horizon = 64;                   ///< steps per episode, a multiple of k
    int memory = 8;                     ///< L_mem
    std::vector<int> resolutions{2, 4}; ///< Q in coarse steps
    int imagined_rollouts = 64;         ///< rollouts per real decision
    int imagined_horizon = 1;           ///< decisions per imagined rollout
    double learning_rate = 2.0;
    double value_learning_rate = 0.5;
    double entropy_coeff = 0.0;
    bool random_goals = false;          ///< uniform-random goal baseline

    void validate() const;
    int decisions() const { return horizon / k; }
};

/// pi_E(z | s_t, mem_t) and v_E over every environment state as candidate goal.
class ExplorerPolicy {
public:
    ExplorerPolicy(std::uint32_t state_count, std::size_t memory_slots, double learning_rate,
                   double value_learning_rate, double entropy_coeff);

    std::uint64_t key(StateId state, std::span<const StateId> memory) const;
    std::vector<double> probabilities(std::uint64_t key) const;
    double value(std::uint64_t key) const;

    std::vector<double>& mutable_logits(std::uint64_t key);
    double& mutable_value(std::uint64_t key) { return values_[key]; }

    std::uint32_t candidate_count() const { return state_count_; }
    std::size_t row_count() const { return rows_.size(); }
    double learning_rate() const { return learning_rate_; }
    double value_learning_rate() const { return value_learning_rate_; }
    double entropy_coeff() const { return entropy_coeff_; }

private:
    std::uint32_t state_count_;
    std::size_t memory_slots_;
    double learning_rate_;
    double value_learning_rate_;
    double entropy_coeff_;
    std::unordered_map<std::uint64_t, std::vector<double>> rows_;
    std::unordered_map<std::uint64_t, double> values_;
};

/// One decision sequence with per-decision rewards r_k (paid on arriving after decision k).
struct ExplorerRollout {
    std::vector<std::uint64_t> keys;
    std::vector<std::uint32_t> goals;
    std::vector<double> rewards;
    double end_value = 0.0;  ///< bootstrap past the last decision
};

/// Linear lambda-returns with gamma_L, then the same REINFORCE-with-baseline step
/// as the planner, averaged over rollouts. Throws std::invalid_argument when empty.
GradientReport update_explorer(ExplorerPolicy& policy, std::span<const ExplorerRollout> rollouts,
                               const ReturnConfig& cfg);

/// Returns of a rollout under the current critic.
std::vector<double> explorer_returns(const ExplorerPolicy& policy, const ExplorerRollout& rollout,
                                     const ReturnConfig& cfg);

struct ExplorationEpisode {
    std::vector<StateId> states;  ///< every visited state, horizon + 1 entries
    std::vector<StateId> coarse;  ///< every K-th state, starting with the first
    std::vector<StateId> goals;   ///< goal chosen at each decision
    std::vector<double> rewards;  ///< novelty of each coarse step after the first
};

struct ExplorationResult {
    std::vector<ExplorationEpisode> episodes;
    std::vector<std::size_t> coverage;  ///< distinct triplets after each episode
};

/// Runs `episodes` episodes from uniformly drawn start states. Every K steps a goal
/// is chosen (policy or uniform), the BFS-greedy stand-in walks toward it for K
/// steps, and the triplet table is updated. Unless random_goals is set, each real
/// decision is preceded by imagined rollouts that continue from the real history,
/// score novelty against the frozen table plus their own visits, and train the policy.
ExplorationResult run_exploration(const Environment& env, ExplorerPolicy& policy, TripletTable& table,
                                  const ExplorerConfig& cfg, int episodes, const ReturnConfig& returns, Rng& rng);

/// JSONL, one episode per line: {"states": [...], "coarse": [...], "rewards": [...]}.
std::string episodes_to_jsonl(std::span<const ExplorationEpisode> episodes);
std::vector<ExplorationEpisode> episodes_from_jsonl(const std::string& text);

/// Hindsight task sampler over logged data: a random episode, then states at
/// steps i < j on it. Falls back to (s, s) only for single-state episodes.
Task sample_logged_task(std::span<const ExplorationEpisode> episodes, Rng& rng);

}  // namespace dhp
