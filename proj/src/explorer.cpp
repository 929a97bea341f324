#include "dhp/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dhp {

std::uint64_t TripletTable::key(StateId a, StateId mid, StateId b, int q) {
    return (static_cast<std::uint64_t>(a.value & 0xFFFFu) << 48) | (static_cast<std::uint64_t>(mid.value & 0xFFFFu) << 32) |
           (static_cast<std::uint64_t>(b.value & 0xFFFFu) << 16) | static_cast<std::uint64_t>(q & 0xFFFF);
}

std::uint32_t TripletTable::count(StateId a, StateId mid, StateId b, int q) const {
    const auto it = counts_.find(key(a, mid, b, q));
    return it == counts_.end() ? 0u : it->second;
}

void TripletTable::increment(StateId a, StateId mid, StateId b, int q) {
    if (counts_[key(a, mid, b, q)]++ == 0) ++distinct_by_q_[q];
}

std::size_t TripletTable::distinct(int q) const {
    const auto it = distinct_by_q_.find(q);
    return it == distinct_by_q_.end() ? 0 : it->second;
}

double triplet_novelty(const TripletTable& table, std::span<const StateId> coarse, std::size_t t,
                       std::span<const int> resolutions, const TripletTable* extra) {
    double r = 0.0;
    for (int q : resolutions) {
        const auto uq = static_cast<std::size_t>(q);
        if (t < uq) continue;
        const StateId a = coarse[t - uq], mid = coarse[t - uq / 2], b = coarse[t];
        double c = table.count(a, mid, b, q);
        if (extra != nullptr) c += extra->count(a, mid, b, q);
        r += 1.0 / (1.0 + c);
    }
    return r;
}

void record_triplets(TripletTable& table, std::span<const StateId> coarse, std::size_t t,
                     std::span<const int> resolutions) {
    for (int q : resolutions) {
        const auto uq = static_cast<std::size_t>(q);
        if (t >= uq) table.increment(coarse[t - uq], coarse[t - uq / 2], coarse[t], q);
    }
}

std::vector<double> exploration_reward(TripletTable& table, std::span<const StateId> coarse,
                                       std::span<const int> resolutions) {
    std::vector<double> r(coarse.size(), 0.0);
    for (std::size_t t = 0; t < coarse.size(); ++t) {
        r[t] = triplet_novelty(table, coarse, t, resolutions);
        record_triplets(table, coarse, t, resolutions);
    }
    return r;
}

// ---------------------------------------------------------------------------

MemoryBuffer::MemoryBuffer(int k, int capacity) : k_(k), capacity_(capacity) {
    if (k < 1) throw ConfigError("memory period K must be at least 1");
    if (capacity < 2 || (capacity & (capacity - 1)) != 0) throw ConfigError("memory size must be a power of two >= 2");
    for (int off = 1; off < capacity; off *= 2) offsets_.push_back(static_cast<std::size_t>(off) * k);
    reset();
}

void MemoryBuffer::reset() {
    ring_.assign(static_cast<std::size_t>(capacity_), kNullState);
    ring_step_.assign(static_cast<std::size_t>(capacity_), 0);
}

void MemoryBuffer::observe(std::size_t t, StateId state) {
    if (t == 0 || t % static_cast<std::size_t>(k_) != 0) return;
    const std::size_t slot = (t / k_) % ring_.size();
    ring_[slot] = state;
    ring_step_[slot] = t;
}

std::vector<StateId> MemoryBuffer::extract(std::size_t t) const {
    std::vector<StateId> out(offsets_.size(), kNullState);
    for (std::size_t j = 0; j < offsets_.size(); ++j) {
        if (t < offsets_[j]) continue;
        const std::size_t step = t - offsets_[j];
        if (step == 0 || step % static_cast<std::size_t>(k_) != 0) continue;
        const std::size_t slot = (step / k_) % ring_.size();
        if (ring_step_[slot] == step) out[j] = ring_[slot];
    }
    return out;
}

// ---------------------------------------------------------------------------

void ExplorerConfig::validate() const {
    if (k < 1) throw ConfigError("explorer K must be at least 1");
    if (horizon < k || horizon % k != 0) throw ConfigError("explorer horizon must be a positive multiple of K");
    if (resolutions.empty()) throw ConfigError("explorer needs at least one resolution");
    for (int q : resolutions) {
        if (q < 2 || q % 2 != 0) throw ConfigError("explorer resolutions must be even and >= 2");
    }
    if (imagined_rollouts < 0 || imagined_horizon < 1) throw ConfigError("bad imagination settings");
}

ExplorerPolicy::ExplorerPolicy(std::uint32_t state_count, std::size_t memory_slots, double learning_rate,
                               double value_learning_rate, double entropy_coeff)
    : state_count_(state_count), memory_slots_(memory_slots), learning_rate_(learning_rate),
      value_learning_rate_(value_learning_rate), entropy_coeff_(entropy_coeff) {
    // one extra symbol for the null slot, and it all has to fit in 64 bits
    const double bits = std::log2(static_cast<double>(state_count) + 1.0) * static_cast<double>(memory_slots + 1);
    if (bits > 64.0) throw ConfigError("explorer key space does not fit in 64 bits");
}

std::uint64_t ExplorerPolicy::key(StateId state, std::span<const StateId> memory) const {
    if (memory.size() != memory_slots_) throw std::invalid_argument("memory tuple has the wrong number of slots");
    const std::uint64_t base = static_cast<std::uint64_t>(state_count_) + 1;
    std::uint64_t k = state.value;
    for (StateId m : memory) k = k * base + (m == kNullState ? state_count_ : m.value);
    return k;
}

std::vector<double> ExplorerPolicy::probabilities(std::uint64_t key) const {
    const auto it = rows_.find(key);
    if (it == rows_.end()) return std::vector<double>(state_count_, 1.0 / state_count_);
    auto p = softmax(it->second);
    // keep every goal reachable so log-probabilities stay finite at high learning rates
    double z = 0.0;
    for (auto& x : p) z += (x = std::max(x, 1e-12));
    for (auto& x : p) x /= z;
    return p;
}

double ExplorerPolicy::value(std::uint64_t key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? 0.0 : it->second;
}

std::vector<double>& ExplorerPolicy::mutable_logits(std::uint64_t key) {
    auto [it, inserted] = rows_.try_emplace(key);
    if (inserted) it->second.assign(state_count_, 0.0);
    return it->second;
}

std::vector<double> explorer_returns(const ExplorerPolicy& policy, const ExplorerRollout& rollout,
                                     const ReturnConfig& cfg) {
    const std::size_t n = rollout.keys.size();
    std::vector<double> next(n);
    for (std::size_t j = 0; j + 1 < n; ++j) next[j] = policy.value(rollout.keys[j + 1]);
    next[n - 1] = rollout.end_value;
    // the last step bootstraps on end_value alone
    auto G = linear_lambda_return(rollout.rewards, next, cfg);
    return G;
}

GradientReport update_explorer(ExplorerPolicy& policy, std::span<const ExplorerRollout> rollouts,
                               const ReturnConfig& cfg) {
    if (rollouts.empty()) throw std::invalid_argument("update_explorer needs at least one rollout");
    const double scale = 1.0 / static_cast<double>(rollouts.size());
    std::unordered_map<std::uint64_t, std::vector<double>> grad;
    std::unordered_map<std::uint64_t, double> vgrad;
    GradientReport report;
    double adv_sum = 0.0, ent_sum = 0.0;

    for (const auto& ro : rollouts) {
        if (ro.keys.empty() || ro.keys.size() != ro.goals.size() || ro.keys.size() != ro.rewards.size()) {
            throw std::invalid_argument("malformed explorer rollout");
        }
        const auto G = explorer_returns(policy, ro, cfg);
        for (std::size_t j = 0; j < ro.keys.size(); ++j) {
            const auto key = ro.keys[j];
            const auto probs = policy.probabilities(key);
            const double v = policy.value(key);
            const double A = G[j] - v;
            auto [it, inserted] = grad.try_emplace(key);
            if (inserted) it->second.assign(policy.candidate_count(), 0.0);
            accumulate_softmax_ascent(it->second, probs, ro.goals[j], A, policy.entropy_coeff(), scale);
            vgrad[key] += scale * (G[j] - v);

            const double h = entropy(probs);
            report.actor_loss -= scale * (A * std::log(probs[ro.goals[j]]) + policy.entropy_coeff() * h);
            report.critic_loss += scale * 0.5 * A * A;
            adv_sum += A;
            ent_sum += h;
            ++report.nodes_used;
        }
    }
    for (auto& [key, g] : grad) {
        auto& row = policy.mutable_logits(key);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] += policy.learning_rate() * g[k];
    }
    for (auto& [key, g] : vgrad) policy.mutable_value(key) += policy.value_learning_rate() * g;
    report.mean_advantage = adv_sum / static_cast<double>(report.nodes_used);
    report.mean_entropy = ent_sum / static_cast<double>(report.nodes_used);
    return report;
}

// ---------------------------------------------------------------------------

namespace {

std::uint32_t sample_from(const std::vector<double>& p, Rng& rng) {
    double u = uniform_real(rng);
    for (std::size_t k = 0; k < p.size(); ++k) {
        u -= p[k];
        if (u < 0.0) return static_cast<std::uint32_t>(k);
    }
    return static_cast<std::uint32_t>(p.size() - 1);
}

// Walks K greedy steps toward goal, appending every state to `states` and the memory.
StateId walk(const Environment& env, StateId s, StateId goal, int k, std::vector<StateId>& states,
             MemoryBuffer& memory) {
    for (int i = 0; i < k; ++i) {
        s = env.move_toward(s, goal, 1);
        states.push_back(s);
        memory.observe(states.size() - 1, s);
    }
    return s;
}

}  // namespace

ExplorationResult run_exploration(const Environment& env, ExplorerPolicy& policy, TripletTable& table,
                                  const ExplorerConfig& cfg, int episodes, const ReturnConfig& returns, Rng& rng) {
    cfg.validate();
    if (policy.candidate_count() != env.state_count()) throw ConfigError("explorer policy does not match environment");
    ExplorationResult result;
    const std::uint32_t n = env.state_count();

    for (int ep = 0; ep < episodes; ++ep) {
        ExplorationEpisode episode;
        MemoryBuffer memory(cfg.k, cfg.memory);
        StateId s{uniform_index(rng, n)};
        episode.states.push_back(s);
        episode.coarse.push_back(s);

        for (int d = 0; d < cfg.decisions(); ++d) {
            const std::size_t t = episode.states.size() - 1;
            if (!cfg.random_goals) {
                for (int m = 0; m < cfg.imagined_rollouts; ++m) {
                    ExplorerRollout ro;
                    TripletTable local;
                    auto states = episode.states;
                    auto coarse = episode.coarse;
                    MemoryBuffer mem = memory;
                    StateId si = s;
                    const int steps = std::min(cfg.imagined_horizon, cfg.decisions() - d);
                    for (int j = 0; j < steps; ++j) {
                        const auto key = policy.key(si, mem.extract(states.size() - 1));
                        const auto g = sample_from(policy.probabilities(key), rng);
                        si = walk(env, si, StateId{g}, cfg.k, states, mem);
                        coarse.push_back(si);
                        ro.keys.push_back(key);
                        ro.goals.push_back(g);
                        ro.rewards.push_back(triplet_novelty(table, coarse, coarse.size() - 1, cfg.resolutions, &local));
                        record_triplets(local, coarse, coarse.size() - 1, cfg.resolutions);
                    }
                    update_explorer(policy, std::span<const ExplorerRollout>(&ro, 1), returns);
                }
            }
            StateId goal;
            if (cfg.random_goals) {
                goal = StateId{uniform_index(rng, n)};
            } else {
                goal = StateId{sample_from(policy.probabilities(policy.key(s, memory.extract(t))), rng)};
            }
            s = walk(env, s, goal, cfg.k, episode.states, memory);
            episode.coarse.push_back(s);
            episode.goals.push_back(goal);
            const std::size_t ct = episode.coarse.size() - 1;
            episode.rewards.push_back(triplet_novelty(table, episode.coarse, ct, cfg.resolutions));
            record_triplets(table, episode.coarse, ct, cfg.resolutions);
        }
        result.episodes.push_back(std::move(episode));
        result.coverage.push_back(table.distinct());
    }
    return result;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint32_t> raw(std::span<const StateId> s) {
    std::vector<std::uint32_t> out;
    out.reserve(s.size());
    for (auto x : s) out.push_back(x.value);
    return out;
}

std::vector<StateId> ids(const nlohmann::json& j) {
    std::vector<StateId> out;
    for (const auto& x : j) out.push_back(StateId{x.get<std::uint32_t>()});
    return out;
}

}  // namespace

std::string episodes_to_jsonl(std::span<const ExplorationEpisode> episodes) {
    std::string out;
    for (const auto& e : episodes) {
        nlohmann::json j;
        j["states"] = raw(e.states);
        j["coarse"] = raw(e.coarse);
        j["goals"] = raw(e.goals);
        j["rewards"] = e.rewards;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<ExplorationEpisode> episodes_from_jsonl(const std::string& text) {
    std::vector<ExplorationEpisode> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ExplorationEpisode e;
        e.states = ids(j.at("states"));
        e.coarse = ids(j.at("coarse"));
        if (j.contains("goals")) e.goals = ids(j.at("goals"));
        e.rewards = j.at("rewards").get<std::vector<double>>();
        out.push_back(std::move(e));
    }
    return out;
}

Task sample_logged_task(std::span<const ExplorationEpisode> episodes, Rng& rng) {
    if (episodes.empty()) throw std::invalid_argument("no logged episodes to sample from");
    const auto& e = episodes[uniform_index(rng, static_cast<std::uint32_t>(episodes.size()))];
    const auto n = static_cast<std::uint32_t>(e.states.size());
    if (n < 2) return Task{e.states.front(), e.states.front()};
    std::uint32_t i = uniform_index(rng, n), j = uniform_index(rng, n - 1);
    if (j >= i) ++j;
    if (i > j) std::swap(i, j);
    return Task{e.states[i], e.states[j]};
}

}  // namespace dhp
