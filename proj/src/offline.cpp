#include "dhp/offline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace dhp {

void OfflineConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("expectile tau must lie in (0, 1)");
    if (!(gamma_h > 0.0 && gamma_h < 1.0) || !(gamma_l > 0.0 && gamma_l < 1.0)) {
        throw ConfigError("offline discounts must lie in (0, 1)");
    }
    if (buffer_capacity < 1) throw ConfigError("goal buffer capacity must be positive");
    if (subgoal_steps < 1 || valid_subgoal_steps < 1) throw ConfigError("subgoal step thresholds must be positive");
    if (batch_size < 1 || target_period < 1) throw ConfigError("batch size and target period must be positive");
}

double expectile_loss(double u, double tau) { return std::abs(tau - (u < 0.0 ? 1.0 : 0.0)) * u * u; }

double expectile_grad(double u, double tau) { return 2.0 * std::abs(tau - (u < 0.0 ? 1.0 : 0.0)) * u; }

RunningStats::RunningStats(double half_life) : alpha_(1.0 - std::exp2(-1.0 / half_life)) {
    if (!(half_life > 0.0)) throw ConfigError("half-life must be positive");
}

void RunningStats::add(double x) {
    if (count_++ == 0) {
        mean_ = x;
        var_ = 0.0;
        return;
    }
    const double d = x - mean_;
    mean_ += alpha_ * d;
    var_ = (1.0 - alpha_) * (var_ + alpha_ * d * d);
}

double RunningStats::stddev() const { return std::sqrt(var_); }

HierValues::HierValues(std::uint32_t state_count, double stats_half_life, double low_init)
    : n_(state_count),
      high_(static_cast<std::size_t>(state_count) * state_count, 0.0),
      high_target_(high_),
      low_(high_.size(), low_init),
      stats_(stats_half_life) {}

double HierValues::normalized_low(StateId s, StateId g) const {
    return (low(s, g) - stats_.mean()) / std::max(stats_.stddev(), 1e-6);
}

WorkerPolicy::WorkerPolicy(std::uint32_t state_count, int action_count)
    : n_(state_count), actions_(action_count),
      logits_(static_cast<std::size_t>(state_count) * state_count * action_count, 0.0) {}

std::span<const double> WorkerPolicy::logits(StateId s, StateId g) const {
    return {logits_.data() + (static_cast<std::size_t>(s.value) * n_ + g.value) * actions_,
            static_cast<std::size_t>(actions_)};
}

std::span<double> WorkerPolicy::mutable_logits(StateId s, StateId g) {
    return {logits_.data() + (static_cast<std::size_t>(s.value) * n_ + g.value) * actions_,
            static_cast<std::size_t>(actions_)};
}

int WorkerPolicy::act(StateId s, StateId g) const { return static_cast<int>(argmax(logits(s, g))); }

// ---------------------------------------------------------------------------

OfflineDataset generate_noisy_expert(const Environment& env, int episodes, int horizon, double epsilon, Rng& rng) {
    OfflineDataset data;
    const std::uint32_t n = env.state_count();
    for (int e = 0; e < episodes; ++e) {
        OfflineEpisode ep;
        StateId s{uniform_index(rng, n)};
        StateId goal{uniform_index(rng, n)};
        ep.states.push_back(s);
        for (int t = 0; t < horizon; ++t) {
            while (goal == s) goal = StateId{uniform_index(rng, n)};
            int a;
            if (uniform_real(rng) < epsilon) {
                a = static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(env.action_count())));
            } else {
                a = env.greedy_action(s, goal).value_or(0);
            }
            s = env.step(s, a);
            ep.actions.push_back(a);
            ep.states.push_back(s);
        }
        data.push_back(std::move(ep));
    }
    return data;
}

std::string dataset_to_jsonl(const OfflineDataset& data) {
    std::string out;
    for (const auto& ep : data) {
        std::vector<std::uint32_t> states;
        for (auto s : ep.states) states.push_back(s.value);
        out += nlohmann::json{{"states", states}, {"actions", ep.actions}}.dump();
        out += '\n';
    }
    return out;
}

OfflineDataset dataset_from_jsonl(const std::string& text) {
    OfflineDataset data;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        OfflineEpisode ep;
        for (auto v : j.at("states")) ep.states.push_back(StateId{v.get<std::uint32_t>()});
        ep.actions = j.at("actions").get<std::vector<int>>();
        if (ep.states.size() != ep.actions.size() + 1) throw std::invalid_argument("episode states/actions mismatch");
        data.push_back(std::move(ep));
    }
    return data;
}

std::vector<StateId> dataset_states(const OfflineDataset& data) {
    std::vector<StateId> out;
    std::unordered_set<StateId> seen;
    for (const auto& ep : data) {
        for (auto s : ep.states) {
            if (seen.insert(s).second) out.push_back(s);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void require_data(const OfflineDataset& data) {
    if (data.empty()) throw std::invalid_argument("offline dataset is empty");
    for (const auto& ep : data) {
        if (ep.states.size() >= 3) return;
    }
    throw std::invalid_argument("offline dataset has no episode long enough to sample from");
}

const OfflineEpisode& pick_episode(const OfflineDataset& data, Rng& rng, std::size_t min_states) {
    while (true) {
        const auto& ep = data[uniform_index(rng, static_cast<std::uint32_t>(data.size()))];
        if (ep.states.size() >= min_states) return ep;
    }
}

struct Triple {
    StateId s, w, g;
    double r_left, r_right;
};

// The index gap is log-uniform in [2, n-1] so short spans, where the rewards
// live, are not drowned out by long ones.
Triple sample_triple(const OfflineDataset& data, const OfflineConfig& cfg, Rng& rng) {
    const auto& ep = pick_episode(data, rng, 3);
    const auto n = static_cast<std::uint32_t>(ep.states.size());
    const double span = std::log(static_cast<double>(n - 1)) - std::log(2.0);
    auto gap = static_cast<std::uint32_t>(std::exp(std::log(2.0) + uniform_real(rng) * span) + 0.5);
    gap = std::clamp<std::uint32_t>(gap, 2, n - 1);
    const std::uint32_t i = uniform_index(rng, n - gap), j = i + gap;
    const std::uint32_t m = (i + j) / 2;
    const auto k = static_cast<std::uint32_t>(cfg.subgoal_steps);
    return Triple{ep.states[i], ep.states[m], ep.states[j], m - i <= k ? 1.0 : 0.0, j - m <= k ? 1.0 : 0.0};
}

template <typename V>
double tree_target(const Triple& t, double gamma, V value) {
    return std::min(t.r_left + gamma * (1.0 - t.r_left) * value(t.s, t.w),
                    t.r_right + gamma * (1.0 - t.r_right) * value(t.w, t.g));
}

// weight * d/dlogits log softmax(choice)
void awr_step(std::span<double> logits, std::size_t choice, double weight, double lr) {
    const auto p = softmax(logits);
    for (std::size_t k = 0; k < logits.size(); ++k) logits[k] -= lr * weight * p[k];
    logits[choice] += lr * weight;
}

}  // namespace

ExpectileStats train_high_value(HierValues& values, const OfflineDataset& data, const OfflineConfig& cfg,
                                Rng& rng, int steps) {
    require_data(data);
    ExpectileStats st;
    for (int step = 0; step < steps; ++step) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto t = sample_triple(data, cfg, rng);
            const double target =
                tree_target(t, cfg.gamma_h, [&](StateId a, StateId c) { return values.high_target(a, c); });
            double& v = values.high(t.s, t.g);
            const double u = target - v;
            st.loss += expectile_loss(u, cfg.tau);
            ++st.samples;
            v += cfg.value_lr * expectile_grad(u, cfg.tau);
        }
    }
    if (st.samples > 0) st.loss /= static_cast<double>(st.samples);
    return st;
}

ActorStats train_low_value_and_actors(HierValues& values, PlannerPolicy& manager, WorkerPolicy& worker,
                                      const Environment& env, const OfflineDataset& data, const OfflineConfig& cfg,
                                      Rng& rng, int steps) {
    require_data(data);
    ActorStats st;
    std::size_t n_manager = 0, n_worker = 0;
    const auto all_states = dataset_states(data);
    for (int step = 0; step < steps; ++step) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            // low level: a transition relabelled with a later state or a random one
            const auto& ep = pick_episode(data, rng, 2);
            const auto T = static_cast<std::uint32_t>(ep.actions.size());
            const std::uint32_t t = uniform_index(rng, T);
            StateId g;
            if (uniform_real(rng) < cfg.random_goal_prob) {
                g = all_states[uniform_index(rng, static_cast<std::uint32_t>(all_states.size()))];
            } else {
                g = ep.states[t + 1 + uniform_index(rng, T - t)];
            }
            const StateId s = ep.states[t], s2 = ep.states[t + 1];
            const double r = env.reachable(s2, g, 1) ? 1.0 : 0.0;
            double& v = values.low(s, g);
            // a reached goal is absorbing and keeps paying r = 1
            const double target = r > 0.0 ? 1.0 / (1.0 - cfg.gamma_l) : cfg.gamma_l * values.low(s2, g);
            const double u = target - v;
            st.low_value.loss += expectile_loss(u, cfg.tau);
            ++st.low_value.samples;
            v += cfg.value_lr * expectile_grad(u, cfg.tau);

            // the worker only ever chases nearby subgoals
            const auto hw = std::min<std::uint32_t>(T - t, static_cast<std::uint32_t>(cfg.worker_horizon));
            const StateId w = ep.states[t + 1 + uniform_index(rng, hw)];
            const double a_low = values.low(s2, w) - values.low(s, w);
            const double w_low = std::min(std::exp(cfg.beta_awr * a_low), cfg.weight_clip);
            awr_step(worker.mutable_logits(s, w), static_cast<std::size_t>(ep.actions[t]), w_low, cfg.actor_lr);
            st.worker_weight += w_low;
            ++n_worker;

            // statistics of V^l over short, valid subgoal pairs
            const auto k = std::min<std::uint32_t>(T - t, static_cast<std::uint32_t>(cfg.valid_subgoal_steps));
            values.low_stats().add(values.low(s, ep.states[t + 1 + uniform_index(rng, k)]));

            // high level: AWR toward dataset midpoints
            const auto tr = sample_triple(data, cfg, rng);
            const double a_high =
                tree_target(tr, cfg.gamma_h, [&](StateId a, StateId c) { return values.high(a, c); }) -
                values.high(tr.s, tr.g);
            const double w_high = std::min(std::exp(cfg.beta_awr * a_high), cfg.weight_clip);
            const Task task{tr.s, tr.g};
            awr_step(manager.mutable_logits(task), manager.frame().candidate_of(task, tr.w), w_high, cfg.actor_lr);
            st.manager_weight += w_high;
            ++n_manager;
        }
    }
    if (st.low_value.samples > 0) st.low_value.loss /= static_cast<double>(st.low_value.samples);
    if (n_manager > 0) st.manager_weight /= static_cast<double>(n_manager);
    if (n_worker > 0) st.worker_weight /= static_cast<double>(n_worker);
    return st;
}

// ---------------------------------------------------------------------------

bool GoalBuffer::contains(StateId s) const {
    return std::find(landmarks.begin(), landmarks.end(), s) != landmarks.end();
}

GoalBuffer fps_update(GoalBuffer buffer, std::span<const StateId> candidates, const HierValues& values) {
    if (candidates.empty()) throw std::invalid_argument("fps_update needs candidates");
    if (buffer.landmarks.empty()) buffer.landmarks.push_back(candidates.front());
    const auto d = [&](StateId a, StateId b) { return -values.low(a, b); };

    std::vector<double> min_d(candidates.size(), std::numeric_limits<double>::infinity());
    std::vector<std::uint8_t> taken(candidates.size(), 0);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (buffer.contains(candidates[c])) taken[c] = 1;
        for (auto l : buffer.landmarks) min_d[c] = std::min(min_d[c], d(candidates[c], l));
    }
    while (buffer.landmarks.size() < buffer.capacity) {
        std::size_t best = candidates.size();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (taken[c]) continue;
            if (best == candidates.size() || min_d[c] > min_d[best]) best = c;
        }
        if (best == candidates.size()) break;
        const StateId chosen = candidates[best];
        buffer.landmarks.push_back(chosen);
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (candidates[c] == chosen) taken[c] = 1;
            min_d[c] = std::min(min_d[c], d(candidates[c], chosen));
        }
    }
    return buffer;
}

StateId nearest_landmark(const GoalBuffer& buffer, StateId s, const HierValues& values) {
    if (buffer.landmarks.empty()) throw std::invalid_argument("goal buffer is empty");
    StateId best = buffer.landmarks.front();
    for (auto l : buffer.landmarks) {
        if (-values.low(s, l) < -values.low(s, best)) best = l;
    }
    return best;
}

SubgoalStack offline_plan(const PlannerPolicy& manager, const HierValues& values, const GoalBuffer& buffer,
                          const Task& task, const OfflineConfig& cfg, int max_depth) {
    if (buffer.landmarks.empty()) throw std::invalid_argument("offline planning needs a non-empty goal buffer");
    SubgoalStack stack;
    stack.subgoals.push_back(task.goal);
    Rng unused(0);
    while (true) {
        const StateId g = stack.subgoals.back();
        if (values.normalized_low(task.init, g) > cfg.theta) {
            stack.complete = true;
            break;
        }
        if (stack.policy_calls >= max_depth) break;
        const auto proposal = policy_sample(manager, Task{task.init, g}, unused, SampleMode::greedy).subgoal;
        stack.subgoals.push_back(nearest_landmark(buffer, proposal, values));
        ++stack.policy_calls;
    }
    return stack;
}

double train_flat_actor(const HierValues& values, WorkerPolicy& flat, const OfflineDataset& data,
                        const OfflineConfig& cfg, Rng& rng, int steps) {
    require_data(data);
    const auto all_states = dataset_states(data);
    double weight = 0.0;
    std::size_t n = 0;
    for (int step = 0; step < steps; ++step) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& ep = pick_episode(data, rng, 2);
            const auto T = static_cast<std::uint32_t>(ep.actions.size());
            const std::uint32_t t = uniform_index(rng, T);
            StateId g;
            if (uniform_real(rng) < cfg.random_goal_prob) {
                g = all_states[uniform_index(rng, static_cast<std::uint32_t>(all_states.size()))];
            } else {
                g = ep.states[t + 1 + uniform_index(rng, T - t)];
            }
            const StateId s = ep.states[t], s2 = ep.states[t + 1];
            const double w = std::min(std::exp(cfg.beta_awr * (values.low(s2, g) - values.low(s, g))), cfg.weight_clip);
            awr_step(flat.mutable_logits(s, g), static_cast<std::size_t>(ep.actions[t]), w, cfg.actor_lr);
            weight += w;
            ++n;
        }
    }
    return n > 0 ? weight / static_cast<double>(n) : 0.0;
}

}  // namespace dhp
