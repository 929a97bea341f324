#include "dhp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace dhp {

TaskFrame::TaskFrame(std::uint32_t state_count, TaskEncoding encoding)
    : state_count_(state_count), encoding_(encoding) {
    if (state_count == 0) throw ConfigError("TaskFrame: empty state space");
    if (encoding == TaskEncoding::xor_relative && (state_count & (state_count - 1)) != 0) {
        throw ConfigError("TaskFrame: xor_relative needs a power-of-two state count");
    }
}

TaskFrame TaskFrame::for_env(const Environment& env) {
    return TaskFrame(env.state_count(),
                     env.translation_invariant() ? TaskEncoding::xor_relative : TaskEncoding::absolute);
}

std::uint64_t TaskFrame::key(const Task& task) const {
    if (encoding_ == TaskEncoding::xor_relative) return task.init.value ^ task.goal.value;
    return static_cast<std::uint64_t>(task.init.value) * state_count_ + task.goal.value;
}

StateId TaskFrame::subgoal(const Task& task, std::uint32_t candidate) const {
    if (encoding_ == TaskEncoding::xor_relative) return StateId{task.init.value ^ candidate};
    return StateId{candidate};
}

std::uint32_t TaskFrame::candidate_of(const Task& task, StateId subgoal) const {
    if (encoding_ == TaskEncoding::xor_relative) return task.init.value ^ subgoal.value;
    return subgoal.value;
}

// ---------------------------------------------------------------------------

PlannerPolicy::PlannerPolicy(TaskFrame frame, double learning_rate, double entropy_coeff)
    : frame_(frame), learning_rate_(learning_rate), entropy_coeff_(entropy_coeff),
      zeros_(frame.candidate_count(), 0.0) {}

std::span<const double> PlannerPolicy::logits(const Task& task) const { return logits_by_key(frame_.key(task)); }

std::span<const double> PlannerPolicy::logits_by_key(std::uint64_t key) const {
    const auto it = rows_.find(key);
    return it == rows_.end() ? std::span<const double>(zeros_) : std::span<const double>(it->second);
}

std::vector<double>& PlannerPolicy::mutable_logits(const Task& task) { return mutable_logits_by_key(frame_.key(task)); }

std::vector<double>& PlannerPolicy::mutable_logits_by_key(std::uint64_t key) {
    auto [it, inserted] = rows_.try_emplace(key);
    if (inserted) it->second.assign(frame_.candidate_count(), 0.0);
    return it->second;
}

std::vector<double> PlannerPolicy::probabilities(const Task& task) const { return softmax(logits(task)); }

namespace {

const char* encoding_name(TaskEncoding e) { return e == TaskEncoding::xor_relative ? "xor_relative" : "absolute"; }

TaskEncoding parse_encoding(const std::string& s) {
    if (s == "xor_relative") return TaskEncoding::xor_relative;
    if (s == "absolute") return TaskEncoding::absolute;
    throw ConfigError("unknown task encoding: " + s);
}

// Keys are written as "(init,goal)" with the canonical representative: for
// xor_relative rows the task (key, 0).
std::string key_string(const TaskFrame& frame, std::uint64_t key) {
    if (frame.encoding() == TaskEncoding::xor_relative) return "(" + std::to_string(key) + ",0)";
    return "(" + std::to_string(key / frame.state_count()) + "," + std::to_string(key % frame.state_count()) + ")";
}

std::uint64_t parse_key(const TaskFrame& frame, const std::string& s) {
    const auto comma = s.find(',');
    if (s.size() < 5 || s.front() != '(' || s.back() != ')' || comma == std::string::npos) {
        throw ConfigError("malformed task key: " + s);
    }
    const auto init = static_cast<std::uint32_t>(std::stoul(s.substr(1, comma - 1)));
    const auto goal = static_cast<std::uint32_t>(std::stoul(s.substr(comma + 1, s.size() - comma - 2)));
    if (init >= frame.state_count() || goal >= frame.state_count()) throw ConfigError("task key out of range: " + s);
    return frame.key(Task{StateId{init}, StateId{goal}});
}

}  // namespace

std::string PlannerPolicy::to_json() const {
    nlohmann::json j;
    j["encoding"] = encoding_name(frame_.encoding());
    j["state_count"] = frame_.state_count();
    j["learning_rate"] = learning_rate_;
    j["entropy_coeff"] = entropy_coeff_;
    std::vector<std::uint32_t> candidates(frame_.candidate_count());
    std::iota(candidates.begin(), candidates.end(), 0u);
    j["candidates"] = candidates;
    std::vector<std::uint64_t> keys;
    for (const auto& [k, _] : rows_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    auto& rows = j["rows"] = nlohmann::json::object();
    for (auto k : keys) rows[key_string(frame_, k)] = rows_.at(k);
    return j.dump();
}

PlannerPolicy PlannerPolicy::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TaskFrame frame(j.at("state_count").get<std::uint32_t>(), parse_encoding(j.at("encoding").get<std::string>()));
    PlannerPolicy policy(frame, j.value("learning_rate", kDefaultLearningRate),
                         j.value("entropy_coeff", kDefaultEntropyCoeff));
    if (j.at("candidates").size() != frame.candidate_count()) throw ConfigError("candidate header size mismatch");
    for (const auto& [k, row] : j.at("rows").items()) {
        auto logits = row.get<std::vector<double>>();
        if (logits.size() != frame.candidate_count()) throw ConfigError("logit row size mismatch for " + k);
        policy.rows_[parse_key(frame, k)] = std::move(logits);
    }
    return policy;
}

// ---------------------------------------------------------------------------

ValueTable::ValueTable(TaskFrame frame, double learning_rate) : frame_(frame), learning_rate_(learning_rate) {}

double ValueTable::get(const Task& task) const { return get_by_key(frame_.key(task)); }

double ValueTable::get_by_key(std::uint64_t key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? 0.0 : it->second;
}

double& ValueTable::at(const Task& task) { return at_by_key(frame_.key(task)); }
double& ValueTable::at_by_key(std::uint64_t key) { return values_[key]; }

void ValueTable::fill(TreeTrajectory& tree) const {
    tree.values.resize(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) tree.values[i] = get(tree.nodes[i]);
}

std::string ValueTable::to_json() const {
    nlohmann::json j;
    j["encoding"] = encoding_name(frame_.encoding());
    j["state_count"] = frame_.state_count();
    j["learning_rate"] = learning_rate_;
    std::vector<std::uint64_t> keys;
    for (const auto& [k, _] : values_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    auto& rows = j["values"] = nlohmann::json::object();
    for (auto k : keys) rows[key_string(frame_, k)] = values_.at(k);
    return j.dump();
}

ValueTable ValueTable::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TaskFrame frame(j.at("state_count").get<std::uint32_t>(), parse_encoding(j.at("encoding").get<std::string>()));
    ValueTable table(frame, j.value("learning_rate", PlannerPolicy::kDefaultLearningRate));
    for (const auto& [k, v] : j.at("values").items()) table.values_[parse_key(frame, k)] = v.get<double>();
    return table;
}

// ---------------------------------------------------------------------------

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double hi = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - hi));
    for (auto& x : p) x /= z;
    return p;
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

void accumulate_softmax_ascent(std::span<double> grad, std::span<const double> probs, std::uint32_t choice,
                               double advantage, double entropy_coeff, double scale) {
    // d log pi(z) / dl_k = [k == z] - p_k ;  dH / dl_k = -p_k (log p_k + H)
    const double h = entropy_coeff != 0.0 ? entropy(probs) : 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        const double p = probs[k];
        double g = -advantage * p;
        if (entropy_coeff != 0.0 && p > 0.0) g -= entropy_coeff * p * (std::log(p) + h);
        grad[k] += scale * g;
    }
    grad[choice] += scale * advantage;
}

std::uint32_t argmax(std::span<const double> values) {
    return static_cast<std::uint32_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

// ---------------------------------------------------------------------------

SubgoalChoice policy_sample(const PlannerPolicy& policy, const Task& task, Rng& rng, SampleMode mode) {
    const auto logits = policy.logits(task);
    const auto probs = softmax(logits);
    std::uint32_t c = 0;
    if (mode == SampleMode::greedy) {
        c = argmax(logits);
    } else {
        double u = uniform_real(rng);
        c = static_cast<std::uint32_t>(probs.size() - 1);
        for (std::size_t k = 0; k < probs.size(); ++k) {
            u -= probs[k];
            if (u < 0.0) {
                c = static_cast<std::uint32_t>(k);
                break;
            }
        }
    }
    // log-softmax directly, so saturated rows do not produce log(0)
    const double hi = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - hi);
    const double log_prob = std::min(0.0, logits[c] - hi - std::log(z));
    return SubgoalChoice{policy.frame().subgoal(task, c), c, log_prob, static_cast<std::uint32_t>(probs.size())};
}

bool gradient_node(const TreeTrajectory& tree, std::size_t i) {
    return tree.is_internal(i) && !tree.is_terminal(i) && tree.actions[i].has_value();
}

std::vector<double> compute_advantages(const TreeTrajectory& tree, const ValueTable& values, const ReturnConfig&) {
    std::vector<double> A(tree.size(), 0.0);
    for (std::size_t i = 0; i < tree.internal_count(); ++i) {
        if (gradient_node(tree, i)) A[i] = tree.returns[i] - values.get(tree.nodes[i]);
    }
    return A;
}

PlannerGradient planner_gradient(const PlannerPolicy& policy, const ValueTable& values,
                                 std::span<const TreeTrajectory> batch, const ReturnConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("planner update needs a non-empty batch");
    PlannerGradient out;
    const double scale = 1.0 / static_cast<double>(batch.size());
    const double eta = policy.entropy_coeff();
    const auto& frame = policy.frame();
    double adv_sum = 0.0, ent_sum = 0.0;

    for (const auto& tree : batch) {
        if (tree.returns.size() != tree.size()) throw std::invalid_argument("tree returns not computed");
        const auto A = compute_advantages(tree, values, cfg);
        for (std::size_t i = 0; i < tree.internal_count(); ++i) {
            if (!gradient_node(tree, i)) continue;
            const Task& task = tree.nodes[i];
            const auto key = frame.key(task);
            const auto probs = softmax(policy.logits_by_key(key));
            const std::uint32_t z = tree.actions[i]->candidate;

            auto [it, inserted] = out.logits.try_emplace(key);
            if (inserted) it->second.assign(frame.candidate_count(), 0.0);
            // descent direction of the loss is the negated ascent direction
            accumulate_softmax_ascent(it->second, probs, z, A[i], eta, -scale);

            const double v = values.get_by_key(key);
            out.values[key] += scale * (v - tree.returns[i]);

            const double h = entropy(probs);
            out.report.actor_loss -= scale * (A[i] * std::log(std::max(probs[z], 1e-300)) + eta * h);
            out.report.critic_loss += scale * 0.5 * (v - tree.returns[i]) * (v - tree.returns[i]);
            adv_sum += A[i];
            ent_sum += h;
            ++out.report.nodes_used;
        }
    }
    if (out.report.nodes_used > 0) {
        out.report.mean_advantage = adv_sum / static_cast<double>(out.report.nodes_used);
        out.report.mean_entropy = ent_sum / static_cast<double>(out.report.nodes_used);
    }
    return out;
}

double planner_actor_loss(const PlannerPolicy& policy, std::span<const TreeTrajectory> batch,
                          std::span<const std::vector<double>> advantages) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t t = 0; t < batch.size(); ++t) {
        const auto& tree = batch[t];
        for (std::size_t i = 0; i < tree.internal_count(); ++i) {
            if (!gradient_node(tree, i)) continue;
            const auto probs = policy.probabilities(tree.nodes[i]);
            loss -= scale * (advantages[t][i] * std::log(probs[tree.actions[i]->candidate]) +
                             policy.entropy_coeff() * entropy(probs));
        }
    }
    return loss;
}

double planner_critic_loss(const ValueTable& values, std::span<const TreeTrajectory> batch) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& tree : batch) {
        for (std::size_t i = 0; i < tree.internal_count(); ++i) {
            if (!gradient_node(tree, i)) continue;
            const double d = values.get(tree.nodes[i]) - tree.returns[i];
            loss += scale * 0.5 * d * d;
        }
    }
    return loss;
}

GradientReport update_planner(PlannerPolicy& policy, ValueTable& values, std::span<const TreeTrajectory> batch,
                              const ReturnConfig& cfg) {
    auto grad = planner_gradient(policy, values, batch, cfg);
    const double lr = policy.learning_rate();
    for (auto& [key, g] : grad.logits) {
        auto& row = policy.mutable_logits_by_key(key);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] -= lr * g[k];
    }
    const double vlr = values.learning_rate();
    for (auto& [key, g] : grad.values) values.at_by_key(key) -= vlr * g;
    return grad.report;
}

// ---------------------------------------------------------------------------

BaselineStatistic baseline_invariance_check(const PlannerPolicy& policy, std::span<const Task> tasks,
                                            std::span<const double> baseline, std::size_t n_samples, Rng& rng) {
    if (tasks.empty() || tasks.size() != baseline.size()) {
        throw std::invalid_argument("baseline_invariance_check: tasks and baseline must be parallel and non-empty");
    }
    const std::size_t m = policy.frame().candidate_count();
    const std::size_t dim = tasks.size() * m;
    std::vector<std::vector<double>> probs;
    for (const auto& t : tasks) probs.push_back(policy.probabilities(t));

    std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0), g(dim, 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::size_t t = tasks.size() == 1 ? 0 : uniform_index(rng, static_cast<std::uint32_t>(tasks.size()));
        const auto choice = policy_sample(policy, tasks[t], rng).candidate;
        std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t k = 0; k < m; ++k) g[t * m + k] = -baseline[t] * probs[t][k];
        g[t * m + choice] += baseline[t];
        for (std::size_t d = 0; d < dim; ++d) {
            sum[d] += g[d];
            sum_sq[d] += g[d] * g[d];
        }
    }
    BaselineStatistic stat;
    stat.samples = n_samples;
    stat.mean_gradient.resize(dim);
    const double n = static_cast<double>(n_samples);
    double norm_sq = 0.0, trace = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double mean = sum[d] / n;
        stat.mean_gradient[d] = mean;
        norm_sq += mean * mean;
        if (n_samples > 1) trace += std::max(0.0, (sum_sq[d] - n * mean * mean) / (n - 1.0));
    }
    stat.mean_norm = std::sqrt(norm_sq);
    stat.standard_error = std::sqrt(trace / n);
    return stat;
}

}  // namespace dhp
