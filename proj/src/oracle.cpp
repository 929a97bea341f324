#include "dhp/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <queue>
#include <stdexcept>

#include "json.hpp"

namespace dhp::oracle {

std::vector<int> bfs_row(const Environment& env, StateId from) {
    const std::uint32_t n = env.state_count();
    if (from.value >= n) throw InvalidState("bfs: state out of range");
    std::vector<int> dist(n, -1);
    std::queue<std::uint32_t> frontier;
    dist[from.value] = 0;
    frontier.push(from.value);
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop();
        for (int a = 0; a < env.action_count(); ++a) {
            const auto v = env.step(StateId{u}, a).value;
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                frontier.push(v);
            }
        }
    }
    return dist;
}

std::optional<int> bfs_distance(const Environment& env, StateId from, StateId to) {
    if (to.value >= env.state_count()) throw InvalidState("bfs: state out of range");
    const int d = bfs_row(env, from)[to.value];
    if (d < 0) return std::nullopt;
    return d;
}

// ---------------------------------------------------------------------------

std::vector<double> oracle_tree_return(const TreeTrajectory& tree, std::span<const double> values,
                                       const ReturnConfig& cfg, ReturnKind kind) {
    const std::size_t n = tree.nodes.size();
    const std::size_t internal = (std::size_t{1} << tree.depth) - 1;
    const double lam = kind == ReturnKind::mc ? 1.0 : kind == ReturnKind::one_step ? 0.0 : cfg.lambda;
    auto v = [&](std::size_t i) { return values.empty() ? 0.0 : values[i]; };

    std::function<double(std::size_t)> G = [&](std::size_t i) -> double {
        if (tree.terminal[i]) return 0.0;
        if (i >= internal) return kind == ReturnKind::mc ? 0.0 : v(i);
        double best = 0.0;
        for (std::size_t c : {2 * i + 1, 2 * i + 2}) {
            double cont;
            if (kind == ReturnKind::one_step) {
                cont = v(c);
            } else if (kind == ReturnKind::mc) {
                cont = G(c);
            } else {
                cont = (1.0 - lam) * v(c) + lam * G(c);
            }
            const double x = tree.rewards[c] + cfg.gamma * cont;
            best = c == 2 * i + 1 ? x : std::min(best, x);
        }
        return best;
    };
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = G(i);
    return out;
}

TreeTrajectory random_tree(Rng& rng, int max_depth, double gamma) {
    const int depth = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(max_depth)));
    auto tree = TreeTrajectory::filled(depth, Task{});
    const std::size_t n = tree.size();
    tree.values.assign(n, 0.0);
    const double hi = 1.0 / (1.0 - gamma);
    for (std::size_t i = 0; i < n; ++i) {
        const bool inherited = i > 0 && tree.terminal[(i - 1) / 2];
        tree.terminal[i] = inherited || uniform_real(rng) < 0.25;
        tree.rewards[i] = 2.0 * uniform_real(rng) - 1.0;
        tree.values[i] = hi * uniform_real(rng);
        tree.nodes[i] = Task{StateId{static_cast<std::uint32_t>(i)}, StateId{static_cast<std::uint32_t>(i + 1)}};
    }
    return tree;
}

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

ReturnEquivalenceReport return_equivalence_check(const ReturnConfig& cfg, int trials, Rng& rng, int max_depth,
                                                 double tolerance) {
    if (trials < 1 || max_depth < 1) throw std::invalid_argument("return_equivalence_check: bad arguments");
    ReturnEquivalenceReport rep;
    rep.tolerance = tolerance;
    ReturnConfig zero = cfg, one = cfg;
    zero.lambda = 0.0;
    one.lambda = 1.0;
    for (int t = 0; t < trials; ++t) {
        ++rep.trials;
        const auto tree = random_tree(rng, max_depth, cfg.gamma);
        const double dm = max_abs_diff(tree_mc_return(tree, cfg), oracle_tree_return(tree, {}, cfg, ReturnKind::mc));
        const double d0 = max_abs_diff(tree_one_step_return(tree, tree.values, cfg),
                                       oracle_tree_return(tree, tree.values, cfg, ReturnKind::one_step));
        const double dl = max_abs_diff(tree_lambda_return(tree, tree.values, cfg),
                                       oracle_tree_return(tree, tree.values, cfg, ReturnKind::lambda));
        const double r0 = max_abs_diff(tree_lambda_return(tree, tree.values, zero),
                                       tree_one_step_return(tree, tree.values, zero));
        const double r1 = max_abs_diff(tree_lambda_return(tree, tree.values, one),
                                       tree_mc_return(tree, one, tree.values));
        rep.max_diff_mc = std::max(rep.max_diff_mc, dm);
        rep.max_diff_one_step = std::max(rep.max_diff_one_step, d0);
        rep.max_diff_lambda = std::max(rep.max_diff_lambda, dl);
        rep.max_diff_lambda0 = std::max(rep.max_diff_lambda0, r0);
        rep.max_diff_lambda1 = std::max(rep.max_diff_lambda1, r1);
        if (rep.counterexample.empty() && !rep.passed()) {
            nlohmann::json j;
            j["trial"] = t;
            j["tree"] = nlohmann::json::parse(tree_to_json(tree));
            j["values"] = tree.values;
            rep.counterexample = j.dump();
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------

PlanDepthTable::PlanDepthTable(const Environment& env, int k_reach, int max_depth) : n_(env.state_count()) {
    const std::size_t words = (n_ + 63) / 64;
    std::vector<std::uint64_t> level(static_cast<std::size_t>(n_) * words, 0);
    depth_.assign(static_cast<std::size_t>(n_) * n_, -1);
    for (std::uint32_t s = 0; s < n_; ++s) {
        const auto row = bfs_row(env, StateId{s});
        for (std::uint32_t g = 0; g < n_; ++g) {
            if (row[g] >= 0 && row[g] <= k_reach) {
                level[s * words + g / 64] |= std::uint64_t{1} << (g % 64);
                depth_[static_cast<std::size_t>(s) * n_ + g] = 0;
            }
        }
    }
    for (int d = 1; d <= max_depth; ++d) {
        auto next = level;
        bool grew = false;
        for (std::uint32_t s = 0; s < n_; ++s) {
            std::uint64_t* out = next.data() + static_cast<std::size_t>(s) * words;
            for (std::size_t wi = 0; wi < words; ++wi) {
                for (std::uint64_t bits = level[s * words + wi]; bits != 0; bits &= bits - 1) {
                    const std::size_t w = wi * 64 + static_cast<std::size_t>(std::countr_zero(bits));
                    const std::uint64_t* in = level.data() + w * words;
                    for (std::size_t k = 0; k < words; ++k) out[k] |= in[k];
                }
            }
            for (std::uint32_t g = 0; g < n_; ++g) {
                auto& cell = depth_[static_cast<std::size_t>(s) * n_ + g];
                if (cell < 0 && (out[g / 64] >> (g % 64) & 1u)) {
                    cell = static_cast<std::int8_t>(d);
                    grew = true;
                }
            }
        }
        level = std::move(next);
        if (!grew) break;
    }
}

int PlanDepthTable::depth(const Task& task) const {
    if (task.init.value >= n_ || task.goal.value >= n_) throw InvalidState("plan depth: state out of range");
    const int d = depth_[static_cast<std::size_t>(task.init.value) * n_ + task.goal.value];
    if (d < 0) throw std::invalid_argument("plan depth: task is not solvable");
    return d;
}

int optimal_plan_depth(const Environment& env, const Task& task, int k_reach) {
    return PlanDepthTable(env, k_reach).depth(task);
}

int closed_form_plan_depth(int distance, int k_reach) {
    if (distance <= k_reach) return 0;
    const int segments = (distance + k_reach - 1) / k_reach;
    int depth = 0;
    while ((1 << depth) < segments) ++depth;
    return depth;
}

// ---------------------------------------------------------------------------

TreeMdp random_tree_mdp(Rng& rng, int max_nodes) {
    const int n = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(max_nodes)));
    TreeMdp mdp;
    mdp.branches.resize(static_cast<std::size_t>(n));
    mdp.terminal.assign(static_cast<std::size_t>(n), 0);
    const double p_terminal = uniform_real(rng) * 0.5;
    for (int i = 0; i < n; ++i) mdp.terminal[i] = uniform_real(rng) < p_terminal;

    for (int i = 0; i < n; ++i) {
        const int support = 1 + static_cast<int>(uniform_index(rng, 3));
        std::vector<double> w(static_cast<std::size_t>(support));
        double z = 0.0;
        for (auto& x : w) z += (x = uniform_real(rng) + 1e-3);
        for (int b = 0; b < support; ++b) {
            TreeMdpBranch br;
            br.probability = w[b] / z;
            br.left = static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(n)));
            br.right = static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(n)));
            br.left_reward = static_cast<double>(uniform_index(rng, 2));
            br.right_reward = static_cast<double>(uniform_index(rng, 2));
            mdp.branches[i].push_back(br);
        }
    }
    // terminal sets are closed under successors
    for (bool changed = true; changed;) {
        changed = false;
        for (int i = 0; i < n; ++i) {
            if (!mdp.terminal[i]) continue;
            for (const auto& br : mdp.branches[i]) {
                for (int c : {br.left, br.right}) {
                    if (!mdp.terminal[c]) mdp.terminal[c] = 1, changed = true;
                }
            }
        }
    }
    return mdp;
}

namespace {

double sup_distance(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::vector<double> random_values(Rng& rng, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (auto& x : v) x = (2.0 * uniform_real(rng) - 1.0) * scale;
    return v;
}

nlohmann::json mdp_json(const TreeMdp& mdp) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < mdp.size(); ++i) {
        nlohmann::json br = nlohmann::json::array();
        for (const auto& b : mdp.branches[i]) {
            br.push_back({{"p", b.probability}, {"left", b.left}, {"right", b.right},
                          {"r_left", b.left_reward}, {"r_right", b.right_reward}});
        }
        nodes.push_back({{"terminal", mdp.terminal[i] != 0}, {"branches", br}});
    }
    return nodes;
}

}  // namespace

ContractionReport contraction_check(const ReturnConfig& cfg, int trials, Rng& rng, double slack) {
    if (trials < 1) throw std::invalid_argument("contraction_check needs at least one trial");
    ContractionReport rep;
    rep.bound_one_step = cfg.gamma;
    rep.bound_lambda = cfg.lambda_contraction_factor();
    const double hi = 1.0 / (1.0 - cfg.gamma);

    for (int t = 0; t < trials; ++t) {
        ++rep.trials;
        const TreeMdp mdp = random_tree_mdp(rng);
        const std::size_t n = mdp.size();
        auto v1 = random_values(rng, n, hi);
        std::vector<double> v2;
        switch (t % 3) {
            case 0: v2 = random_values(rng, n, hi); break;
            case 1: {  // small perturbation
                v2 = v1;
                for (auto& x : v2) x += (2.0 * uniform_real(rng) - 1.0) * 1e-3;
                break;
            }
            default: {  // constant shift, the tight case for the one-step operator
                v2 = v1;
                const double c = (2.0 * uniform_real(rng) - 1.0);
                for (auto& x : v2) x += c;
            }
        }
        const double dv = sup_distance(v1, v2);
        if (dv == 0.0) {
            ++rep.skipped;
            continue;
        }
        const auto a1 = bellman_operator(OperatorKind::one_step, mdp, v1, cfg);
        const auto a2 = bellman_operator(OperatorKind::one_step, mdp, v2, cfg);
        const auto l1 = bellman_operator(OperatorKind::lambda, mdp, v1, cfg);
        const auto l2 = bellman_operator(OperatorKind::lambda, mdp, v2, cfg);
        const double d0 = sup_distance(a1, a2), dl = sup_distance(l1, l2);
        rep.max_ratio_one_step = std::max(rep.max_ratio_one_step, d0 / dv);
        rep.max_ratio_lambda = std::max(rep.max_ratio_lambda, dl / dv);
        const bool bad0 = d0 > rep.bound_one_step * dv + slack;
        const bool badl = dl > rep.bound_lambda * dv + slack;
        if (bad0 || badl) {
            if (rep.violations++ == 0) {
                nlohmann::json j;
                j["trial"] = t;
                j["operator"] = bad0 ? "one_step" : "lambda";
                j["gamma"] = cfg.gamma;
                j["lambda"] = cfg.lambda;
                j["mdp"] = mdp_json(mdp);
                j["v1"] = v1;
                j["v2"] = v2;
                j["ratio"] = bad0 ? d0 / dv : dl / dv;
                rep.counterexample = j.dump();
            }
        }
    }
    return rep;
}

MinLemmaReport min_lemma_check(std::size_t samples, Rng& rng) {
    MinLemmaReport rep;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t s = 0; s < samples; ++s) {
        double a = normal(rng) * 10.0, b = normal(rng) * 10.0, c, d;
        switch (s % 4) {
            case 0: c = normal(rng) * 10.0, d = normal(rng) * 10.0; break;
            case 1: c = a + normal(rng) * 1e-6, d = b + normal(rng) * 1e-6; break;
            case 2: b = a, c = normal(rng) * 10.0, d = c; break;  // ties on both sides
            default: c = b + normal(rng), d = a + normal(rng);    // crossed order
        }
        ++rep.samples;
        const double lhs = std::abs(std::min(a, b) - std::min(c, d));
        const double rhs = std::max(std::abs(a - c), std::abs(b - d));
        if (rhs > 0.0) rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
        if (lhs > rhs) {
            if (rep.violations++ == 0) {
                rep.counterexample = nlohmann::json{{"a", a}, {"b", b}, {"c", c}, {"d", d}}.dump();
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------

int TreeShape::height() const {
    std::size_t pos = 0;
    std::function<int(int)> walk = [&](int leaves_here) -> int {
        if (leaves_here == 1) return 0;
        const int left = splits[pos++];
        const int hl = walk(left);
        const int hr = walk(leaves_here - left);
        return 1 + std::max(hl, hr);
    };
    return walk(leaves);
}

std::vector<TreeShape> enumerate_shapes(int leaves) {
    if (leaves < 1) throw std::invalid_argument("a shape needs at least one leaf");
    std::function<std::vector<std::vector<int>>(int)> gen = [&](int n) -> std::vector<std::vector<int>> {
        if (n == 1) return {{}};
        std::vector<std::vector<int>> out;
        for (int l = 1; l < n; ++l) {
            for (const auto& a : gen(l)) {
                for (const auto& b : gen(n - l)) {
                    std::vector<int> s{l};
                    s.insert(s.end(), a.begin(), a.end());
                    s.insert(s.end(), b.begin(), b.end());
                    out.push_back(std::move(s));
                }
            }
        }
        return out;
    };
    std::vector<TreeShape> shapes;
    for (auto& s : gen(leaves)) shapes.push_back(TreeShape{leaves, std::move(s)});
    return shapes;
}

TreeTrajectory shape_to_tree(const TreeShape& shape) {
    const int depth = std::max(1, shape.height());
    auto tree = TreeTrajectory::filled(depth, Task{StateId{0}, StateId{static_cast<std::uint32_t>(shape.leaves)}});
    std::size_t pos = 0;
    std::function<void(std::size_t, int, int)> place = [&](std::size_t i, int a, int b) {
        tree.nodes[i] = Task{StateId{static_cast<std::uint32_t>(a)}, StateId{static_cast<std::uint32_t>(b)}};
        if (b - a == 1) {
            // a reached leaf segment; everything below inherits the flag
            std::function<void(std::size_t)> mark = [&](std::size_t j) {
                if (j >= tree.size()) return;
                tree.terminal[j] = 1;
                tree.rewards[j] = 1.0;
                if (j != i) tree.nodes[j] = tree.nodes[i];
                mark(2 * j + 1);
                mark(2 * j + 2);
            };
            mark(i);
            return;
        }
        const int mid = a + shape.splits[pos++];
        place(2 * i + 1, a, mid);
        place(2 * i + 2, mid, b);
    };
    place(0, 0, shape.leaves);
    return tree;
}

BalancedTreeReport balanced_tree_check(int leaves, const ReturnConfig& cfg) {
    BalancedTreeReport rep;
    rep.leaves = leaves;
    const auto shapes = enumerate_shapes(leaves);
    rep.shapes = shapes.size();
    TreeShape balanced{leaves, {}};
    std::function<void(int)> halve = [&](int n) {
        if (n == 1) return;
        balanced.splits.push_back(n / 2);
        halve(n / 2);
        halve(n - n / 2);
    };
    halve(leaves);

    std::vector<double> roots;
    for (const auto& s : shapes) {
        const auto tree = shape_to_tree(s);
        const double g = tree_mc_return(tree, cfg)[0];
        roots.push_back(g);
        const double expected = std::pow(cfg.gamma, s.height() - 1);
        if (std::abs(g - expected) > 1e-12) ++rep.formula_mismatches;
    }
    rep.balanced_return = tree_mc_return(shape_to_tree(balanced), cfg)[0];
    rep.best_return = *std::max_element(roots.begin(), roots.end());
    for (double g : roots) {
        if (g > rep.balanced_return + 1e-12) ++rep.counterexamples;
    }
    return rep;
}

}  // namespace dhp::oracle
