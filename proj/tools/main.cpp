#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dhp/harness.hpp"
#include "dhp/oracle.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dhp;

namespace {

struct CommonFlags {
    std::string env = "lightsout";
    int size = 2;
    std::string layout;
    std::string reward_scheme = "default";
    std::string mode = "online";
    std::string task_source = "uniform";
    std::string out;
    std::uint64_t seed = 0;
    ExperimentConfig cfg;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--env", f.env, "lightsout | maze")->check(CLI::IsMember({"lightsout", "maze"}));
    cmd->add_option("--size", f.size, "L for LightsOut, R for the maze");
    cmd->add_option("--layout", f.layout, "maze layout JSON (overrides --size)");
    cmd->add_option("--depth", f.cfg.depth, "training depth D");
    cmd->add_option("--infer-depth", f.cfg.infer_depth, "inference depth D_I");
    cmd->add_option("--gamma", f.cfg.returns.gamma, "tree discount");
    cmd->add_option("--lambda", f.cfg.returns.lambda, "tree lambda");
    cmd->add_option("--seed", f.seed, "training seed");
    cmd->add_option("--reward-scheme", f.reward_scheme, "default | neg_rew | dist_sum | gae");
    cmd->add_option("--mode", f.mode, "online | offline | explore-only");
    cmd->add_option("--task-source", f.task_source, "uniform | explorer | random-explorer");
    cmd->add_option("--updates", f.cfg.updates, "planner updates or offline gradient steps");
    cmd->add_option("--eval-every", f.cfg.eval_every, "updates between evaluations (0: only at the end)");
    cmd->add_option("--eval-episodes", f.cfg.eval_episodes, "evaluation tasks");
    cmd->add_option("--lr", f.cfg.learning_rate, "planner learning rate");
    cmd->add_option("--value-lr", f.cfg.value_learning_rate, "critic learning rate");
    cmd->add_option("--entropy", f.cfg.entropy_coeff, "entropy coefficient");
    cmd->add_option("--batch", f.cfg.batch_size, "trees per update");
    cmd->add_option("--explore-episodes", f.cfg.explore_episodes, "explorer episodes");
    cmd->add_option("--out", f.out, "output directory (default $DHP_OUT_DIR or ./runs)");
}

ExperimentConfig resolve(CommonFlags& f) {
    ExperimentConfig cfg = f.cfg;
    cfg.env = parse_env_kind(f.env);
    cfg.size = f.size;
    cfg.layout_path = f.layout;
    cfg.reward_scheme = parse_reward_scheme(f.reward_scheme);
    cfg.mode = parse_run_mode(f.mode);
    cfg.task_source = parse_task_source(f.task_source);
    cfg.seed = f.seed;
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const std::string& requested) {
    fs::path dir = output_dir(requested);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cmd_train(CommonFlags& f) {
    const auto cfg = resolve(f);
    const auto dir = prepare_out(f.out);
    std::ofstream metrics(dir / "metrics.jsonl");
    auto result = run_training(cfg, [&](const MetricsRecord& r) {
        metrics << r.to_json() << '\n';
        metrics.flush();
        std::cout << r.to_json() << '\n';
    });
    nlohmann::json summary;
    summary["config"] = nlohmann::json::parse(config_to_json(cfg));
    summary["final"] = result.records.empty() ? nlohmann::json() : nlohmann::json::parse(result.records.back().to_json());
    write_file(dir / "summary.json", summary.dump(2));
    if (result.planner) write_file(dir / "policy.json", result.planner->to_json());
    if (result.values) write_file(dir / "values.json", result.values->to_json());
    if (!result.logged.empty()) write_file(dir / "explorer_episodes.jsonl", episodes_to_jsonl(result.logged));
    if (!result.dataset.empty()) write_file(dir / "dataset.jsonl", dataset_to_jsonl(result.dataset));
    return 0;
}

int cmd_eval(CommonFlags& f, const std::string& policy_path) {
    const auto cfg = resolve(f);
    const auto env = make_environment(cfg);
    const auto policy = PlannerPolicy::from_json(read_file(policy_path));
    const auto rec = run_eval(policy, *env, cfg);
    std::cout << rec.to_json() << '\n';
    if (!f.out.empty()) write_file(prepare_out(f.out) / "eval.json", rec.to_json());
    return 0;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_ablate(CommonFlags& f, const std::string& schemes, const std::string& depths, int seeds) {
    const auto base = resolve(f);
    std::vector<ExperimentConfig> matrix;
    for (const auto& d : split(depths)) {
        for (const auto& s : split(schemes)) {
            auto c = base;
            c.depth = std::stoi(d);
            c.reward_scheme = parse_reward_scheme(s);
            c.validate();
            matrix.push_back(c);
        }
    }
    std::vector<std::uint64_t> seed_list;
    for (int i = 0; i < seeds; ++i) seed_list.push_back(base.seed + static_cast<std::uint64_t>(i));
    const auto rows = run_ablation(matrix, seed_list);
    for (const auto& r : rows) {
        std::printf("%-24s success %.3f +- %.3f  path %.3f +- %.3f\n", r.label.c_str(), r.success_mean, r.success_std,
                    r.path_mean, r.path_std);
    }
    write_file(prepare_out(f.out) / "ablation.json", ablation_to_json(rows));
    return 0;
}

int cmd_oracle_check(double gamma, double lambda, int trials, std::size_t lemma_samples, std::uint64_t seed) {
    ReturnConfig cfg;
    cfg.gamma = gamma;
    cfg.lambda = lambda;
    cfg.validate();
    Rng rng(seed);
    bool ok = true;
    auto line = [&](bool pass, const std::string& text) {
        std::printf("[%s] %s\n", pass ? "PASS" : "FAIL", text.c_str());
        ok = ok && pass;
    };

    const auto c = oracle::contraction_check(cfg, trials, rng);
    line(c.passed(), "contraction: " + std::to_string(c.trials) + " trials, one-step max ratio " +
                         std::to_string(c.max_ratio_one_step) + " <= " + std::to_string(c.bound_one_step) +
                         ", lambda max ratio " + std::to_string(c.max_ratio_lambda) + " <= " +
                         std::to_string(c.bound_lambda));
    if (!c.passed()) std::printf("counterexample: %s\n", c.counterexample.c_str());

    const auto m = oracle::min_lemma_check(lemma_samples, rng);
    line(m.passed(), "min lemma: " + std::to_string(m.samples) + " samples, max ratio " + std::to_string(m.max_ratio));
    if (!m.passed()) std::printf("counterexample: %s\n", m.counterexample.c_str());

    const auto r = oracle::return_equivalence_check(cfg, 1000, rng);
    char buf[256];
    std::snprintf(buf, sizeof buf, "return oracle: 1000 trees, max diff mc %.2e one-step %.2e lambda %.2e", r.max_diff_mc,
                  r.max_diff_one_step, r.max_diff_lambda);
    line(r.passed(), buf);
    if (!r.passed()) std::printf("counterexample: %s\n", r.counterexample.c_str());

    for (int leaves : {4, 8}) {
        const auto b = oracle::balanced_tree_check(leaves, cfg);
        line(b.passed(), "balanced tree, " + std::to_string(leaves) + " leaves: " + std::to_string(b.shapes) +
                             " shapes, " + std::to_string(b.counterexamples) + " counterexamples");
    }
    return ok ? 0 : 1;
}

int cmd_explore(CommonFlags& f, bool random_goals) {
    f.mode = "explore-only";
    if (random_goals) f.task_source = "random-explorer";
    if (f.env == "lightsout" && f.layout.empty()) {
        f.env = "maze";
        if (f.size < 2) f.size = 5;
    }
    return cmd_train(f);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular decoupled hierarchical planner"};
    app.require_subcommand(1);

    CommonFlags train_f, eval_f, ablate_f, explore_f;
    auto* train = app.add_subcommand("train", "train a planner and write metrics");
    add_common(train, train_f);

    auto* eval = app.add_subcommand("eval", "evaluate a saved planner");
    add_common(eval, eval_f);
    std::string policy_path;
    eval->add_option("--policy", policy_path, "policy JSON written by train")->required();

    auto* ablate = app.add_subcommand("ablate", "reward-scheme / depth matrix over seeds");
    add_common(ablate, ablate_f);
    std::string schemes = "default,neg_rew,dist_sum", depths;
    int seeds = 3;
    ablate->add_option("--schemes", schemes, "comma-separated reward schemes");
    ablate->add_option("--depths", depths, "comma-separated training depths (default: --depth)");
    ablate->add_option("--seeds", seeds, "number of seeds, starting at --seed");

    auto* oracle_cmd = app.add_subcommand("oracle-check", "numerical checks of the return operators");
    double gamma = 0.95, lambda = 0.95;
    int trials = 10000;
    std::size_t lemma_samples = 1000000;
    std::uint64_t oracle_seed = 0;
    oracle_cmd->add_option("--gamma", gamma);
    oracle_cmd->add_option("--lambda", lambda);
    oracle_cmd->add_option("--trials", trials, "contraction trials");
    oracle_cmd->add_option("--lemma-samples", lemma_samples);
    oracle_cmd->add_option("--seed", oracle_seed);

    auto* explore = app.add_subcommand("explore", "run the explorer alone and report triplet coverage");
    add_common(explore, explore_f);
    bool random_goals = false;
    explore->add_flag("--random-goals", random_goals, "uniform-random goal baseline");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(train_f);
        if (*eval) return cmd_eval(eval_f, policy_path);
        if (*ablate) {
            if (depths.empty()) depths = std::to_string(ablate_f.cfg.depth);
            return cmd_ablate(ablate_f, schemes, depths, seeds);
        }
        if (*oracle_cmd) return cmd_oracle_check(gamma, lambda, trials, lemma_samples, oracle_seed);
        if (*explore) return cmd_explore(explore_f, random_goals);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
