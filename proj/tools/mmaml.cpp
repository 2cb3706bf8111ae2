// Command-line front end: meta-training, evaluation, task-embedding export,
// and task-batch generation for the multimodal few-shot regression bench.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mmaml/checkpoint.hpp"
#include "mmaml/config.hpp"
#include "mmaml/eval.hpp"
#include "mmaml/meta.hpp"
#include "mmaml/serialize.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int cmd_train(const std::string& config_path, const std::string& model_name,
              std::int64_t seed_override, const std::string& out_dir) {
    mmaml::TrainingConfig cfg;
    try {
        cfg = mmaml::load_config(config_path);
    } catch (const mmaml::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    mmaml::ModelKind kind = mmaml::model_kind_from_name(model_name);

    std::filesystem::create_directories(out_dir);
    std::ofstream metrics(out_dir + "/metrics.jsonl");
    if (!metrics) throw mmaml::Error("cannot open metrics file in " + out_dir);

    auto checkpoint_path = [&](const std::string& tag) { return out_dir + "/checkpoint_" + tag + ".ckpt"; };
    mmaml::Model model = mmaml::run_baseline(
        kind, cfg, [&](std::size_t iter, const mmaml::StepMetrics& m, mmaml::Model& cur) {
            nlohmann::json per_mode = nlohmann::json::object();
            for (auto& [label, v] : m.per_mode_loss)
                per_mode[mmaml::mode_name(static_cast<mmaml::FunctionMode>(label))] = v;
            nlohmann::json line = {{"iteration", iter},
                                   {"mean_query_loss", m.mean_query_loss},
                                   {"per_mode_loss", per_mode},
                                   {"grad_norm", m.grad_norm}};
            metrics << line.dump() << "\n";
            if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) {
                mmaml::Checkpoint ck{kind, cfg, iter + 1, cur};
                mmaml::save_checkpoint(ck, checkpoint_path(std::to_string(iter + 1)));
            }
        });

    mmaml::Checkpoint final{kind, cfg, cfg.iterations, model};
    mmaml::save_checkpoint(final, checkpoint_path("final"));
    std::cout << "trained " << model_name << " for " << cfg.iterations << " iterations; checkpoint at "
              << checkpoint_path("final") << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, std::size_t tasks_per_mode, bool csv,
             std::int64_t eval_seed, const std::string& out_path) {
    mmaml::Checkpoint ckpt = mmaml::load_checkpoint(ckpt_path);
    std::uint64_t seed = eval_seed >= 0 ? static_cast<std::uint64_t>(eval_seed)
                                        : ckpt.config.seed + 0x9000000000000000ULL;
    mmaml::EvalReport report = mmaml::evaluate(ckpt.model, ckpt.config, tasks_per_mode, seed);
    std::string text = csv ? mmaml::report_to_csv(report) : mmaml::report_to_json(report).dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        mmaml::atomic_write(out_path, text);
    return kExitOk;
}

int cmd_export(const std::string& ckpt_path, std::size_t n_tasks, const std::string& out_path,
               std::int64_t seed) {
    mmaml::Checkpoint ckpt = mmaml::load_checkpoint(ckpt_path);
    std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed)
                                : ckpt.config.seed + 0xE000000000000000ULL;
    mmaml::export_embeddings(ckpt.model, ckpt.config, n_tasks, out_path, s);
    std::cout << "wrote " << n_tasks << " embeddings to " << out_path << "\n";
    return kExitOk;
}

int cmd_gen_tasks(int n_modes, std::size_t count, const std::string& out_path, std::uint64_t seed,
                  double sigma) {
    mmaml::TrainingConfig cfg;
    cfg.n_modes = n_modes;
    cfg.noise_sigma = sigma;
    mmaml::RngStream rng(seed);
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
        mmaml::TaskSpec spec = mmaml::sample_task(cfg.modes(), rng);
        mmaml::TaskSample t = mmaml::realize_task(spec, cfg.k_support, cfg.l_query, sigma, rng);
        out += mmaml::task_sample_to_json(t, i).dump() + "\n";
    }
    if (out_path.empty())
        std::cout << out;
    else
        mmaml::atomic_write(out_path, out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal model-agnostic meta-learning for few-shot regression"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "Meta-train a model from a config file");
    std::string config_path, model_name = "mmaml", out_dir = "run";
    std::int64_t seed = -1;
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--model", model_name, "mmaml|maml|multi-maml|lstm-learner")
        ->check(CLI::IsMember({"mmaml", "maml", "multi-maml", "lstm-learner"}));
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--out", out_dir, "output run directory");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ckpt_path, eval_out;
    std::size_t tasks_per_mode = 1000;
    bool as_json = false, as_csv = false;
    std::int64_t eval_seed = -1;
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--tasks-per-mode", tasks_per_mode, "eval tasks per mode");
    eval->add_flag("--json", as_json, "JSON report (default)");
    eval->add_flag("--csv", as_csv, "CSV report");
    eval->add_option("--seed", eval_seed, "eval RNG seed");
    eval->add_option("--out", eval_out, "write report to file instead of stdout");

    auto* exp = app.add_subcommand("export-embeddings", "Export task embeddings as CSV");
    std::string exp_ckpt, exp_out;
    std::size_t exp_tasks = 1000;
    std::int64_t exp_seed = -1;
    exp->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required();
    exp->add_option("--tasks", exp_tasks, "number of tasks to embed");
    exp->add_option("--out", exp_out, "output CSV path")->required();
    exp->add_option("--seed", exp_seed, "sampling seed");

    auto* gen = app.add_subcommand("gen-tasks", "Sample task batches as JSON lines");
    int n_modes = 5;
    std::size_t count = 10;
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    double sigma = 0.3;
    gen->add_option("--modes", n_modes, "mode set size: 2, 3, or 5")->check(CLI::IsMember({2, 3, 5}));
    gen->add_option("--count", count, "number of tasks");
    gen->add_option("--out", gen_out, "output JSONL path (default stdout)");
    gen->add_option("--seed", gen_seed, "sampling seed");
    gen->add_option("--sigma", sigma, "observation noise std-dev");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, model_name, seed, out_dir);
        if (eval->parsed()) return cmd_eval(ckpt_path, tasks_per_mode, as_csv, eval_seed, eval_out);
        if (exp->parsed()) return cmd_export(exp_ckpt, exp_tasks, exp_out, exp_seed);
        if (gen->parsed()) return cmd_gen_tasks(n_modes, count, gen_out, gen_seed, sigma);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
