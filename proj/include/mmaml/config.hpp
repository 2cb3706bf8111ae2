#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "mmaml/io.hpp"
#include "mmaml/meta.hpp"

namespace mmaml {

inline nlohmann::json config_to_json(const TrainingConfig& cfg) {
    return {
        {"inner_lr", cfg.inner_lr},
        {"meta_lr", cfg.meta_lr},
        {"inner_steps_train", cfg.inner_steps_train},
        {"inner_steps_eval", cfg.inner_steps_eval},
        {"meta_batch_size", cfg.meta_batch_size},
        {"iterations", cfg.iterations},
        {"operator", modulation_op_name(cfg.op)},
        {"modes", cfg.n_modes},
        {"noise_sigma", cfg.noise_sigma},
        {"k_support", cfg.k_support},
        {"l_query", cfg.l_query},
        {"seed", cfg.seed},
        {"second_order", cfg.second_order},
        {"clip_norm", cfg.clip_norm},
        {"eval_tasks_per_mode", cfg.eval_tasks_per_mode},
        {"checkpoint_every", cfg.checkpoint_every},
    };
}

// Strict parse: every key must be known, partial configs fill in defaults.
inline TrainingConfig config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "inner_lr", "meta_lr", "inner_steps_train", "inner_steps_eval", "meta_batch_size",
        "iterations", "operator", "modes", "noise_sigma", "k_support", "l_query",
        "seed", "second_order", "clip_norm", "eval_tasks_per_mode", "checkpoint_every"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw Error("unknown config key: " + it.key());

    TrainingConfig cfg;
    if (j.contains("inner_lr")) cfg.inner_lr = j["inner_lr"].get<double>();
    if (j.contains("meta_lr")) cfg.meta_lr = j["meta_lr"].get<double>();
    if (j.contains("inner_steps_train")) cfg.inner_steps_train = j["inner_steps_train"].get<std::size_t>();
    if (j.contains("inner_steps_eval")) cfg.inner_steps_eval = j["inner_steps_eval"].get<std::size_t>();
    if (j.contains("meta_batch_size")) cfg.meta_batch_size = j["meta_batch_size"].get<std::size_t>();
    if (j.contains("iterations")) cfg.iterations = j["iterations"].get<std::size_t>();
    if (j.contains("operator")) cfg.op = modulation_op_from_name(j["operator"].get<std::string>());
    if (j.contains("modes")) cfg.n_modes = j["modes"].get<int>();
    if (j.contains("noise_sigma")) cfg.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("k_support")) cfg.k_support = j["k_support"].get<std::size_t>();
    if (j.contains("l_query")) cfg.l_query = j["l_query"].get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("second_order")) cfg.second_order = j["second_order"].get<bool>();
    if (j.contains("clip_norm")) cfg.clip_norm = j["clip_norm"].get<double>();
    if (j.contains("eval_tasks_per_mode")) cfg.eval_tasks_per_mode = j["eval_tasks_per_mode"].get<std::size_t>();
    if (j.contains("checkpoint_every")) cfg.checkpoint_every = j["checkpoint_every"].get<std::size_t>();

    if (cfg.inner_lr <= 0.0) throw Error("config: inner_lr must be > 0");
    if (cfg.meta_lr <= 0.0) throw Error("config: meta_lr must be > 0");
    if (cfg.noise_sigma < 0.0) throw Error("config: noise_sigma must be >= 0");
    (void)cfg.modes();  // validates n_modes
    return cfg;
}

inline TrainingConfig load_config(const std::string& path) {
    return config_from_json(nlohmann::json::parse(read_file(path)));
}

}  // namespace mmaml
