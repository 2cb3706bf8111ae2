#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmaml/config.hpp"
#include "mmaml/io.hpp"
#include "mmaml/meta.hpp"

namespace mmaml {

// Per-stage query MSE: before modulation or adaptation, after modulation
// only, and after modulation plus inner-loop gradient steps. Models without
// an encoder have no post-modulation stage.
struct StageMse {
    double prior = 0.0;
    double post_modulation = 0.0;
    double post_adaptation = 0.0;
    bool has_post_modulation = false;
    std::size_t tasks = 0;
};

struct EvalReport {
    std::map<int, StageMse> per_mode;  // mode_label -> stats
    StageMse overall;
    std::string model_kind;
    std::uint64_t seed = 0;
    std::size_t tasks_per_mode = 0;
    nlohmann::json config;
};

// Evaluation protocol: per mode, sample tasks from a fresh eval stream
// and measure the query MSE at each stage; adaptation runs
// inner_steps_eval gradient steps (zero for the LSTM learner).
inline EvalReport evaluate(Model& model, const TrainingConfig& cfg, std::size_t n_tasks_per_mode,
                           std::uint64_t eval_seed) {
    if (n_tasks_per_mode < 1) throw Error("evaluate: need at least one task per mode");
    std::vector<FunctionMode> modes = cfg.modes();
    std::size_t steps_eval = model.inner_steps(cfg.inner_steps_eval);

    EvalReport report;
    report.model_kind = model_kind_name(model.kind);
    report.seed = eval_seed;
    report.tasks_per_mode = n_tasks_per_mode;
    report.config = config_to_json(cfg);

    std::uint64_t task_counter = 0;
    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        StageMse stats;
        stats.has_post_modulation = model.has_encoder();
        for (std::size_t t = 0; t < n_tasks_per_mode; ++t, ++task_counter) {
            RngStream rng(eval_seed + 0x100000 * (task_counter + 1));
            TaskSpec spec = sample_task({modes[mi]}, rng);
            TaskSample task = realize_task(spec, cfg.k_support, cfg.l_query, cfg.noise_sigma, rng);

            Learner& member =
                model.kind == ModelKind::MultiMAML ? model.members.at(mi) : model.members.front();
            MlpNodes theta = lift(member.net);
            NodePtr qx = constant(xs_of(task.query));
            NodePtr qy = constant(ys_of(task.query));

            stats.prior += mse_loss(forward(qx, theta, ModulationSet::identity()), qy)->value.item();

            ModulationSet tau = ModulationSet::identity();
            if (model.has_encoder()) {
                EncoderNodes enc = lift(*member.encoder);
                GeneratorNodes gen = lift(*member.generators);
                tau = generate_modulation(encode(task.support, enc), gen, model.op);
                stats.post_modulation += mse_loss(forward(qx, theta, tau), qy)->value.item();
            }

            NodePtr sx = constant(xs_of(task.support));
            NodePtr sy = constant(ys_of(task.support));
            MlpNodes adapted = inner_adapt(theta, tau, sx, sy, cfg.inner_lr, steps_eval, false);
            stats.post_adaptation += mse_loss(forward(qx, adapted, tau), qy)->value.item();
        }
        double n = static_cast<double>(n_tasks_per_mode);
        stats.prior /= n;
        stats.post_modulation = stats.has_post_modulation ? stats.post_modulation / n : 0.0;
        stats.post_adaptation /= n;
        stats.tasks = n_tasks_per_mode;
        report.per_mode[mode_index(modes[mi])] = stats;
    }

    // overall = task-count-weighted mean of per-mode stats
    StageMse& ov = report.overall;
    ov.has_post_modulation = model.has_encoder();
    for (auto& [label, s] : report.per_mode) {
        double w = static_cast<double>(s.tasks);
        ov.prior += w * s.prior;
        ov.post_modulation += w * s.post_modulation;
        ov.post_adaptation += w * s.post_adaptation;
        ov.tasks += s.tasks;
    }
    ov.prior /= static_cast<double>(ov.tasks);
    ov.post_modulation = ov.has_post_modulation ? ov.post_modulation / static_cast<double>(ov.tasks) : 0.0;
    ov.post_adaptation /= static_cast<double>(ov.tasks);
    return report;
}

inline nlohmann::json stage_to_json(const StageMse& s) {
    nlohmann::json j = {{"prior", s.prior}, {"post_adaptation", s.post_adaptation}, {"tasks", s.tasks}};
    if (s.has_post_modulation) j["post_modulation"] = s.post_modulation;
    return j;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json per_mode = nlohmann::json::object();
    for (auto& [label, s] : r.per_mode)
        per_mode[mode_name(static_cast<FunctionMode>(label))] = stage_to_json(s);
    return {{"model", r.model_kind},
            {"eval_seed", r.seed},
            {"tasks_per_mode", r.tasks_per_mode},
            {"overall", stage_to_json(r.overall)},
            {"per_mode", per_mode},
            {"config", r.config}};
}

inline std::string report_to_csv(const EvalReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "mode,tasks,prior,post_modulation,post_adaptation\n";
    auto row = [&](const std::string& name, const StageMse& s) {
        out << name << ',' << s.tasks << ',' << s.prior << ',';
        if (s.has_post_modulation) out << s.post_modulation;
        out << ',' << s.post_adaptation << '\n';
    };
    for (auto& [label, s] : r.per_mode) row(mode_name(static_cast<FunctionMode>(label)), s);
    row("overall", r.overall);
    return out.str();
}

// CSV rows (task_id, mode, spec params, the 80 embedding components) for
// offline dimensionality reduction.
inline void export_embeddings(Model& model, const TrainingConfig& cfg, std::size_t n_tasks,
                              const std::string& out_path, std::uint64_t seed) {
    if (!model.has_encoder())
        throw Error("export-embeddings: model '" + std::string(model_kind_name(model.kind)) +
                    "' has no task encoder");
    std::vector<FunctionMode> modes = cfg.modes();
    Learner& member = model.members.front();

    std::ostringstream out;
    out.precision(17);
    out << "task_id,mode,mode_label,A,w,c,b";
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) out << ",u" << i;
    out << '\n';

    RngStream rng(seed);
    EncoderNodes enc = lift(member.encoder.value());
    for (std::size_t t = 0; t < n_tasks; ++t) {
        TaskSpec spec = sample_task(modes, rng);
        TaskSample task = realize_task(spec, cfg.k_support, cfg.l_query, cfg.noise_sigma, rng);
        NodePtr upsilon = encode(task.support, enc);
        out << t << ',' << mode_name(spec.mode) << ',' << task.mode_label << ',' << spec.A << ','
            << spec.w << ',' << spec.c << ',' << spec.b;
        for (double v : upsilon->value.data) out << ',' << v;
        out << '\n';
    }
    atomic_write(out_path, out.str());
}

}  // namespace mmaml
