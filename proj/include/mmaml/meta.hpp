#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmaml/modulation.hpp"
#include "mmaml/network.hpp"
#include "mmaml/optimizer.hpp"
#include "mmaml/tasks.hpp"

namespace mmaml {

enum class ModelKind { MMAML, MAML, MultiMAML, LstmLearner };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::MMAML: return "mmaml";
        case ModelKind::MAML: return "maml";
        case ModelKind::MultiMAML: return "multi-maml";
        case ModelKind::LstmLearner: return "lstm-learner";
    }
    return "?";
}

inline ModelKind model_kind_from_name(const std::string& s) {
    if (s == "mmaml") return ModelKind::MMAML;
    if (s == "maml") return ModelKind::MAML;
    if (s == "multi-maml") return ModelKind::MultiMAML;
    if (s == "lstm-learner") return ModelKind::LstmLearner;
    throw Error("unknown model kind: " + s);
}

struct TrainingConfig {
    double inner_lr = 0.01;
    double meta_lr = 0.001;
    std::size_t inner_steps_train = 1;
    std::size_t inner_steps_eval = 5;
    std::size_t meta_batch_size = 25;
    std::size_t iterations = 10000;
    ModulationOp op = ModulationOp::FiLM;
    int n_modes = 2;
    double noise_sigma = 0.3;
    std::size_t k_support = 5;
    std::size_t l_query = 10;
    std::uint64_t seed = 0;
    bool second_order = true;
    double clip_norm = 10.0;  // <= 0 disables
    std::size_t eval_tasks_per_mode = 1000;
    std::size_t checkpoint_every = 1000;

    std::vector<FunctionMode> modes() const { return mode_set(n_modes); }
};

// One trainable unit: the task network plus, for modulated models, the
// encoder and generators. MultiMAML holds one Learner per mode.
struct Learner {
    MlpParameters net;
    std::optional<EncoderParameters> encoder;
    std::optional<GeneratorParameters> generators;
    AdamOptimizer adam{0.001};
};

struct Model {
    ModelKind kind = ModelKind::MMAML;
    ModulationOp op = ModulationOp::FiLM;
    std::vector<Learner> members;

    bool has_encoder() const { return kind == ModelKind::MMAML || kind == ModelKind::LstmLearner; }
    std::size_t inner_steps(std::size_t configured) const {
        return kind == ModelKind::LstmLearner ? 0 : configured;
    }
};

// n_modes_hint overrides the member count for MultiMAML (0 = from cfg).
inline Model init_model(ModelKind kind, const TrainingConfig& cfg, RngStream& rng,
                        std::size_t n_modes_hint = 0) {
    Model model;
    model.kind = kind;
    model.op = (kind == ModelKind::MAML || kind == ModelKind::MultiMAML) ? ModulationOp::Identity
                                                                         : cfg.op;
    std::size_t n_members =
        kind == ModelKind::MultiMAML ? (n_modes_hint ? n_modes_hint : cfg.modes().size()) : 1;
    for (std::size_t i = 0; i < n_members; ++i) {
        Learner l;
        l.net = init_parameters(rng);
        if (model.has_encoder()) {
            l.encoder = init_encoder(rng);
            l.generators = init_generators(model.op, rng);
        }
        l.adam = AdamOptimizer(cfg.meta_lr);
        model.members.push_back(std::move(l));
    }
    return model;
}

// Ordered enumeration of a learner's trainable tensors; the order defines
// the Adam moment layout and the checkpoint tensor order.
inline void for_each_tensor(Learner& l, const std::function<void(const std::string&, Tensor&)>& fn) {
    for (std::size_t i = 0; i < l.net.W.size(); ++i) {
        fn("net/W" + std::to_string(i), l.net.W[i]);
        fn("net/b" + std::to_string(i), l.net.b[i]);
    }
    if (l.encoder) {
        EncoderParameters& e = *l.encoder;
        fn("enc/in_proj_W", e.in_proj_W);
        fn("enc/in_proj_b", e.in_proj_b);
        fn("enc/fwd/W_ih", e.fwd.W_ih);
        fn("enc/fwd/W_hh", e.fwd.W_hh);
        fn("enc/fwd/bias", e.fwd.bias);
        fn("enc/bwd/W_ih", e.bwd.W_ih);
        fn("enc/bwd/W_hh", e.bwd.W_hh);
        fn("enc/bwd/bias", e.bwd.bias);
    }
    if (l.generators) {
        for (std::size_t i = 0; i < l.generators->blocks.size(); ++i) {
            auto& b = l.generators->blocks[i];
            std::string p = "gen/" + std::to_string(i) + "/";
            fn(p + "W1", b.W1);
            fn(p + "b1", b.b1);
            fn(p + "W2", b.W2);
            fn(p + "b2", b.b2);
        }
    }
}

inline std::vector<Tensor*> trainable_tensors(Learner& l) {
    std::vector<Tensor*> out;
    for_each_tensor(l, [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

// Inner-loop adaptation: `steps` full-batch gradient descent steps on the
// support MSE, with the modulation vectors held fixed. With
// track_meta_graph the adapted parameters remain differentiable w.r.t. the
// original theta (and, through tau, the modulation parameters); otherwise
// the inner gradients are detached and only the first-order path survives.
inline MlpNodes inner_adapt(const MlpNodes& theta, const ModulationSet& tau,
                            const NodePtr& support_x, const NodePtr& support_y, double alpha,
                            std::size_t steps, bool track_meta_graph) {
    MlpNodes cur = theta;
    for (std::size_t s = 0; s < steps; ++s) {
        NodePtr loss = mse_loss(forward(support_x, cur, tau), support_y);
        std::vector<NodePtr> flat = cur.flat();
        std::vector<NodePtr> grads = grad(loss, flat, track_meta_graph);
        MlpNodes next;
        for (std::size_t i = 0; i < cur.W.size(); ++i) {
            next.W.push_back(sub(cur.W[i], scale(grads[2 * i], alpha)));
            next.b.push_back(sub(cur.b[i], scale(grads[2 * i + 1], alpha)));
        }
        cur = std::move(next);
    }
    return cur;
}

struct StepMetrics {
    double mean_query_loss = 0.0;
    std::map<int, double> per_mode_loss;  // mode_label -> mean query loss
    double grad_norm = 0.0;
};

// One outer-loop update: encode, modulate, adapt, query loss, then a joint
// Adam step on theta / omega_h / omega_g from the summed query loss.
inline StepMetrics meta_train_step(Learner& learner, ModulationOp op,
                                   const std::vector<TaskSample>& batch,
                                   const TrainingConfig& cfg, std::size_t inner_steps) {
    if (batch.empty()) throw Error("meta_train_step: empty batch");

    std::vector<Tensor*> params = trainable_tensors(learner);
    std::vector<Tensor> total_grads;
    for (Tensor* p : params) total_grads.push_back(Tensor::zeros(p->shape));

    StepMetrics metrics;
    std::map<int, std::pair<double, std::size_t>> mode_acc;

    for (const TaskSample& task : batch) {
        MlpNodes theta = lift(learner.net);
        std::vector<NodePtr> wrt = theta.flat();

        ModulationSet tau = ModulationSet::identity();
        if (learner.encoder) {
            EncoderNodes enc = lift(*learner.encoder);
            GeneratorNodes gen = lift(*learner.generators);
            NodePtr upsilon = encode(task.support, enc);
            tau = generate_modulation(upsilon, gen, op);
            auto ef = enc.flat();
            auto gf = gen.flat();
            wrt.insert(wrt.end(), ef.begin(), ef.end());
            wrt.insert(wrt.end(), gf.begin(), gf.end());
        }

        NodePtr sx = constant(xs_of(task.support));
        NodePtr sy = constant(ys_of(task.support));
        MlpNodes adapted =
            inner_adapt(theta, tau, sx, sy, cfg.inner_lr, inner_steps, cfg.second_order);

        NodePtr qx = constant(xs_of(task.query));
        NodePtr qy = constant(ys_of(task.query));
        NodePtr query_loss = mse_loss(forward(qx, adapted, tau), qy);

        double lv = query_loss->value.item();
        metrics.mean_query_loss += lv;
        auto& acc = mode_acc[task.mode_label];
        acc.first += lv;
        acc.second += 1;

        std::vector<NodePtr> task_grads = grad(query_loss, wrt, false);
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < total_grads[i].numel(); ++j)
                total_grads[i].data[j] += task_grads[i]->value.data[j];
    }

    metrics.mean_query_loss /= static_cast<double>(batch.size());
    for (auto& [label, acc] : mode_acc)
        metrics.per_mode_loss[label] = acc.first / static_cast<double>(acc.second);

    metrics.grad_norm = clip_global_norm(total_grads, cfg.clip_norm);
    learner.adam.step(params, total_grads);
    return metrics;
}

inline std::vector<TaskSample> sample_batch(const std::vector<FunctionMode>& modes,
                                            std::size_t n, const TrainingConfig& cfg,
                                            RngStream& rng) {
    std::vector<TaskSample> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        TaskSpec spec = sample_task(modes, rng);
        batch.push_back(realize_task(spec, cfg.k_support, cfg.l_query, cfg.noise_sigma, rng));
    }
    return batch;
}

// Full training loop for any model kind. MultiMAML routes by ground-truth
// mode: each member trains on its own mode's full task stream. The
// callback sees per-iteration metrics (mean over members for MultiMAML).
// modes_override (when non-empty) replaces cfg.modes(); used for degenerate
// single-mode checks.
inline Model run_baseline(ModelKind kind, const TrainingConfig& cfg,
                          const std::function<void(std::size_t, const StepMetrics&, Model&)>& on_iter = {},
                          const std::vector<FunctionMode>& modes_override = {}) {
    std::vector<FunctionMode> modes = modes_override.empty() ? cfg.modes() : modes_override;
    RngStream init_rng(cfg.seed);
    Model model = init_model(kind, cfg, init_rng, modes.size());
    std::size_t inner_steps = model.inner_steps(cfg.inner_steps_train);

    // distinct sampling stream per member so MultiMAML members draw
    // independent per-mode streams
    std::vector<RngStream> streams;
    for (std::size_t m = 0; m < model.members.size(); ++m)
        streams.emplace_back(cfg.seed ^ (0x5555AAAA5555AAAAULL + m));

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        StepMetrics merged;
        for (std::size_t m = 0; m < model.members.size(); ++m) {
            std::vector<FunctionMode> member_modes =
                kind == ModelKind::MultiMAML ? std::vector<FunctionMode>{modes[m]} : modes;
            std::vector<TaskSample> batch =
                sample_batch(member_modes, cfg.meta_batch_size, cfg, streams[m]);
            StepMetrics sm = meta_train_step(model.members[m], model.op, batch, cfg, inner_steps);
            merged.mean_query_loss += sm.mean_query_loss;
            merged.grad_norm += sm.grad_norm;
            for (auto& [label, v] : sm.per_mode_loss) merged.per_mode_loss[label] = v;
        }
        merged.mean_query_loss /= static_cast<double>(model.members.size());
        merged.grad_norm /= static_cast<double>(model.members.size());
        if (on_iter) on_iter(iter, merged, model);
    }
    return model;
}

}  // namespace mmaml
