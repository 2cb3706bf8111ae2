#pragma once

#include <string>
#include <vector>

#include "mmaml/autodiff.hpp"
#include "mmaml/rng.hpp"
#include "mmaml/tensor.hpp"

namespace mmaml {

// Task network architecture: 4 weight layers, 1 -> 100 -> 100 -> 100 -> 1,
// ReLU hidden activations, linear output. The 3 hidden blocks are the
// modulated blocks.
constexpr std::size_t kHiddenWidth = 100;
constexpr std::size_t kNumBlocks = 3;

enum class ModulationOp { Identity, FiLM, SoftmaxAttention, SigmoidGating };

inline const char* modulation_op_name(ModulationOp op) {
    switch (op) {
        case ModulationOp::Identity: return "identity";
        case ModulationOp::FiLM: return "film";
        case ModulationOp::SoftmaxAttention: return "softmax";
        case ModulationOp::SigmoidGating: return "sigmoid";
    }
    return "?";
}

inline ModulationOp modulation_op_from_name(const std::string& s) {
    if (s == "identity") return ModulationOp::Identity;
    if (s == "film") return ModulationOp::FiLM;
    if (s == "softmax") return ModulationOp::SoftmaxAttention;
    if (s == "sigmoid") return ModulationOp::SigmoidGating;
    throw Error("unknown modulation operator: " + s);
}

// Weights stored as [in, out] so a [batch, in] activation right-multiplies.
struct MlpParameters {
    std::vector<Tensor> W;  // 4 matrices
    std::vector<Tensor> b;  // 4 vectors
};

inline std::vector<std::size_t> mlp_layer_dims() { return {1, kHiddenWidth, kHiddenWidth, kHiddenWidth, 1}; }

inline MlpParameters init_parameters(RngStream& rng) {
    MlpParameters p;
    auto dims = mlp_layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        std::size_t fan_in = dims[l], fan_out = dims[l + 1];
        Tensor W({fan_in, fan_out});
        double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : W.data) v = std_dev * rng.truncated_normal();
        p.W.push_back(std::move(W));
        p.b.emplace_back(Shape{fan_out});
    }
    return p;
}

// Graph-side mirror of MlpParameters.
struct MlpNodes {
    std::vector<NodePtr> W;
    std::vector<NodePtr> b;

    std::vector<NodePtr> flat() const {
        std::vector<NodePtr> out;
        for (std::size_t i = 0; i < W.size(); ++i) {
            out.push_back(W[i]);
            out.push_back(b[i]);
        }
        return out;
    }
};

inline MlpNodes lift(const MlpParameters& p) {
    MlpNodes n;
    for (const auto& w : p.W) n.W.push_back(leaf(w));
    for (const auto& b : p.b) n.b.push_back(leaf(b));
    return n;
}

// Per-block modulation vectors as graph nodes. FiLM carries (gamma, beta)
// pairs; attention/gating carry a single tau per block; Identity carries
// nothing.
struct ModulationSet {
    ModulationOp op = ModulationOp::Identity;
    std::vector<NodePtr> gamma;  // FiLM only
    std::vector<NodePtr> beta;   // FiLM only
    std::vector<NodePtr> tau;    // SoftmaxAttention / SigmoidGating

    static ModulationSet identity() { return {}; }

    std::size_t blocks() const {
        return op == ModulationOp::FiLM ? gamma.size()
             : op == ModulationOp::Identity ? kNumBlocks
             : tau.size();
    }

    std::vector<NodePtr> flat() const {
        std::vector<NodePtr> out;
        for (const auto& g : gamma) out.push_back(g);
        for (const auto& b : beta) out.push_back(b);
        for (const auto& t : tau) out.push_back(t);
        return out;
    }
};

// Modulated forward pass: per hidden block, pre-activation F = h W + b is
// transformed by the operator (FiLM: F * gamma + beta; attention/gating:
// F * tau), then ReLU; the output layer is an unmodulated linear map.
// x is [batch, 1]; returns a [batch] prediction node. Works for any depth
// so toy networks can ride the same path; non-identity modulation must
// match the hidden block count.
inline NodePtr forward(const NodePtr& x, const MlpNodes& net, const ModulationSet& mod) {
    std::size_t n_hidden = net.W.size() - 1;
    if (mod.op != ModulationOp::Identity && mod.blocks() != n_hidden)
        throw Error("forward: modulation has " + std::to_string(mod.blocks()) +
                    " blocks, network has " + std::to_string(n_hidden));
    NodePtr h = x;
    for (std::size_t i = 0; i < n_hidden; ++i) {
        NodePtr f = add(matmul(h, net.W[i]), net.b[i]);
        switch (mod.op) {
            case ModulationOp::Identity:
                break;
            case ModulationOp::FiLM:
                f = add(mul(f, mod.gamma[i]), mod.beta[i]);
                break;
            case ModulationOp::SoftmaxAttention:
            case ModulationOp::SigmoidGating:
                f = mul(f, mod.tau[i]);
                break;
        }
        h = relu(f);
    }
    NodePtr out = add(matmul(h, net.W[n_hidden]), net.b[n_hidden]);
    return reshape(out, {out->value.rows()});
}

inline NodePtr mse_loss(const NodePtr& pred, const NodePtr& target) {
    if (pred->value.numel() != target->value.numel())
        throw Error("mse_loss: length mismatch " + shape_str(pred->value.shape) + " vs " +
                    shape_str(target->value.shape));
    return mean(square(sub(pred, target)));
}

}  // namespace mmaml
