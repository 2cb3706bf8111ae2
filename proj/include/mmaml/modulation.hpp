#pragma once

#include <vector>

#include "mmaml/autodiff.hpp"
#include "mmaml/network.hpp"
#include "mmaml/rng.hpp"
#include "mmaml/tasks.hpp"

namespace mmaml {

// Task encoder: bidirectional LSTM over the sorted (x, y) support pairs,
// hidden size 40 per direction. The task embedding is the concatenation of
// the two final hidden states, dimension 80.
constexpr std::size_t kLstmHidden = 40;
constexpr std::size_t kEmbeddingDim = 2 * kLstmHidden;
constexpr std::size_t kGeneratorHidden = 64;

namespace detail {
inline Tensor init_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
    Tensor t({rows, cols});
    double std_dev = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : t.data) v = std_dev * rng.truncated_normal();
    return t;
}
}  // namespace detail

struct LstmCellParameters {
    Tensor W_ih;  // [4H, H] gate order i, f, g, o
    Tensor W_hh;  // [4H, H]
    Tensor bias;  // [4H]
};

struct EncoderParameters {
    Tensor in_proj_W;  // [H, 2]
    Tensor in_proj_b;  // [H]
    LstmCellParameters fwd;
    LstmCellParameters bwd;
};

inline EncoderParameters init_encoder(RngStream& rng) {
    EncoderParameters p;
    p.in_proj_W = detail::init_matrix(kLstmHidden, 2, rng);
    p.in_proj_b = Tensor({kLstmHidden});
    for (LstmCellParameters* cell : {&p.fwd, &p.bwd}) {
        cell->W_ih = detail::init_matrix(4 * kLstmHidden, kLstmHidden, rng);
        cell->W_hh = detail::init_matrix(4 * kLstmHidden, kLstmHidden, rng);
        cell->bias = Tensor({4 * kLstmHidden});
    }
    return p;
}

struct LstmCellNodes {
    NodePtr W_ih, W_hh, bias;
};

struct EncoderNodes {
    NodePtr in_proj_W, in_proj_b;
    LstmCellNodes fwd, bwd;

    std::vector<NodePtr> flat() const {
        return {in_proj_W, in_proj_b, fwd.W_ih, fwd.W_hh, fwd.bias, bwd.W_ih, bwd.W_hh, bwd.bias};
    }
};

inline EncoderNodes lift(const EncoderParameters& p) {
    return {leaf(p.in_proj_W), leaf(p.in_proj_b),
            {leaf(p.fwd.W_ih), leaf(p.fwd.W_hh), leaf(p.fwd.bias)},
            {leaf(p.bwd.W_ih), leaf(p.bwd.W_hh), leaf(p.bwd.bias)}};
}

namespace detail {

inline void lstm_step(const LstmCellNodes& cell, const NodePtr& u, NodePtr& h, NodePtr& c) {
    const std::size_t H = kLstmHidden;
    NodePtr gates = add(add(matmul(cell.W_ih, u), matmul(cell.W_hh, h)), cell.bias);
    NodePtr i = sigmoid(slice(gates, 0, H));
    NodePtr f = sigmoid(slice(gates, H, H));
    NodePtr g = tanh(slice(gates, 2 * H, H));
    NodePtr o = sigmoid(slice(gates, 3 * H, H));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
}

inline NodePtr lstm_final_hidden(const LstmCellNodes& cell, const std::vector<NodePtr>& inputs) {
    NodePtr h = constant(Tensor::zeros({kLstmHidden}));
    NodePtr c = constant(Tensor::zeros({kLstmHidden}));
    for (const NodePtr& u : inputs) lstm_step(cell, u, h, c);
    return h;
}

}  // namespace detail

// Embed a support set. Pairs must arrive sorted ascending by x (the
// canonical order realize_task stores them in).
inline NodePtr encode(const std::vector<Point>& support, const EncoderNodes& enc) {
    if (support.empty()) throw Error("encode: empty support set");
    std::vector<NodePtr> projected;
    projected.reserve(support.size());
    for (const Point& p : support) {
        NodePtr xy = constant(Tensor({2}, {p.x, p.y}));
        projected.push_back(add(matmul(enc.in_proj_W, xy), enc.in_proj_b));
    }
    NodePtr h_fwd = detail::lstm_final_hidden(enc.fwd, projected);
    std::vector<NodePtr> reversed(projected.rbegin(), projected.rend());
    NodePtr h_bwd = detail::lstm_final_hidden(enc.bwd, reversed);
    return concat({h_fwd, h_bwd});
}

// Per-block modulation generators: one hidden-layer MLP each,
// 80 -> 64 -> (200 for FiLM, 100 otherwise). The output layer is
// zero-initialized so training starts at identity modulation.
struct GeneratorBlockParameters {
    Tensor W1;  // [64, 80]
    Tensor b1;  // [64]
    Tensor W2;  // [out, 64]
    Tensor b2;  // [out]
};

struct GeneratorParameters {
    std::vector<GeneratorBlockParameters> blocks;  // one per modulated block
};

inline std::size_t generator_output_dim(ModulationOp op) {
    return op == ModulationOp::FiLM ? 2 * kHiddenWidth : kHiddenWidth;
}

inline GeneratorParameters init_generators(ModulationOp op, RngStream& rng) {
    std::size_t out = generator_output_dim(op);
    GeneratorParameters p;
    for (std::size_t i = 0; i < kNumBlocks; ++i) {
        GeneratorBlockParameters blk;
        blk.W1 = detail::init_matrix(kGeneratorHidden, kEmbeddingDim, rng);
        blk.b1 = Tensor({kGeneratorHidden});
        blk.W2 = Tensor({out, kGeneratorHidden});
        blk.b2 = Tensor({out});
        p.blocks.push_back(std::move(blk));
    }
    return p;
}

struct GeneratorBlockNodes {
    NodePtr W1, b1, W2, b2;
};

struct GeneratorNodes {
    std::vector<GeneratorBlockNodes> blocks;

    std::vector<NodePtr> flat() const {
        std::vector<NodePtr> out;
        for (const auto& b : blocks) {
            out.push_back(b.W1);
            out.push_back(b.b1);
            out.push_back(b.W2);
            out.push_back(b.b2);
        }
        return out;
    }
};

inline GeneratorNodes lift(const GeneratorParameters& p) {
    GeneratorNodes n;
    for (const auto& b : p.blocks) n.blocks.push_back({leaf(b.W1), leaf(b.b1), leaf(b.W2), leaf(b.b2)});
    return n;
}

// tau_i from the task embedding. FiLM uses a residual parameterization
// gamma = 1 + raw so zeroed generators give exact identity modulation;
// softmax attention is rescaled by the block width to keep activation
// magnitudes comparable to the unmodulated network.
inline ModulationSet generate_modulation(const NodePtr& upsilon, const GeneratorNodes& gen,
                                         ModulationOp op) {
    if (op == ModulationOp::Identity)
        throw Error("generate_modulation: identity has no generators");
    ModulationSet mod;
    mod.op = op;
    for (const auto& blk : gen.blocks) {
        NodePtr hidden = relu(add(matmul(blk.W1, upsilon), blk.b1));
        NodePtr raw = add(matmul(blk.W2, hidden), blk.b2);
        switch (op) {
            case ModulationOp::FiLM: {
                NodePtr one = constant(Tensor::ones({kHiddenWidth}));
                mod.gamma.push_back(add(one, slice(raw, 0, kHiddenWidth)));
                mod.beta.push_back(slice(raw, kHiddenWidth, kHiddenWidth));
                break;
            }
            case ModulationOp::SoftmaxAttention:
                mod.tau.push_back(scale(softmax(raw), static_cast<double>(kHiddenWidth)));
                break;
            case ModulationOp::SigmoidGating:
                mod.tau.push_back(sigmoid(raw));
                break;
            case ModulationOp::Identity:
                break;
        }
    }
    return mod;
}

}  // namespace mmaml
