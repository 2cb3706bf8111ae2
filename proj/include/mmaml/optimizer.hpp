#pragma once

#include <cmath>
#include <vector>

#include "mmaml/tensor.hpp"

namespace mmaml {

// Adam with bias correction. One instance owns the moments for a fixed,
// ordered set of parameter tensors; theta, omega_h and omega_g share a
// single instance so the outer update is one joint step.
class AdamOptimizer {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamOptimizer(double lr = 0.001) : lr_(lr) {}

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
        if (params.size() != grads.size()) throw Error("adam: param/grad count mismatch");
        if (m_.empty()) {
            for (const Tensor* p : params) {
                m_.push_back(Tensor::zeros(p->shape));
                v_.push_back(Tensor::zeros(p->shape));
            }
        }
        if (m_.size() != params.size()) throw Error("adam: parameter set changed size");
        ++t_;
        double bc1 = 1.0 - std::pow(beta1, t_);
        double bc2 = 1.0 - std::pow(beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = grads[i];
            if (!p.same_shape(g)) throw Error("adam: grad shape mismatch");
            for (std::size_t j = 0; j < p.numel(); ++j) {
                double gj = g.data[j];
                m_[i].data[j] = beta1 * m_[i].data[j] + (1.0 - beta1) * gj;
                v_[i].data[j] = beta2 * v_[i].data[j] + (1.0 - beta2) * gj * gj;
                double mhat = m_[i].data[j] / bc1;
                double vhat = v_[i].data[j] / bc2;
                p.data[j] -= lr_ * mhat / (std::sqrt(vhat) + epsilon);
            }
        }
    }

    long long step_count() const { return t_; }
    double learning_rate() const { return lr_; }

    // moment access for checkpointing
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    void restore(std::vector<Tensor> m, std::vector<Tensor> v, long long t) {
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

private:
    double lr_;
    long long t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Global-norm gradient clipping; no-op when max_norm <= 0.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (double v : g.data) sq += v * v;
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        double s = max_norm / norm;
        for (Tensor& g : grads)
            for (double& v : g.data) v *= s;
    }
    return norm;
}

}  // namespace mmaml
