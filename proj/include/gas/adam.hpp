#pragma once

#include <cmath>

#include "gas/tensor.hpp"

namespace gas {

// Adam with bias correction. Moment buffers are laid out in the same order as
// the parameter list handed to init().
template <typename S>
class Adam {
public:
    S lr = S(1e-3);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);

    void init(const std::vector<Tensor<S>>& params) {
        params_ = params;
        m_.clear();
        v_.clear();
        for (auto& p : params_) {
            m_.emplace_back(p.numel(), S(0));
            v_.emplace_back(p.numel(), S(0));
        }
        step_count_ = 0;
    }

    long step_count() const { return step_count_; }

    void step() {
        require(!params_.empty(), "adam: not initialized");
        ++step_count_;
        const S bc1 = S(1) - std::pow(beta1, S(step_count_));
        const S bc2 = S(1) - std::pow(beta2, S(step_count_));
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor<S>& p = params_[pi];
            require(p.has_grad(), detail::str("adam: parameter ", pi, " has no gradient"));
            const S* g = p.grad().data();
            S* val = p.data();
            S* m = m_[pi].data();
            S* v = v_[pi].data();
            const long n = p.numel();
            for (long i = 0; i < n; ++i) {
                m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
                v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
                const S mhat = m[i] / bc1;
                const S vhat = v[i] / bc2;
                val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

private:
    std::vector<Tensor<S>> params_;
    std::vector<std::vector<S>> m_, v_;
    long step_count_ = 0;
};

}  // namespace gas
