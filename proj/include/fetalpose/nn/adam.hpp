#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fetalpose/nn/tensor.hpp"

namespace fetalpose::nn {

// Adam with global-norm gradient clipping at the front. One state slot per
// parameter tensor, in canonical parameter order.
template <class T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void init(const std::vector<ParamRef<T>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.tensor->size(), T(0));
            v.emplace_back(p.tensor->size(), T(0));
        }
        t = 0;
    }
};

template <class T>
double grad_global_norm(const std::vector<ParamRef<T>>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (const T g : p.tensor->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(sq);
}

// If the global gradient norm exceeds clip_threshold the whole gradient is
// rescaled onto the threshold sphere before the Adam update. Increments the
// caller's version counter; returns the pre-clip norm.
template <class T>
double adam_step(std::vector<ParamRef<T>>& params, AdamState<T>& st, double lr,
                 double clip_threshold, uint64_t* version) {
    if (st.m.size() != params.size()) st.init(params);
    const double gnorm = grad_global_norm(params);
    const double scale =
        (clip_threshold > 0.0 && gnorm > clip_threshold) ? clip_threshold / gnorm : 1.0;

    st.t += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i].tensor;
        p.ensure_grad();
        auto& m = st.m[i];
        auto& v = st.v[i];
        for (size_t j = 0; j < p.size(); ++j) {
            const double g = static_cast<double>(p.grad[j]) * scale;
            const double mj = st.beta1 * static_cast<double>(m[j]) + (1.0 - st.beta1) * g;
            const double vj = st.beta2 * static_cast<double>(v[j]) + (1.0 - st.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            p.data[j] -= static_cast<T>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + st.eps));
        }
    }
    if (version) *version += 1;
    return gnorm;
}

}  // namespace fetalpose::nn
