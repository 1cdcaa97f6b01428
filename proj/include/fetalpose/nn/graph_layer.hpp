#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "fetalpose/nn/gemm.hpp"
#include "fetalpose/nn/tensor.hpp"
#include "fetalpose/pose_graph.hpp"

namespace fetalpose::nn {

// Graph communication layer: per-node kernels followed by mixing with the
// row-softmax-normalized, support-masked, trainable adjacency,
//
//   H = sigma( [ W^(0) x_0 || ... || W^(14) x_14 ] * rho(M (.) A) ).
//
// Features are stored node-major ([group][node][channel]), so the mixing step
// reads H_j = sum_i P[i][j] * (W^(i) x_i). Hidden layers use ReLU; the final
// Q layer uses the identity so values keep their sign.
template <class T>
class GraphCommLayer {
public:
    GraphCommLayer(int c_in, int c_out, bool relu,
                   const std::array<double, kNumLandmarks * kNumLandmarks>& support)
        : c_in_(c_in),
          c_out_(c_out),
          relu_(relu),
          kernels({kNumLandmarks, c_out, c_in}),
          mask({kNumLandmarks, kNumLandmarks}) {
        for (int i = 0; i < kNumLandmarks * kNumLandmarks; ++i) {
            support_[i] = support[i] != 0.0;
        }
        kernels.ensure_grad();
        mask.ensure_grad();
    }

    Tensor<T> kernels;  // W^(i), one c_out x c_in matrix per node
    Tensor<T> mask;     // M, softmax-normalized over the support per row

    int in_channels() const { return c_in_; }
    int out_channels() const { return c_out_; }
    bool uses_relu() const { return relu_; }
    bool supported(int i, int j) const { return support_[i * kNumLandmarks + j]; }

    // rho(M (.) A) in this layer's precision; rows sum to 1, zeros off-support.
    std::vector<T> normalized_mixing() const {
        constexpr int K = kNumLandmarks;
        std::vector<T> P(K * K, T(0));
        for (int i = 0; i < K; ++i) {
            T rowmax = -std::numeric_limits<T>::infinity();
            for (int j = 0; j < K; ++j) {
                if (support_[i * K + j]) rowmax = std::max(rowmax, mask.data[i * K + j]);
            }
            T sum = T(0);
            for (int j = 0; j < K; ++j) {
                if (support_[i * K + j]) {
                    const T e = std::exp(mask.data[i * K + j] - rowmax);
                    P[i * K + j] = e;
                    sum += e;
                }
            }
            for (int j = 0; j < K; ++j) P[i * K + j] /= sum;
        }
        return P;
    }

    // x: [groups][15][c_in] -> [groups][15][c_out]
    std::vector<T> forward(const std::vector<T>& x, int groups, bool record) {
        constexpr int K = kNumLandmarks;
        if (x.size() != static_cast<size_t>(groups) * K * c_in_) {
            throw ShapeMismatch("GraphCommLayer::forward input size");
        }
        const std::vector<T> P = normalized_mixing();
        std::vector<T> transformed(static_cast<size_t>(groups) * K * c_out_, T(0));
        std::vector<T> out(static_cast<size_t>(groups) * K * c_out_, T(0));

        for (int g = 0; g < groups; ++g) {
            const T* xg = x.data() + static_cast<size_t>(g) * K * c_in_;
            T* yg = transformed.data() + static_cast<size_t>(g) * K * c_out_;
            for (int i = 0; i < K; ++i) {
                const T* wi = kernels.data.data() + static_cast<size_t>(i) * c_out_ * c_in_;
                const T* xi = xg + static_cast<size_t>(i) * c_in_;
                T* yi = yg + static_cast<size_t>(i) * c_out_;
                for (int o = 0; o < c_out_; ++o) {
                    yi[o] = dot_fixed(wi + static_cast<size_t>(o) * c_in_, xi, c_in_);
                }
            }
            T* hg = out.data() + static_cast<size_t>(g) * K * c_out_;
            for (int i = 0; i < K; ++i) {
                const T* yi = yg + static_cast<size_t>(i) * c_out_;
                for (int j = 0; j < K; ++j) {
                    const T p = P[i * K + j];
                    if (p == T(0)) continue;
                    T* hj = hg + static_cast<size_t>(j) * c_out_;
                    for (int o = 0; o < c_out_; ++o) hj[o] += p * yi[o];
                }
            }
        }

        if (relu_) {
            if (record) relu_mask_.assign(out.size(), 0);
            for (size_t i = 0; i < out.size(); ++i) {
                if (out[i] > T(0)) {
                    if (record) relu_mask_[i] = 1;
                } else {
                    out[i] = T(0);
                }
            }
        }
        if (record) {
            cached_x_ = x;
            cached_transformed_ = std::move(transformed);
            cached_p_ = P;
            cached_groups_ = groups;
            recorded_ = true;
        }
        return out;
    }

    void backward(const std::vector<T>& dout, std::vector<T>* dx) {
        if (!recorded_) throw GraphNotRecorded("GraphCommLayer::backward without recorded forward");
        constexpr int K = kNumLandmarks;
        const int groups = cached_groups_;
        kernels.ensure_grad();
        mask.ensure_grad();
        if (dx) dx->assign(cached_x_.size(), T(0));

        std::vector<T> dh = dout;
        if (relu_) {
            for (size_t i = 0; i < dh.size(); ++i) {
                if (!relu_mask_[i]) dh[i] = T(0);
            }
        }

        std::vector<T> dP(K * K, T(0));
        std::vector<T> dtrans(static_cast<size_t>(K) * c_out_);
        for (int g = 0; g < groups; ++g) {
            const T* xg = cached_x_.data() + static_cast<size_t>(g) * K * c_in_;
            const T* yg = cached_transformed_.data() + static_cast<size_t>(g) * K * c_out_;
            const T* dhg = dh.data() + static_cast<size_t>(g) * K * c_out_;

            std::fill(dtrans.begin(), dtrans.end(), T(0));
            for (int i = 0; i < K; ++i) {
                T* dyi = dtrans.data() + static_cast<size_t>(i) * c_out_;
                for (int j = 0; j < K; ++j) {
                    const T p = cached_p_[i * K + j];
                    const T* dhj = dhg + static_cast<size_t>(j) * c_out_;
                    if (p != T(0)) {
                        for (int o = 0; o < c_out_; ++o) dyi[o] += p * dhj[o];
                    }
                    if (supported(i, j)) {
                        dP[i * K + j] +=
                            dot_fixed(yg + static_cast<size_t>(i) * c_out_, dhj, c_out_);
                    }
                }
            }
            for (int i = 0; i < K; ++i) {
                const T* dyi = dtrans.data() + static_cast<size_t>(i) * c_out_;
                const T* xi = xg + static_cast<size_t>(i) * c_in_;
                T* dwi = kernels.grad.data() + static_cast<size_t>(i) * c_out_ * c_in_;
                for (int o = 0; o < c_out_; ++o) {
                    const T d = dyi[o];
                    if (d != T(0)) {
                        T* dwo = dwi + static_cast<size_t>(o) * c_in_;
                        for (int cc = 0; cc < c_in_; ++cc) dwo[cc] += d * xi[cc];
                    }
                }
                if (dx) {
                    const T* wi = kernels.data.data() + static_cast<size_t>(i) * c_out_ * c_in_;
                    T* dxi = dx->data() + (static_cast<size_t>(g) * K + i) * c_in_;
                    for (int o = 0; o < c_out_; ++o) {
                        const T d = dyi[o];
                        if (d != T(0)) {
                            const T* wo = wi + static_cast<size_t>(o) * c_in_;
                            for (int cc = 0; cc < c_in_; ++cc) dxi[cc] += d * wo[cc];
                        }
                    }
                }
            }
        }

        // Softmax rows: dM = P (.) (dP - rowsum(dP (.) P)), support entries only.
        for (int i = 0; i < K; ++i) {
            T inner = T(0);
            for (int j = 0; j < K; ++j) inner += dP[i * K + j] * cached_p_[i * K + j];
            for (int j = 0; j < K; ++j) {
                if (supported(i, j)) {
                    mask.grad[i * K + j] += cached_p_[i * K + j] * (dP[i * K + j] - inner);
                }
            }
        }
        recorded_ = false;
        cached_x_.clear();
        cached_transformed_.clear();
    }

private:
    int c_in_, c_out_;
    bool relu_;
    std::array<bool, kNumLandmarks * kNumLandmarks> support_{};
    std::vector<T> cached_x_, cached_transformed_, cached_p_;
    std::vector<uint8_t> relu_mask_;
    int cached_groups_ = 0;
    bool recorded_ = false;
};

}  // namespace fetalpose::nn
