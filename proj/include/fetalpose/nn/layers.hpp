#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fetalpose/nn/gemm.hpp"
#include "fetalpose/nn/tensor.hpp"

namespace fetalpose::nn {

// 3D convolution, kernel 3, zero padding 1, configurable stride, no bias (a
// batch-norm layer always follows, which would cancel it). Instances are laid
// out [n][channels][side^3] with x fastest. Forward is im2col + GEMM; the
// backward weight pass re-gathers im2col instead of caching it.
template <class T>
class Conv3d {
public:
    Conv3d(int in_ch, int out_ch, int stride)
        : in_ch_(in_ch), out_ch_(out_ch), stride_(stride), weight({out_ch, in_ch * 27}) {
        weight.ensure_grad();
    }

    Tensor<T> weight;

    int out_side(int in_side) const { return (in_side - 1) / stride_ + 1; }
    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

    std::vector<T> forward(const std::vector<T>& x, int n, int in_side, bool record) {
        const int so = out_side(in_side);
        const size_t pin = static_cast<size_t>(in_side) * in_side * in_side;
        const size_t pout = static_cast<size_t>(so) * so * so;
        const int K = in_ch_ * 27;
        if (x.size() != static_cast<size_t>(n) * in_ch_ * pin) {
            throw ShapeMismatch("Conv3d::forward input size");
        }
        std::vector<T> y(static_cast<size_t>(n) * out_ch_ * pout, T(0));

#pragma omp parallel
        {
            std::vector<T> cols(static_cast<size_t>(K) * pout);
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) {
                const T* xi = x.data() + static_cast<size_t>(i) * in_ch_ * pin;
                for (int k = 0; k < K; ++k) im2col_row(xi, cols.data(), k, in_side, so);
                gemm_nn_accum(y.data() + static_cast<size_t>(i) * out_ch_ * pout, weight.data.data(),
                              cols.data(), out_ch_, K, static_cast<int>(pout));
            }
        }

        if (record) {
            cached_input_ = x;
            cached_n_ = n;
            cached_in_side_ = in_side;
            recorded_ = true;
        }
        return y;
    }

    // dy: same layout as forward output. Accumulates weight.grad; fills dx
    // when non-null (skip for the first layer of the network).
    void backward(const std::vector<T>& dy, std::vector<T>* dx) {
        if (!recorded_) throw GraphNotRecorded("Conv3d::backward without recorded forward");
        const int n = cached_n_;
        const int in_side = cached_in_side_;
        const int so = out_side(in_side);
        const size_t pin = static_cast<size_t>(in_side) * in_side * in_side;
        const size_t pout = static_cast<size_t>(so) * so * so;
        const int K = in_ch_ * 27;

        if (dx) dx->assign(static_cast<size_t>(n) * in_ch_ * pin, T(0));

        if (dx) {
#pragma omp parallel
            {
                std::vector<T> dcols(static_cast<size_t>(K) * pout);
#pragma omp for schedule(static)
                for (int i = 0; i < n; ++i) {
                    std::fill(dcols.begin(), dcols.end(), T(0));
                    const T* dyi = dy.data() + static_cast<size_t>(i) * out_ch_ * pout;
                    for (int k = 0; k < K; ++k) {
                        gemm_atb_accum_row(dcols.data(), weight.data.data(), dyi, k, out_ch_, K,
                                           static_cast<int>(pout));
                    }
                    col2im(dcols.data(), dx->data() + static_cast<size_t>(i) * in_ch_ * pin,
                           in_side, so);
                }
            }
        }

        // Weight gradient: instances accumulate sequentially so the result is
        // independent of the thread count; parallelism is across rows.
        std::vector<T> cols(static_cast<size_t>(K) * pout);
        weight.ensure_grad();
        for (int i = 0; i < n; ++i) {
            const T* xi = cached_input_.data() + static_cast<size_t>(i) * in_ch_ * pin;
            const T* dyi = dy.data() + static_cast<size_t>(i) * out_ch_ * pout;
#pragma omp parallel for schedule(static)
            for (int k = 0; k < K; ++k) im2col_row(xi, cols.data(), k, in_side, so);
#pragma omp parallel for schedule(static)
            for (int m = 0; m < out_ch_; ++m) {
                gemm_abt_accum_row(weight.grad.data(), dyi, cols.data(), m, K,
                                   static_cast<int>(pout));
            }
        }
        recorded_ = false;
        cached_input_.clear();
        cached_input_.shrink_to_fit();
    }

private:
    // Row k of the im2col matrix: channel c, kernel offset (kz, ky, kx).
    void im2col_row(const T* x, T* cols, int k, int in_side, int so) const {
        const int kx = k % 3, ky = (k / 3) % 3, kz = (k / 9) % 3, c = k / 27;
        const size_t pin = static_cast<size_t>(in_side) * in_side * in_side;
        const T* xc = x + static_cast<size_t>(c) * pin;
        T* row = cols + static_cast<size_t>(k) * so * so * so;
        size_t p = 0;
        for (int z = 0; z < so; ++z) {
            const int iz = z * stride_ - 1 + kz;
            for (int y = 0; y < so; ++y) {
                const int iy = y * stride_ - 1 + ky;
                const bool plane_ok = iz >= 0 && iz < in_side && iy >= 0 && iy < in_side;
                for (int x_ = 0; x_ < so; ++x_, ++p) {
                    const int ix = x_ * stride_ - 1 + kx;
                    row[p] = (plane_ok && ix >= 0 && ix < in_side)
                                 ? xc[static_cast<size_t>(ix) +
                                      static_cast<size_t>(in_side) * (iy + static_cast<size_t>(in_side) * iz)]
                                 : T(0);
                }
            }
        }
    }

    void col2im(const T* dcols, T* dx, int in_side, int so) const {
        const size_t pin = static_cast<size_t>(in_side) * in_side * in_side;
        const int K = in_ch_ * 27;
        for (int k = 0; k < K; ++k) {
            const int kx = k % 3, ky = (k / 3) % 3, kz = (k / 9) % 3, c = k / 27;
            T* xc = dx + static_cast<size_t>(c) * pin;
            const T* row = dcols + static_cast<size_t>(k) * so * so * so;
            size_t p = 0;
            for (int z = 0; z < so; ++z) {
                const int iz = z * stride_ - 1 + kz;
                for (int y = 0; y < so; ++y) {
                    const int iy = y * stride_ - 1 + ky;
                    const bool plane_ok = iz >= 0 && iz < in_side && iy >= 0 && iy < in_side;
                    for (int x_ = 0; x_ < so; ++x_, ++p) {
                        const int ix = x_ * stride_ - 1 + kx;
                        if (plane_ok && ix >= 0 && ix < in_side) {
                            xc[static_cast<size_t>(ix) +
                               static_cast<size_t>(in_side) * (iy + static_cast<size_t>(in_side) * iz)] +=
                                row[p];
                        }
                    }
                }
            }
        }
    }

    int in_ch_, out_ch_, stride_;
    std::vector<T> cached_input_;
    int cached_n_ = 0, cached_in_side_ = 0;
    bool recorded_ = false;
};

// Per-channel batch normalization over instances x spatial positions. In
// batch-stat mode the statistics of the current call are kept in
// last_batch_mean/var so the trainer can fold them into the running
// estimates; this layer never updates running stats by itself.
template <class T>
class BatchNorm3d {
public:
    explicit BatchNorm3d(int channels)
        : channels_(channels),
          gamma({channels}),
          beta({channels}),
          running_mean({channels}),
          running_var({channels}) {
        gamma.fill(T(1));
        running_var.fill(T(1));
        gamma.ensure_grad();
        beta.ensure_grad();
    }

    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;  // state, not optimized
    double momentum = 0.1;
    double eps = 1e-5;

    std::vector<T> last_batch_mean, last_batch_var;

    std::vector<T> forward(const std::vector<T>& x, int n, size_t spatial, bool batch_stats,
                           bool record) {
        const int C = channels_;
        if (x.size() != static_cast<size_t>(n) * C * spatial) {
            throw ShapeMismatch("BatchNorm3d::forward input size");
        }
        std::vector<T> mean(C), var(C);
        if (batch_stats) {
            const T count = T(n * static_cast<double>(spatial));
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                T s = T(0);
                for (int i = 0; i < n; ++i) {
                    const T* xc = x.data() + (static_cast<size_t>(i) * C + c) * spatial;
                    for (size_t p = 0; p < spatial; ++p) s += xc[p];
                }
                const T mu = s / count;
                T sv = T(0);
                for (int i = 0; i < n; ++i) {
                    const T* xc = x.data() + (static_cast<size_t>(i) * C + c) * spatial;
                    for (size_t p = 0; p < spatial; ++p) sv += (xc[p] - mu) * (xc[p] - mu);
                }
                mean[c] = mu;
                var[c] = sv / count;
            }
            last_batch_mean = mean;
            last_batch_var = var;
        } else {
            mean.assign(running_mean.data.begin(), running_mean.data.end());
            var.assign(running_var.data.begin(), running_var.data.end());
        }

        std::vector<T> y(x.size());
        std::vector<T> invstd(C);
        for (int c = 0; c < C; ++c) invstd[c] = T(1) / std::sqrt(var[c] + T(eps));
        if (record) xhat_.resize(x.size());
#pragma omp parallel for schedule(static) collapse(2)
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < C; ++c) {
                const size_t off = (static_cast<size_t>(i) * C + c) * spatial;
                const T g = gamma.data[c], b = beta.data[c], mu = mean[c], is = invstd[c];
                for (size_t p = 0; p < spatial; ++p) {
                    const T xh = (x[off + p] - mu) * is;
                    if (record) xhat_[off + p] = xh;
                    y[off + p] = g * xh + b;
                }
            }
        }
        if (record) {
            invstd_ = invstd;
            cached_n_ = n;
            cached_spatial_ = spatial;
            recorded_ = true;
        }
        return y;
    }

    void backward(const std::vector<T>& dy, std::vector<T>* dx) {
        if (!recorded_) throw GraphNotRecorded("BatchNorm3d::backward without recorded forward");
        const int C = channels_;
        const int n = cached_n_;
        const size_t spatial = cached_spatial_;
        const T count = T(n * static_cast<double>(spatial));
        gamma.ensure_grad();
        beta.ensure_grad();
        if (dx) dx->assign(dy.size(), T(0));

#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            T sum_dy = T(0), sum_dy_xh = T(0);
            for (int i = 0; i < n; ++i) {
                const size_t off = (static_cast<size_t>(i) * C + c) * spatial;
                for (size_t p = 0; p < spatial; ++p) {
                    sum_dy += dy[off + p];
                    sum_dy_xh += dy[off + p] * xhat_[off + p];
                }
            }
            gamma.grad[c] += sum_dy_xh;
            beta.grad[c] += sum_dy;
            if (dx) {
                const T scale = gamma.data[c] * invstd_[c];
                const T mean_dy = sum_dy / count;
                const T mean_dy_xh = sum_dy_xh / count;
                for (int i = 0; i < n; ++i) {
                    const size_t off = (static_cast<size_t>(i) * C + c) * spatial;
                    for (size_t p = 0; p < spatial; ++p) {
                        (*dx)[off + p] =
                            scale * (dy[off + p] - mean_dy - xhat_[off + p] * mean_dy_xh);
                    }
                }
            }
        }
        recorded_ = false;
        xhat_.clear();
        xhat_.shrink_to_fit();
    }

    int channels() const { return channels_; }

private:
    int channels_;
    std::vector<T> xhat_, invstd_;
    int cached_n_ = 0;
    size_t cached_spatial_ = 0;
    bool recorded_ = false;
};

template <class T>
class ReLU {
public:
    std::vector<T> forward(const std::vector<T>& x, bool record) {
        std::vector<T> y(x.size());
        if (record) mask_.assign(x.size(), 0);
        for (size_t i = 0; i < x.size(); ++i) {
            const bool pos = x[i] > T(0);
            y[i] = pos ? x[i] : T(0);
            if (record && pos) mask_[i] = 1;
        }
        recorded_ = record;
        return y;
    }

    void backward(const std::vector<T>& dy, std::vector<T>* dx) {
        if (!recorded_) throw GraphNotRecorded("ReLU::backward without recorded forward");
        dx->assign(dy.size(), T(0));
        for (size_t i = 0; i < dy.size(); ++i) {
            if (mask_[i]) (*dx)[i] = dy[i];
        }
        recorded_ = false;
    }

private:
    std::vector<uint8_t> mask_;
    bool recorded_ = false;
};

// Max pooling, window 2, stride 2, ceil mode (boundary windows are clipped,
// so odd sides keep their last plane).
template <class T>
class MaxPool3d {
public:
    static int out_side(int in_side) { return (in_side + 1) / 2; }

    std::vector<T> forward(const std::vector<T>& x, int n, int C, int in_side, bool record) {
        const int so = out_side(in_side);
        const size_t pin = static_cast<size_t>(in_side) * in_side * in_side;
        const size_t pout = static_cast<size_t>(so) * so * so;
        std::vector<T> y(static_cast<size_t>(n) * C * pout);
        if (record) argmax_.resize(y.size());

#pragma omp parallel for schedule(static)
        for (int ic = 0; ic < n * C; ++ic) {
            const T* xc = x.data() + static_cast<size_t>(ic) * pin;
            T* yc = y.data() + static_cast<size_t>(ic) * pout;
            size_t q = 0;
            for (int z = 0; z < so; ++z) {
                for (int yy = 0; yy < so; ++yy) {
                    for (int xx = 0; xx < so; ++xx, ++q) {
                        T best = -std::numeric_limits<T>::infinity();
                        size_t best_idx = 0;
                        for (int dz = 2 * z; dz < std::min(2 * z + 2, in_side); ++dz) {
                            for (int dy_ = 2 * yy; dy_ < std::min(2 * yy + 2, in_side); ++dy_) {
                                for (int dx_ = 2 * xx; dx_ < std::min(2 * xx + 2, in_side); ++dx_) {
                                    const size_t idx =
                                        static_cast<size_t>(dx_) +
                                        static_cast<size_t>(in_side) *
                                            (dy_ + static_cast<size_t>(in_side) * dz);
                                    if (xc[idx] > best) {
                                        best = xc[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        yc[q] = best;
                        if (record) argmax_[static_cast<size_t>(ic) * pout + q] = best_idx;
                    }
                }
            }
        }
        if (record) {
            cached_n_c_ = n * C;
            cached_in_side_ = in_side;
            recorded_ = true;
        }
        return y;
    }

    void backward(const std::vector<T>& dy, std::vector<T>* dx) {
        if (!recorded_) throw GraphNotRecorded("MaxPool3d::backward without recorded forward");
        const int in_side = cached_in_side_;
        const int so = out_side(in_side);
        const size_t pin = static_cast<size_t>(in_side) * in_side * in_side;
        const size_t pout = static_cast<size_t>(so) * so * so;
        dx->assign(static_cast<size_t>(cached_n_c_) * pin, T(0));
#pragma omp parallel for schedule(static)
        for (int ic = 0; ic < cached_n_c_; ++ic) {
            const T* dyc = dy.data() + static_cast<size_t>(ic) * pout;
            T* dxc = dx->data() + static_cast<size_t>(ic) * pin;
            for (size_t q = 0; q < pout; ++q) {
                dxc[argmax_[static_cast<size_t>(ic) * pout + q]] += dyc[q];
            }
        }
        recorded_ = false;
    }

private:
    std::vector<size_t> argmax_;
    int cached_n_c_ = 0, cached_in_side_ = 0;
    bool recorded_ = false;
};

}  // namespace fetalpose::nn
