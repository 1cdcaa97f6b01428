#pragma once

#include <vector>

#include "fetalpose/dqn/policy.hpp"
#include "fetalpose/dqn/replay.hpp"
#include "fetalpose/nn/qnet.hpp"

namespace fetalpose {

namespace detail {

template <class T>
std::vector<T> stack_patches(const std::vector<Experience>& batch, bool next_state) {
    const size_t per = next_state ? batch[0].patches_t1.size() : batch[0].patches_t.size();
    std::vector<T> out(batch.size() * per);
    for (size_t b = 0; b < batch.size(); ++b) {
        const auto& src = next_state ? batch[b].patches_t1 : batch[b].patches_t;
        for (size_t i = 0; i < per; ++i) out[b * per + i] = static_cast<T>(src[i]);
    }
    return out;
}

}  // namespace detail

// y_{b,k} = r_{b,k} + gamma * max_a Q_k(s_{t+1}, a; theta^-), with the
// bootstrap dropped on terminal samples. The frozen network runs on its
// running statistics.
template <class T>
std::vector<double> td_targets(const std::vector<Experience>& batch, nn::QNetwork<T>& target_net,
                               double gamma) {
    const int B = static_cast<int>(batch.size());
    if (B == 0) throw Error("td_targets: empty batch");
    const auto x1 = detail::stack_patches<T>(batch, true);
    const auto q1 = target_net.forward(x1, B, nn::ForwardMode::eval);

    std::vector<double> y(static_cast<size_t>(B) * kNumLandmarks);
    for (int b = 0; b < B; ++b) {
        for (int k = 0; k < kNumLandmarks; ++k) {
            const T* row = q1.data() + (static_cast<size_t>(b) * kNumLandmarks + k) * kNumActions;
            double mx = static_cast<double>(row[0]);
            for (int a = 1; a < kNumActions; ++a) mx = std::max(mx, static_cast<double>(row[a]));
            y[static_cast<size_t>(b) * kNumLandmarks + k] =
                td_target(batch[b].rewards[k], mx, gamma, batch[b].terminal);
        }
    }
    return y;
}

// Multi-agent DQN loss: sum over the 15 agents of the batch-mean squared TD
// residual. Gradients flow only through the theta branch and are accumulated
// unclipped onto net's parameter grads (clipping happens in the optimizer).
// Set record=false for value-only evaluations (finite differences).
template <class T>
double dqn_loss_and_grads(const std::vector<Experience>& batch, nn::QNetwork<T>& net,
                          nn::QNetwork<T>& target_net, double gamma, bool record = true) {
    const int B = static_cast<int>(batch.size());
    if (B == 0) throw Error("dqn_loss_and_grads: empty batch");
    const auto y = td_targets(batch, target_net, gamma);

    const auto x0 = detail::stack_patches<T>(batch, false);
    const auto q =
        net.forward(x0, B, record ? nn::ForwardMode::train : nn::ForwardMode::train_no_record);

    double loss = 0.0;
    std::vector<T> dq(q.size(), T(0));
    for (int b = 0; b < B; ++b) {
        for (int k = 0; k < kNumLandmarks; ++k) {
            const size_t row = (static_cast<size_t>(b) * kNumLandmarks + k) * kNumActions;
            const int a = batch[b].actions[k];
            const double resid =
                static_cast<double>(q[row + a]) - y[static_cast<size_t>(b) * kNumLandmarks + k];
            loss += resid * resid / B;
            dq[row + a] = static_cast<T>(2.0 * resid / B);
        }
    }
    if (record) net.backward(dq);
    return loss;
}

// theta^- <- theta (deep copy of parameters, running stats and version).
template <class T>
void sync_target(const nn::QNetwork<T>& net, nn::QNetwork<T>& target) {
    target = net;
}

}  // namespace fetalpose
