#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "fetalpose/errors.hpp"

namespace fetalpose::nn {

// Dense row-major tensor with an optional gradient buffer of the same shape.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(element_count(shape), T(0));
    }

    static size_t element_count(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }

    size_t size() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() { grad.assign(data.size(), T(0)); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

// Named handle used for optimizer traversal, snapshots and checkpoints.
// Traversal order is the canonical parameter order everywhere.
template <class T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor = nullptr;
};

}  // namespace fetalpose::nn
