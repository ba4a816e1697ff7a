#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tvase/common.hpp"

namespace tvase {

// Dense row-major tensor, last axis fastest. Feature maps in this codebase
// are stored frame-major: {T, C} for 1-D stages and {T, C, F} for 2-D stages,
// so one frame is a contiguous [C][F] block shared between the batch and
// streaming paths.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }
    Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(numel_of(shape)));
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        if (s.empty()) return 0;
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + std::to_string(d));
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // 2-D / 3-D index helpers for the common {T,C} and {T,C,F} layouts.
    T& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    const T& at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    T& at3(int64_t i, int64_t j, int64_t k) {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    const T& at3(int64_t i, int64_t j, int64_t k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<int64_t>& want, const char* what) {
    if (t.shape != want)
        throw ShapeError(std::string(what) + ": expected shape " + shape_str(want) + ", got " +
                         shape_str(t.shape));
}

} // namespace tvase
