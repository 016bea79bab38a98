#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hsc/errors.hpp"

namespace hsc {

// Engine-wide storage scalar. Reductions accumulate in double regardless.
using real = float;

// Dense row-major rank-4 tensor, axes (batch|features, channels, height, width).
template <class T>
struct Tensor4 {
    std::array<int, 4> dims{0, 0, 0, 0};
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int d0, int d1, int d2, int d3)
        : dims{d0, d1, d2, d3}, data(static_cast<size_t>(d0) * d1 * d2 * d3, T(0)) {
        if (d0 < 0 || d1 < 0 || d2 < 0 || d3 < 0)
            throw shape_error("Tensor4: negative dimension");
    }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // Pointer to the start of one (n, c) plane.
    T* plane(int n, int c) {
        return data.data() + (static_cast<size_t>(n) * dims[1] + c) * dims[2] * dims[3];
    }
    const T* plane(int n, int c) const {
        return data.data() + (static_cast<size_t>(n) * dims[1] + c) * dims[2] * dims[3];
    }

    T& at(int n, int c, int h, int w) {
        return data[((static_cast<size_t>(n) * dims[1] + c) * dims[2] + h) * dims[3] + w];
    }
    T at(int n, int c, int h, int w) const {
        return data[((static_cast<size_t>(n) * dims[1] + c) * dims[2] + h) * dims[3] + w];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor4& o) const { return dims == o.dims; }

    std::string shape_str() const {
        return "[" + std::to_string(dims[0]) + "," + std::to_string(dims[1]) + "," +
               std::to_string(dims[2]) + "," + std::to_string(dims[3]) + "]";
    }
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

// Dense row-major matrix; the materialized-Toeplitz oracle type.
template <class T>
struct DenseMatrix {
    int rows = 0, cols = 0;
    std::vector<T> data;

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {}

    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    T at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

template <class T>
bool all_finite(const Tensor4<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace hsc
