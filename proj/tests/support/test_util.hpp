#pragma once

#include <cmath>
#include <vector>

#include "hsc/conv.hpp"
#include "hsc/rng.hpp"
#include "hsc/tensor.hpp"

// Shared helpers for randomized instances and oracle comparisons.

namespace hsc::test {

template <class T>
Tensor4<T> random_tensor(Rng& rng, int d0, int d1, int d2, int d3, double lo = -1.0,
                         double hi = 1.0) {
    Tensor4<T> t(d0, d1, d2, d3);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <class T>
Tensor4<T> random_nonneg_tensor(Rng& rng, int d0, int d1, int d2, int d3, double hi = 1.0) {
    return random_tensor<T>(rng, d0, d1, d2, d3, 0.0, hi);
}

template <class T>
ConvDictionary<T> random_dict(Rng& rng, int n_feat, int in_c, int k, int stride) {
    Tensor4<T> w(n_feat, in_c, k, k);
    for (auto& v : w.data) v = static_cast<T>(rng.normal());
    return ConvDictionary<T>(std::move(w), stride);
}

template <class T>
double max_abs(const Tensor4<T>& t) {
    double m = 0;
    for (auto v : t.data) m = std::max(m, std::fabs(static_cast<double>(v)));
    return m;
}

template <class T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

// max |a - b| / max(1, |a|max, |b|max)
template <class T>
double rel_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
    const double scale = std::max({1.0, max_abs(a), max_abs(b)});
    return max_abs_diff(a, b) / scale;
}

inline double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max(1e-300, std::fabs(want));
}

// Dense matrix-vector products against the materialized operator.
template <class T>
std::vector<double> matvec(const DenseMatrix<T>& m, const std::vector<double>& v) {
    std::vector<double> out(m.rows, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        double acc = 0;
        for (int c = 0; c < m.cols; ++c) acc += static_cast<double>(m.at(r, c)) * v[c];
        out[r] = acc;
    }
    return out;
}

template <class T>
std::vector<double> matvec_transposed(const DenseMatrix<T>& m, const std::vector<double>& v) {
    std::vector<double> out(m.cols, 0.0);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) out[c] += static_cast<double>(m.at(r, c)) * v[r];
    return out;
}

template <class T>
std::vector<double> flatten(const Tensor4<T>& t) {
    std::vector<double> v(t.data.begin(), t.data.end());
    return v;
}

} // namespace hsc::test
