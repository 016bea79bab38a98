#pragma once

#include <cstdint>
#include <vector>

#include "hsc/kernels.hpp"
#include "hsc/tensor.hpp"

// Convolutional dictionary algebra. A dictionary maps a code stack
// [batch, n_features, out_h, out_w] to a signal stack [batch, in_c, in_h, in_w]
// through a strided transposed convolution (decode); encode is its exact
// adjoint. Valid boundary mode throughout: out = floor((in - k) / stride) + 1.

namespace hsc {

template <class T>
struct ConvDictionary {
    Tensor4<T> weights; // [n_features, in_channels, k_h, k_w]
    int stride = 1;

    ConvDictionary() = default;
    ConvDictionary(Tensor4<T> w, int s) : weights(std::move(w)), stride(s) {
        if (stride < 1) throw param_error("ConvDictionary: stride must be >= 1");
    }

    int n_features() const { return weights.dims[0]; }
    int in_channels() const { return weights.dims[1]; }
    int k_h() const { return weights.dims[2]; }
    int k_w() const { return weights.dims[3]; }
    size_t atom_size() const {
        return static_cast<size_t>(in_channels()) * k_h() * k_w();
    }
};

using ConvDict = ConvDictionary<real>;

// Output spatial extent of a valid strided convolution; throws if the kernel
// does not fit.
int conv_out_extent(int in, int k, int stride, const char* axis);

// Geometry for one image of the given signal dims.
template <class T>
kern::conv_shape make_conv_shape(const ConvDictionary<T>& d, int in_c, int in_h, int in_w);

// signal -> code correlation, D applied to a signal stack. Output may be
// negative; it is a gradient-side quantity, not a sparse map.
template <class T>
Tensor4<T> encode(const ConvDictionary<T>& d, const Tensor4<T>& signal);
template <class T>
void encode_into(const ConvDictionary<T>& d, const Tensor4<T>& signal, Tensor4<T>& code);

// code -> signal back-projection, D^T applied to a code stack. Signal spatial
// dims must be given when the stride makes them ambiguous; the two-argument
// form uses the minimal extent (out-1)*stride + k.
template <class T>
Tensor4<T> decode(const ConvDictionary<T>& d, const Tensor4<T>& code);
template <class T>
Tensor4<T> decode(const ConvDictionary<T>& d, const Tensor4<T>& code, int in_h, int in_w);
template <class T>
void decode_into(const ConvDictionary<T>& d, const Tensor4<T>& code, Tensor4<T>& signal);

// Materialized linear operator for a given input size: a [code_size,
// signal_size] matrix M with encode = M v and decode = M^T c. Test oracle;
// guarded to at most 1e7 entries.
template <class T>
DenseMatrix<T> toeplitz_expand(const ConvDictionary<T>& d, int in_h, int in_w);

// 1 / lambda_max(D^T D) by power iteration on c -> encode(decode(c)) for a
// single image of the given extent. Deterministic under seed; throws
// numeric_error with the last Rayleigh quotient on non-convergence.
template <class T>
T spectral_step_size(const ConvDictionary<T>& d, int in_h, int in_w,
                     uint64_t seed = 0x5eedULL, int max_iters = 500, double tol = 1e-6);

// Back-projection of layer `layer_index` (1-based) atoms through all lower
// layers into signal space: one image per atom, receptive-field sized.
template <class T>
Tensor4<T> effective_dictionary(const std::vector<ConvDictionary<T>>& dicts, int layer_index);

} // namespace hsc
