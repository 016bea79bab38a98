#pragma once

#include <cstddef>
#include <cstdint>
#include <type_traits>

// Arithmetic inner loops. Every operation has a scalar reference
// implementation (templated, shared by the float and double paths) and may
// have an AVX2 variant for float. The active variant is chosen at runtime
// from CPU capabilities; HSC_ISA=scalar|avx2 overrides, and tests pin it via
// force_isa to cross-check the two paths against each other.

namespace hsc::kern {

enum class isa_kind { scalar, avx2 };

const char* isa_name(isa_kind k);
bool isa_supported(isa_kind k);
isa_kind active_isa();
void force_isa(isa_kind k); // throws param_error if unsupported on this CPU

// Geometry of a single-image convolution between a signal plane stack
// [in_c, in_h, in_w] and a code stack [n_feat, out_h, out_w].
// Valid mode: out = floor((in - k) / stride) + 1.
struct conv_shape {
    int in_c, in_h, in_w;
    int n_feat, k_h, k_w, stride;
    int out_h, out_w;

    size_t signal_size() const {
        return static_cast<size_t>(in_c) * in_h * in_w;
    }
    size_t code_size() const {
        return static_cast<size_t>(n_feat) * out_h * out_w;
    }
    size_t weight_size() const {
        return static_cast<size_t>(n_feat) * in_c * k_h * k_w;
    }
};

// ---- dispatched float path ----

// code[f,oh,ow] = sum_{c,kh,kw} signal[c, oh*s+kh, ow*s+kw] * w[f,c,kh,kw]
void encode_image(const conv_shape& s, const float* signal, const float* w, float* code);

// signal[c,ih,iw] = sum over contributing (f,oh,ow,kh,kw); adjoint of encode.
void decode_image(const conv_shape& s, const float* code, const float* w, float* signal);

// grad[f,c,kh,kw] += sum_{oh,ow} code[f,oh,ow] * resid[c, oh*s+kh, ow*s+kw]
void grad_image(const conv_shape& s, const float* code, const float* resid, float* grad);

// out = max(gm + eta*(enc - fb) - thresh, 0); fb may be null (no feedback term).
void fista_step(const float* gm, const float* enc, const float* fb, float eta,
                float thresh, float* out, size_t n);

// out = max(cur + coef*(cur - prev), 0)
void momentum_combine(const float* cur, const float* prev, float coef, float* out, size_t n);

// out = max(x - alpha, 0)
void soft_threshold(const float* x, float alpha, float* out, size_t n);

// out = a - b
void sub(const float* a, const float* b, float* out, size_t n);

// y += a*x
void axpy(float a, const float* x, float* y, size_t n);

// x *= a
void scale(float a, float* x, size_t n);

// Reductions accumulate in double in every variant.
double dot(const float* x, const float* y, size_t n);
double sum_sq(const float* x, size_t n);
double sum_abs(const float* x, size_t n);
double sq_diff(const float* x, const float* y, size_t n);

// ---- scalar reference path (any precision; the double instantiation backs
//      the oracle-grade tests and the spectral/cost double paths) ----

template <class T>
void encode_image_ref(const conv_shape& s, const T* signal, const T* w, T* code);
template <class T>
void decode_image_ref(const conv_shape& s, const T* code, const T* w, T* signal);
template <class T>
void grad_image_ref(const conv_shape& s, const T* code, const T* resid, T* grad);
template <class T>
void fista_step_ref(const T* gm, const T* enc, const T* fb, T eta, T thresh, T* out, size_t n);
template <class T>
void momentum_combine_ref(const T* cur, const T* prev, T coef, T* out, size_t n);
template <class T>
void soft_threshold_ref(const T* x, T alpha, T* out, size_t n);
template <class T>
void sub_ref(const T* a, const T* b, T* out, size_t n);
template <class T>
void axpy_ref(T a, const T* x, T* y, size_t n);
template <class T>
void scale_ref(T a, T* x, size_t n);
template <class T>
double dot_ref(const T* x, const T* y, size_t n);
template <class T>
double sum_sq_ref(const T* x, size_t n);
template <class T>
double sum_abs_ref(const T* x, size_t n);
template <class T>
double sq_diff_ref(const T* x, const T* y, size_t n);

// Precision-generic front door: float routes through the dispatch table,
// double through the scalar reference.
template <class T>
void encode_image_t(const conv_shape& s, const T* signal, const T* w, T* code) {
    if constexpr (std::is_same_v<T, float>)
        encode_image(s, signal, w, code);
    else
        encode_image_ref(s, signal, w, code);
}
template <class T>
void decode_image_t(const conv_shape& s, const T* code, const T* w, T* signal) {
    if constexpr (std::is_same_v<T, float>)
        decode_image(s, code, w, signal);
    else
        decode_image_ref(s, code, w, signal);
}
template <class T>
void grad_image_t(const conv_shape& s, const T* code, const T* resid, T* grad) {
    if constexpr (std::is_same_v<T, float>)
        grad_image(s, code, resid, grad);
    else
        grad_image_ref(s, code, resid, grad);
}

} // namespace hsc::kern
