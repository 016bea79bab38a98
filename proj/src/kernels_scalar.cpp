#include "hsc/kernels.hpp"

#include <cmath>

// Reference kernels. Plain loops, no intrinsics; semantics ground truth for
// the SIMD variants and the backend for the double-precision path.

namespace hsc::kern {

template <class T>
void encode_image_ref(const conv_shape& s, const T* signal, const T* w, T* code) {
    const int st = s.stride;
    for (int f = 0; f < s.n_feat; ++f) {
        for (int oh = 0; oh < s.out_h; ++oh) {
            T* crow = code + (static_cast<size_t>(f) * s.out_h + oh) * s.out_w;
            for (int ow = 0; ow < s.out_w; ++ow) crow[ow] = T(0);
            for (int c = 0; c < s.in_c; ++c) {
                for (int kh = 0; kh < s.k_h; ++kh) {
                    const T* srow =
                        signal + (static_cast<size_t>(c) * s.in_h + (oh * st + kh)) * s.in_w;
                    const T* wrow =
                        w + ((static_cast<size_t>(f) * s.in_c + c) * s.k_h + kh) * s.k_w;
                    for (int ow = 0; ow < s.out_w; ++ow) {
                        T acc = crow[ow];
                        const T* sp = srow + ow * st;
                        for (int kw = 0; kw < s.k_w; ++kw) acc += sp[kw] * wrow[kw];
                        crow[ow] = acc;
                    }
                }
            }
        }
    }
}

template <class T>
void decode_image_ref(const conv_shape& s, const T* code, const T* w, T* signal) {
    const int st = s.stride;
    for (size_t i = 0; i < s.signal_size(); ++i) signal[i] = T(0);
    for (int f = 0; f < s.n_feat; ++f) {
        for (int oh = 0; oh < s.out_h; ++oh) {
            const T* crow = code + (static_cast<size_t>(f) * s.out_h + oh) * s.out_w;
            for (int ow = 0; ow < s.out_w; ++ow) {
                const T v = crow[ow];
                if (v == T(0)) continue; // sparse maps: most coefficients are zero
                for (int c = 0; c < s.in_c; ++c) {
                    for (int kh = 0; kh < s.k_h; ++kh) {
                        T* srow =
                            signal + (static_cast<size_t>(c) * s.in_h + (oh * st + kh)) * s.in_w +
                            ow * st;
                        const T* wrow =
                            w + ((static_cast<size_t>(f) * s.in_c + c) * s.k_h + kh) * s.k_w;
                        for (int kw = 0; kw < s.k_w; ++kw) srow[kw] += v * wrow[kw];
                    }
                }
            }
        }
    }
}

template <class T>
void grad_image_ref(const conv_shape& s, const T* code, const T* resid, T* grad) {
    const int st = s.stride;
    for (int f = 0; f < s.n_feat; ++f) {
        for (int oh = 0; oh < s.out_h; ++oh) {
            const T* crow = code + (static_cast<size_t>(f) * s.out_h + oh) * s.out_w;
            for (int ow = 0; ow < s.out_w; ++ow) {
                const T v = crow[ow];
                if (v == T(0)) continue;
                for (int c = 0; c < s.in_c; ++c) {
                    for (int kh = 0; kh < s.k_h; ++kh) {
                        const T* rrow =
                            resid + (static_cast<size_t>(c) * s.in_h + (oh * st + kh)) * s.in_w +
                            ow * st;
                        T* grow =
                            grad + ((static_cast<size_t>(f) * s.in_c + c) * s.k_h + kh) * s.k_w;
                        for (int kw = 0; kw < s.k_w; ++kw) grow[kw] += v * rrow[kw];
                    }
                }
            }
        }
    }
}

template <class T>
void fista_step_ref(const T* gm, const T* enc, const T* fb, T eta, T thresh, T* out, size_t n) {
    if (fb) {
        for (size_t i = 0; i < n; ++i) {
            const T v = gm[i] + eta * (enc[i] - fb[i]) - thresh;
            out[i] = v > T(0) ? v : T(0);
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            const T v = gm[i] + eta * enc[i] - thresh;
            out[i] = v > T(0) ? v : T(0);
        }
    }
}

template <class T>
void momentum_combine_ref(const T* cur, const T* prev, T coef, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const T v = cur[i] + coef * (cur[i] - prev[i]);
        out[i] = v > T(0) ? v : T(0);
    }
}

template <class T>
void soft_threshold_ref(const T* x, T alpha, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const T v = x[i] - alpha;
        out[i] = v > T(0) ? v : T(0);
    }
}

template <class T>
void sub_ref(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void axpy_ref(T a, const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void scale_ref(T a, T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= a;
}

template <class T>
double dot_ref(const T* x, const T* y, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return acc;
}

template <class T>
double sum_sq_ref(const T* x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        acc += v * v;
    }
    return acc;
}

template <class T>
double sum_abs_ref(const T* x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += std::fabs(static_cast<double>(x[i]));
    return acc;
}

template <class T>
double sq_diff_ref(const T* x, const T* y, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc;
}

#define HSC_INSTANTIATE_REF(T)                                                              \
    template void encode_image_ref<T>(const conv_shape&, const T*, const T*, T*);          \
    template void decode_image_ref<T>(const conv_shape&, const T*, const T*, T*);          \
    template void grad_image_ref<T>(const conv_shape&, const T*, const T*, T*);            \
    template void fista_step_ref<T>(const T*, const T*, const T*, T, T, T*, size_t);       \
    template void momentum_combine_ref<T>(const T*, const T*, T, T*, size_t);              \
    template void soft_threshold_ref<T>(const T*, T, T*, size_t);                          \
    template void sub_ref<T>(const T*, const T*, T*, size_t);                              \
    template void axpy_ref<T>(T, const T*, T*, size_t);                                    \
    template void scale_ref<T>(T, T*, size_t);                                             \
    template double dot_ref<T>(const T*, const T*, size_t);                                \
    template double sum_sq_ref<T>(const T*, size_t);                                       \
    template double sum_abs_ref<T>(const T*, size_t);                                      \
    template double sq_diff_ref<T>(const T*, const T*, size_t);

HSC_INSTANTIATE_REF(float)
HSC_INSTANTIATE_REF(double)

#undef HSC_INSTANTIATE_REF

} // namespace hsc::kern
