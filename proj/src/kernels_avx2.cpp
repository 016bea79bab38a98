#include "kernels_internal.hpp"

// AVX2/FMA variants. Convolutions are vectorized across the output width for
// stride 1 (the hot layers); strided layers fall back to the scalar
// reference. This translation unit is the only one compiled with -mavx2.

#include <cmath>

#if defined(__x86_64__) || defined(__i386__)
#define HSC_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define HSC_HAVE_AVX2_BUILD 0
#endif

namespace hsc::kern::avx2 {

bool available() {
#if HSC_HAVE_AVX2_BUILD
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

#if HSC_HAVE_AVX2_BUILD

namespace {

alignas(32) const int32_t kMaskTable[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                            0,  0,  0,  0,  0,  0,  0,  0};

// Mask with the first m of 8 lanes active.
inline __m256i tail_mask(int m) {
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kMaskTable + 8 - m));
}

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

} // namespace

void encode_image(const conv_shape& s, const float* signal, const float* w, float* code) {
    if (s.stride != 1) {
        encode_image_ref(s, signal, w, code);
        return;
    }
    const int out_w = s.out_w, in_w = s.in_w, in_h = s.in_h;
    const size_t wf_stride = static_cast<size_t>(s.in_c) * s.k_h * s.k_w;
    // Feature pairs share the signal loads.
    int f = 0;
    for (; f + 1 < s.n_feat; f += 2) {
        const float* w0 = w + f * wf_stride;
        const float* w1 = w0 + wf_stride;
        for (int oh = 0; oh < s.out_h; ++oh) {
            float* crow0 = code + (static_cast<size_t>(f) * s.out_h + oh) * out_w;
            float* crow1 = crow0 + static_cast<size_t>(s.out_h) * out_w;
            for (int ow0 = 0; ow0 < out_w; ow0 += 8) {
                const int m = out_w - ow0 < 8 ? out_w - ow0 : 8;
                const __m256i msk = tail_mask(m);
                __m256 acc0 = _mm256_setzero_ps();
                __m256 acc1 = _mm256_setzero_ps();
                const float* wp0 = w0;
                const float* wp1 = w1;
                for (int c = 0; c < s.in_c; ++c) {
                    const float* splane = signal + (static_cast<size_t>(c) * in_h + oh) * in_w + ow0;
                    for (int kh = 0; kh < s.k_h; ++kh) {
                        const float* srow = splane + static_cast<size_t>(kh) * in_w;
                        for (int kw = 0; kw < s.k_w; ++kw) {
                            const __m256 sv = (m == 8) ? _mm256_loadu_ps(srow + kw)
                                                       : _mm256_maskload_ps(srow + kw, msk);
                            acc0 = _mm256_fmadd_ps(_mm256_set1_ps(wp0[kw]), sv, acc0);
                            acc1 = _mm256_fmadd_ps(_mm256_set1_ps(wp1[kw]), sv, acc1);
                        }
                        wp0 += s.k_w;
                        wp1 += s.k_w;
                    }
                }
                if (m == 8) {
                    _mm256_storeu_ps(crow0 + ow0, acc0);
                    _mm256_storeu_ps(crow1 + ow0, acc1);
                } else {
                    _mm256_maskstore_ps(crow0 + ow0, msk, acc0);
                    _mm256_maskstore_ps(crow1 + ow0, msk, acc1);
                }
            }
        }
    }
    for (; f < s.n_feat; ++f) {
        const float* w0 = w + f * wf_stride;
        for (int oh = 0; oh < s.out_h; ++oh) {
            float* crow = code + (static_cast<size_t>(f) * s.out_h + oh) * out_w;
            for (int ow0 = 0; ow0 < out_w; ow0 += 8) {
                const int m = out_w - ow0 < 8 ? out_w - ow0 : 8;
                const __m256i msk = tail_mask(m);
                __m256 acc = _mm256_setzero_ps();
                const float* wp = w0;
                for (int c = 0; c < s.in_c; ++c) {
                    const float* splane = signal + (static_cast<size_t>(c) * in_h + oh) * in_w + ow0;
                    for (int kh = 0; kh < s.k_h; ++kh) {
                        const float* srow = splane + static_cast<size_t>(kh) * in_w;
                        for (int kw = 0; kw < s.k_w; ++kw) {
                            const __m256 sv = (m == 8) ? _mm256_loadu_ps(srow + kw)
                                                       : _mm256_maskload_ps(srow + kw, msk);
                            acc = _mm256_fmadd_ps(_mm256_set1_ps(wp[kw]), sv, acc);
                        }
                        wp += s.k_w;
                    }
                }
                if (m == 8)
                    _mm256_storeu_ps(crow + ow0, acc);
                else
                    _mm256_maskstore_ps(crow + ow0, msk, acc);
            }
        }
    }
}

void decode_image(const conv_shape& s, const float* code, const float* w, float* signal) {
    if (s.stride != 1) {
        decode_image_ref(s, code, w, signal);
        return;
    }
    const size_t nsig = s.signal_size();
    float* p = signal;
    size_t i = 0;
    const __m256 z = _mm256_setzero_ps();
    for (; i + 8 <= nsig; i += 8) _mm256_storeu_ps(p + i, z);
    for (; i < nsig; ++i) p[i] = 0.0f;

    const int out_w = s.out_w, in_w = s.in_w, in_h = s.in_h;
    for (int f = 0; f < s.n_feat; ++f) {
        const float* wf = w + static_cast<size_t>(f) * s.in_c * s.k_h * s.k_w;
        for (int oh = 0; oh < s.out_h; ++oh) {
            const float* crow = code + (static_cast<size_t>(f) * s.out_h + oh) * out_w;
            for (int ow0 = 0; ow0 < out_w; ow0 += 8) {
                const int m = out_w - ow0 < 8 ? out_w - ow0 : 8;
                const __m256i msk = tail_mask(m);
                const __m256 cv = (m == 8) ? _mm256_loadu_ps(crow + ow0)
                                           : _mm256_maskload_ps(crow + ow0, msk);
                if (_mm256_movemask_ps(_mm256_cmp_ps(cv, z, _CMP_NEQ_UQ)) == 0)
                    continue; // whole block inactive; sparse maps make this common
                // kw outermost so consecutive read-modify-writes hit
                // different signal rows (no overlapping-store chain).
                for (int kw = 0; kw < s.k_w; ++kw) {
                    for (int c = 0; c < s.in_c; ++c) {
                        float* sbase = signal + (static_cast<size_t>(c) * in_h + oh) * in_w + ow0 + kw;
                        const float* wp = wf + (static_cast<size_t>(c) * s.k_h) * s.k_w + kw;
                        for (int kh = 0; kh < s.k_h; ++kh) {
                            float* srow = sbase + static_cast<size_t>(kh) * in_w;
                            const __m256 wv = _mm256_set1_ps(wp[static_cast<size_t>(kh) * s.k_w]);
                            if (m == 8) {
                                _mm256_storeu_ps(srow,
                                                 _mm256_fmadd_ps(cv, wv, _mm256_loadu_ps(srow)));
                            } else {
                                _mm256_maskstore_ps(
                                    srow, msk,
                                    _mm256_fmadd_ps(cv, wv, _mm256_maskload_ps(srow, msk)));
                            }
                        }
                    }
                }
            }
        }
    }
}

void grad_image(const conv_shape& s, const float* code, const float* resid, float* grad) {
    if (s.stride != 1 || s.k_w > 16) {
        grad_image_ref(s, code, resid, grad);
        return;
    }
    const int out_w = s.out_w, in_w = s.in_w, in_h = s.in_h;
    for (int f = 0; f < s.n_feat; ++f) {
        const float* cplane = code + static_cast<size_t>(f) * s.out_h * out_w;
        for (int c = 0; c < s.in_c; ++c) {
            const float* rplane = resid + static_cast<size_t>(c) * in_h * in_w;
            float* gbase = grad + (static_cast<size_t>(f) * s.in_c + c) * s.k_h * s.k_w;
            for (int kh = 0; kh < s.k_h; ++kh) {
                __m256 acc[16];
                for (int kw = 0; kw < s.k_w; ++kw) acc[kw] = _mm256_setzero_ps();
                for (int oh = 0; oh < s.out_h; ++oh) {
                    const float* crow = cplane + static_cast<size_t>(oh) * out_w;
                    const float* rrow = rplane + static_cast<size_t>(oh + kh) * in_w;
                    for (int ow0 = 0; ow0 < out_w; ow0 += 8) {
                        const int m = out_w - ow0 < 8 ? out_w - ow0 : 8;
                        const __m256i msk = tail_mask(m);
                        const __m256 cv = (m == 8) ? _mm256_loadu_ps(crow + ow0)
                                                   : _mm256_maskload_ps(crow + ow0, msk);
                        for (int kw = 0; kw < s.k_w; ++kw) {
                            const __m256 rv = (m == 8)
                                                  ? _mm256_loadu_ps(rrow + ow0 + kw)
                                                  : _mm256_maskload_ps(rrow + ow0 + kw, msk);
                            acc[kw] = _mm256_fmadd_ps(cv, rv, acc[kw]);
                        }
                    }
                }
                for (int kw = 0; kw < s.k_w; ++kw) gbase[kh * s.k_w + kw] += hsum(acc[kw]);
            }
        }
    }
}

void fista_step(const float* gm, const float* enc, const float* fb, float eta, float thresh,
                float* out, size_t n) {
    const __m256 ev = _mm256_set1_ps(eta);
    const __m256 tv = _mm256_set1_ps(thresh);
    const __m256 z = _mm256_setzero_ps();
    size_t i = 0;
    if (fb) {
        for (; i + 8 <= n; i += 8) {
            const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(enc + i), _mm256_loadu_ps(fb + i));
            const __m256 v =
                _mm256_sub_ps(_mm256_fmadd_ps(ev, d, _mm256_loadu_ps(gm + i)), tv);
            _mm256_storeu_ps(out + i, _mm256_max_ps(v, z));
        }
        for (; i < n; ++i) {
            const float v = std::fma(eta, enc[i] - fb[i], gm[i]) - thresh;
            out[i] = v > 0.0f ? v : 0.0f;
        }
    } else {
        for (; i + 8 <= n; i += 8) {
            const __m256 v = _mm256_sub_ps(
                _mm256_fmadd_ps(ev, _mm256_loadu_ps(enc + i), _mm256_loadu_ps(gm + i)), tv);
            _mm256_storeu_ps(out + i, _mm256_max_ps(v, z));
        }
        for (; i < n; ++i) {
            const float v = std::fma(eta, enc[i], gm[i]) - thresh;
            out[i] = v > 0.0f ? v : 0.0f;
        }
    }
}

void momentum_combine(const float* cur, const float* prev, float coef, float* out, size_t n) {
    const __m256 cf = _mm256_set1_ps(coef);
    const __m256 z = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 cv = _mm256_loadu_ps(cur + i);
        const __m256 d = _mm256_sub_ps(cv, _mm256_loadu_ps(prev + i));
        _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_fmadd_ps(cf, d, cv), z));
    }
    for (; i < n; ++i) {
        const float v = std::fma(coef, cur[i] - prev[i], cur[i]);
        out[i] = v > 0.0f ? v : 0.0f;
    }
}

void soft_threshold(const float* x, float alpha, float* out, size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    const __m256 z = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), av), z));
    for (; i < n; ++i) {
        const float v = x[i] - alpha;
        out[i] = v > 0.0f ? v : 0.0f;
    }
}

void sub(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void axpy(float a, const float* x, float* y, size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i,
                         _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale(float a, float* x, size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

double dot(const float* x, const float* y, size_t n) {
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 yv = _mm256_loadu_ps(y + i);
        a0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                             _mm256_cvtps_pd(_mm256_castps256_ps128(yv)), a0);
        a1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                             _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)), a1);
    }
    double acc = hsum(_mm256_add_pd(a0, a1));
    for (; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return acc;
}

double sum_sq(const float* x, size_t n) {
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(xv));
        const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1));
        a0 = _mm256_fmadd_pd(lo, lo, a0);
        a1 = _mm256_fmadd_pd(hi, hi, a1);
    }
    double acc = hsum(_mm256_add_pd(a0, a1));
    for (; i < n; ++i) {
        const double v = x[i];
        acc += v * v;
    }
    return acc;
}

double sum_abs(const float* x, size_t n) {
    const __m256d sign_clear = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        a0 = _mm256_add_pd(a0, _mm256_and_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                                             sign_clear));
        a1 = _mm256_add_pd(a1, _mm256_and_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                                             sign_clear));
    }
    double acc = hsum(_mm256_add_pd(a0, a1));
    for (; i < n; ++i) acc += std::fabs(static_cast<double>(x[i]));
    return acc;
}

double sq_diff(const float* x, const float* y, size_t n) {
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 yv = _mm256_loadu_ps(y + i);
        const __m256d dlo = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                                          _mm256_cvtps_pd(_mm256_castps256_ps128(yv)));
        const __m256d dhi = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                                          _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)));
        a0 = _mm256_fmadd_pd(dlo, dlo, a0);
        a1 = _mm256_fmadd_pd(dhi, dhi, a1);
    }
    double acc = hsum(_mm256_add_pd(a0, a1));
    for (; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc;
}

#else // !HSC_HAVE_AVX2_BUILD: forward everything to the scalar reference

void encode_image(const conv_shape& s, const float* signal, const float* w, float* code) {
    encode_image_ref(s, signal, w, code);
}
void decode_image(const conv_shape& s, const float* code, const float* w, float* signal) {
    decode_image_ref(s, code, w, signal);
}
void grad_image(const conv_shape& s, const float* code, const float* resid, float* grad) {
    grad_image_ref(s, code, resid, grad);
}
void fista_step(const float* gm, const float* enc, const float* fb, float eta, float thresh,
                float* out, size_t n) {
    fista_step_ref(gm, enc, fb, eta, thresh, out, n);
}
void momentum_combine(const float* cur, const float* prev, float coef, float* out, size_t n) {
    momentum_combine_ref(cur, prev, coef, out, n);
}
void soft_threshold(const float* x, float alpha, float* out, size_t n) {
    soft_threshold_ref(x, alpha, out, n);
}
void sub(const float* a, const float* b, float* out, size_t n) { sub_ref(a, b, out, n); }
void axpy(float a, const float* x, float* y, size_t n) { axpy_ref(a, x, y, n); }
void scale(float a, float* x, size_t n) { scale_ref(a, x, n); }
double dot(const float* x, const float* y, size_t n) { return dot_ref(x, y, n); }
double sum_sq(const float* x, size_t n) { return sum_sq_ref(x, n); }
double sum_abs(const float* x, size_t n) { return sum_abs_ref(x, n); }
double sq_diff(const float* x, const float* y, size_t n) { return sq_diff_ref(x, y, n); }

#endif

} // namespace hsc::kern::avx2
