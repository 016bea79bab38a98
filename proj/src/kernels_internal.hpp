#pragma once

#include "hsc/kernels.hpp"

// Variant entry points wired into the dispatch table. Not public API.

namespace hsc::kern::avx2 {

bool available();

void encode_image(const conv_shape& s, const float* signal, const float* w, float* code);
void decode_image(const conv_shape& s, const float* code, const float* w, float* signal);
void grad_image(const conv_shape& s, const float* code, const float* resid, float* grad);
void fista_step(const float* gm, const float* enc, const float* fb, float eta, float thresh,
                float* out, size_t n);
void momentum_combine(const float* cur, const float* prev, float coef, float* out, size_t n);
void soft_threshold(const float* x, float alpha, float* out, size_t n);
void sub(const float* a, const float* b, float* out, size_t n);
void axpy(float a, const float* x, float* y, size_t n);
void scale(float a, float* x, size_t n);
double dot(const float* x, const float* y, size_t n);
double sum_sq(const float* x, size_t n);
double sum_abs(const float* x, size_t n);
double sq_diff(const float* x, const float* y, size_t n);

} // namespace hsc::kern::avx2
