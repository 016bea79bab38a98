#include "hsc/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "hsc/errors.hpp"
#include "kernels_internal.hpp"

namespace hsc::kern {

namespace {

struct kernel_table {
    void (*encode_image)(const conv_shape&, const float*, const float*, float*);
    void (*decode_image)(const conv_shape&, const float*, const float*, float*);
    void (*grad_image)(const conv_shape&, const float*, const float*, float*);
    void (*fista_step)(const float*, const float*, const float*, float, float, float*, size_t);
    void (*momentum_combine)(const float*, const float*, float, float*, size_t);
    void (*soft_threshold)(const float*, float, float*, size_t);
    void (*sub)(const float*, const float*, float*, size_t);
    void (*axpy)(float, const float*, float*, size_t);
    void (*scale)(float, float*, size_t);
    double (*dot)(const float*, const float*, size_t);
    double (*sum_sq)(const float*, size_t);
    double (*sum_abs)(const float*, size_t);
    double (*sq_diff)(const float*, const float*, size_t);
};

const kernel_table kScalarTable = {
    &encode_image_ref<float>, &decode_image_ref<float>, &grad_image_ref<float>,
    &fista_step_ref<float>,   &momentum_combine_ref<float>, &soft_threshold_ref<float>,
    &sub_ref<float>,          &axpy_ref<float>,         &scale_ref<float>,
    &dot_ref<float>,          &sum_sq_ref<float>,       &sum_abs_ref<float>,
    &sq_diff_ref<float>,
};

const kernel_table kAvx2Table = {
    &avx2::encode_image, &avx2::decode_image, &avx2::grad_image,
    &avx2::fista_step,   &avx2::momentum_combine, &avx2::soft_threshold,
    &avx2::sub,          &avx2::axpy,         &avx2::scale,
    &avx2::dot,          &avx2::sum_sq,       &avx2::sum_abs,
    &avx2::sq_diff,
};

std::atomic<const kernel_table*> g_table{nullptr};
std::atomic<isa_kind> g_isa{isa_kind::scalar};

isa_kind pick_default() {
    if (const char* env = std::getenv("HSC_ISA")) {
        if (std::strcmp(env, "scalar") == 0) return isa_kind::scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2::available()) return isa_kind::avx2;
        if (std::strcmp(env, "avx2") == 0)
            throw param_error("HSC_ISA=avx2 requested but CPU lacks AVX2/FMA");
    }
    return avx2::available() ? isa_kind::avx2 : isa_kind::scalar;
}

const kernel_table& table() {
    const kernel_table* t = g_table.load(std::memory_order_acquire);
    if (!t) {
        const isa_kind k = pick_default();
        t = (k == isa_kind::avx2) ? &kAvx2Table : &kScalarTable;
        g_isa.store(k, std::memory_order_relaxed);
        g_table.store(t, std::memory_order_release);
    }
    return *t;
}

} // namespace

const char* isa_name(isa_kind k) { return k == isa_kind::avx2 ? "avx2" : "scalar"; }

bool isa_supported(isa_kind k) { return k == isa_kind::scalar || avx2::available(); }

isa_kind active_isa() {
    table();
    return g_isa.load(std::memory_order_relaxed);
}

void force_isa(isa_kind k) {
    if (!isa_supported(k))
        throw param_error(std::string("ISA not supported on this CPU: ") + isa_name(k));
    g_isa.store(k, std::memory_order_relaxed);
    g_table.store(k == isa_kind::avx2 ? &kAvx2Table : &kScalarTable, std::memory_order_release);
}

void encode_image(const conv_shape& s, const float* signal, const float* w, float* code) {
    table().encode_image(s, signal, w, code);
}
void decode_image(const conv_shape& s, const float* code, const float* w, float* signal) {
    table().decode_image(s, code, w, signal);
}
void grad_image(const conv_shape& s, const float* code, const float* resid, float* grad) {
    table().grad_image(s, code, resid, grad);
}
void fista_step(const float* gm, const float* enc, const float* fb, float eta, float thresh,
                float* out, size_t n) {
    table().fista_step(gm, enc, fb, eta, thresh, out, n);
}
void momentum_combine(const float* cur, const float* prev, float coef, float* out, size_t n) {
    table().momentum_combine(cur, prev, coef, out, n);
}
void soft_threshold(const float* x, float alpha, float* out, size_t n) {
    table().soft_threshold(x, alpha, out, n);
}
void sub(const float* a, const float* b, float* out, size_t n) { table().sub(a, b, out, n); }
void axpy(float a, const float* x, float* y, size_t n) { table().axpy(a, x, y, n); }
void scale(float a, float* x, size_t n) { table().scale(a, x, n); }
double dot(const float* x, const float* y, size_t n) { return table().dot(x, y, n); }
double sum_sq(const float* x, size_t n) { return table().sum_sq(x, n); }
double sum_abs(const float* x, size_t n) { return table().sum_abs(x, n); }
double sq_diff(const float* x, const float* y, size_t n) { return table().sq_diff(x, y, n); }

} // namespace hsc::kern
