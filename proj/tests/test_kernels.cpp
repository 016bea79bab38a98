#include <doctest.h>

#include <vector>

#include "hsc/kernels.hpp"
#include "hsc/rng.hpp"
#include "test_util.hpp"

// The AVX2 variants must agree with the scalar reference on every operation,
// across vector lengths that cover full blocks, tails and sub-block sizes.

using namespace hsc;
using namespace hsc::test;

namespace {

std::vector<float> random_vec(Rng& rng, size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

bool have_avx2() { return kern::isa_supported(kern::isa_kind::avx2); }

const std::vector<size_t> kLengths = {0, 1, 3, 7, 8, 9, 15, 16, 17, 31, 64, 100, 257};

} // namespace

TEST_CASE("elementwise kernels match the scalar reference") {
    if (!have_avx2()) return;
    Rng rng(11);
    for (size_t n : kLengths) {
        const auto a = random_vec(rng, n);
        const auto b = random_vec(rng, n);
        std::vector<float> ref(n), got(n);

        kern::soft_threshold_ref(a.data(), 0.25f, ref.data(), n);
        kern::force_isa(kern::isa_kind::avx2);
        kern::soft_threshold(a.data(), 0.25f, got.data(), n);
        for (size_t i = 0; i < n; ++i) CHECK(ref[i] == got[i]);

        kern::sub_ref(a.data(), b.data(), ref.data(), n);
        kern::sub(a.data(), b.data(), got.data(), n);
        for (size_t i = 0; i < n; ++i) CHECK(ref[i] == got[i]);

        kern::momentum_combine_ref(a.data(), b.data(), 0.75f, ref.data(), n);
        kern::momentum_combine(a.data(), b.data(), 0.75f, got.data(), n);
        for (size_t i = 0; i < n; ++i)
            CHECK(std::fabs(ref[i] - got[i]) <= 1e-6f * std::max(1.0f, std::fabs(ref[i])));

        kern::fista_step_ref(a.data(), b.data(), static_cast<const float*>(nullptr), 0.3f, 0.05f,
                             ref.data(), n);
        kern::fista_step(a.data(), b.data(), nullptr, 0.3f, 0.05f, got.data(), n);
        for (size_t i = 0; i < n; ++i)
            CHECK(std::fabs(ref[i] - got[i]) <= 1e-6f * std::max(1.0f, std::fabs(ref[i])));

        const auto fb = random_vec(rng, n);
        kern::fista_step_ref(a.data(), b.data(), fb.data(), 0.3f, 0.05f, ref.data(), n);
        kern::fista_step(a.data(), b.data(), fb.data(), 0.3f, 0.05f, got.data(), n);
        for (size_t i = 0; i < n; ++i)
            CHECK(std::fabs(ref[i] - got[i]) <= 1e-6f * std::max(1.0f, std::fabs(ref[i])));

        auto y_ref = random_vec(rng, n);
        auto y_got = y_ref;
        kern::axpy_ref(0.7f, a.data(), y_ref.data(), n);
        kern::axpy(0.7f, a.data(), y_got.data(), n);
        for (size_t i = 0; i < n; ++i)
            CHECK(std::fabs(y_ref[i] - y_got[i]) <= 1e-6f * std::max(1.0f, std::fabs(y_ref[i])));

        auto s_ref = a;
        auto s_got = a;
        kern::scale_ref(1.3f, s_ref.data(), n);
        kern::scale(1.3f, s_got.data(), n);
        for (size_t i = 0; i < n; ++i) CHECK(s_ref[i] == s_got[i]);
    }
    kern::force_isa(kern::isa_kind::scalar);
}

TEST_CASE("reductions accumulate identically across variants") {
    if (!have_avx2()) return;
    Rng rng(12);
    for (size_t n : kLengths) {
        const auto a = random_vec(rng, n);
        const auto b = random_vec(rng, n);
        const double tol = 1e-12 * std::max(1.0, static_cast<double>(n));
        kern::force_isa(kern::isa_kind::avx2);
        CHECK(std::fabs(kern::dot(a.data(), b.data(), n) - kern::dot_ref(a.data(), b.data(), n)) <=
              tol);
        CHECK(std::fabs(kern::sum_sq(a.data(), n) - kern::sum_sq_ref(a.data(), n)) <= tol);
        CHECK(std::fabs(kern::sum_abs(a.data(), n) - kern::sum_abs_ref(a.data(), n)) <= tol);
        CHECK(std::fabs(kern::sq_diff(a.data(), b.data(), n) -
                        kern::sq_diff_ref(a.data(), b.data(), n)) <= tol);
    }
    kern::force_isa(kern::isa_kind::scalar);
}

TEST_CASE("convolution kernels match the scalar reference") {
    if (!have_avx2()) return;
    Rng rng(13);
    struct Case {
        int in_c, in_h, in_w, n_feat, k, stride;
    };
    // Coverage: one-vector rows, tails, odd feature counts, strides.
    const std::vector<Case> cases = {
        {1, 8, 8, 4, 3, 1},  {3, 12, 12, 8, 5, 1}, {2, 9, 11, 5, 3, 1}, {1, 28, 28, 32, 5, 2},
        {4, 10, 10, 7, 5, 1}, {2, 17, 13, 3, 4, 1}, {3, 12, 12, 4, 5, 3},
    };
    for (const auto& c : cases) {
        kern::conv_shape s{};
        s.in_c = c.in_c;
        s.in_h = c.in_h;
        s.in_w = c.in_w;
        s.n_feat = c.n_feat;
        s.k_h = s.k_w = c.k;
        s.stride = c.stride;
        s.out_h = (c.in_h - c.k) / c.stride + 1;
        s.out_w = (c.in_w - c.k) / c.stride + 1;

        const auto signal = random_vec(rng, s.signal_size());
        const auto w = random_vec(rng, s.weight_size());
        auto code = random_vec(rng, s.code_size(), 0.0, 1.0);
        // Sprinkle exact zeros so the sparse skip paths run.
        for (size_t i = 0; i < code.size(); i += 3) code[i] = 0.0f;

        std::vector<float> ref(s.code_size()), got(s.code_size());
        kern::encode_image_ref(s, signal.data(), w.data(), ref.data());
        kern::force_isa(kern::isa_kind::avx2);
        kern::encode_image(s, signal.data(), w.data(), got.data());
        double scale = 1.0;
        for (float v : ref) scale = std::max(scale, static_cast<double>(std::fabs(v)));
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(std::fabs(ref[i] - got[i]) <= 1e-5 * scale);

        std::vector<float> sig_ref(s.signal_size()), sig_got(s.signal_size());
        kern::decode_image_ref(s, code.data(), w.data(), sig_ref.data());
        kern::decode_image(s, code.data(), w.data(), sig_got.data());
        scale = 1.0;
        for (float v : sig_ref) scale = std::max(scale, static_cast<double>(std::fabs(v)));
        for (size_t i = 0; i < sig_ref.size(); ++i)
            CHECK(std::fabs(sig_ref[i] - sig_got[i]) <= 1e-5 * scale);

        std::vector<float> g_ref(s.weight_size(), 0.5f), g_got(s.weight_size(), 0.5f);
        kern::grad_image_ref(s, code.data(), signal.data(), g_ref.data());
        kern::grad_image(s, code.data(), signal.data(), g_got.data());
        scale = 1.0;
        for (float v : g_ref) scale = std::max(scale, static_cast<double>(std::fabs(v)));
        for (size_t i = 0; i < g_ref.size(); ++i)
            CHECK(std::fabs(g_ref[i] - g_got[i]) <= 1e-4 * scale);
    }
    kern::force_isa(kern::isa_kind::scalar);
}

TEST_CASE("isa dispatch is overridable and reports support") {
    CHECK(kern::isa_supported(kern::isa_kind::scalar));
    kern::force_isa(kern::isa_kind::scalar);
    CHECK(kern::active_isa() == kern::isa_kind::scalar);
    if (have_avx2()) {
        kern::force_isa(kern::isa_kind::avx2);
        CHECK(kern::active_isa() == kern::isa_kind::avx2);
        kern::force_isa(kern::isa_kind::scalar);
    }
}
