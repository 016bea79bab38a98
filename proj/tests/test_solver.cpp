#include <doctest.h>

#include <cstring>

#include "hsc/learner.hpp"
#include "hsc/preprocess.hpp"
#include "hsc/solver.hpp"
#include "test_util.hpp"

using namespace hsc;
using namespace hsc::test;

namespace {

ConvDictionary<double> identity_1x1d() {
    Tensor4<double> w(1, 1, 1, 1);
    w.at(0, 0, 0, 0) = 1.0;
    return ConvDictionary<double>(std::move(w), 1);
}

// 2 one-pixel atoms forming the 2x2 identity over a 2-channel signal.
ConvDictionary<double> identity_2x2d() {
    Tensor4<double> w(2, 2, 1, 1);
    w.at(0, 0, 0, 0) = 1.0;
    w.at(1, 1, 0, 0) = 1.0;
    return ConvDictionary<double>(std::move(w), 1);
}

// Independent scalar-loop evaluation of the two Lasso terms.
template <class T>
std::pair<double, double> naive_lasso(const ConvDictionary<T>& d, const Tensor4<T>& prev,
                                      const Tensor4<T>& gamma, double lambda) {
    const auto recon = decode(d, gamma, prev.dims[2], prev.dims[3]);
    double quad = 0;
    for (size_t i = 0; i < prev.size(); ++i) {
        const double e = static_cast<double>(prev.data[i]) - static_cast<double>(recon.data[i]);
        quad += e * e;
    }
    double l1 = 0;
    for (auto v : gamma.data) l1 += std::fabs(static_cast<double>(v));
    return {0.5 * quad, lambda * l1};
}

NetworkState single_layer_state(const ConvDict& d, real lambda, int in_h, int in_w,
                                uint64_t seed = 7) {
    NetworkState st;
    st.dicts.push_back(d);
    st.momenta.emplace_back(d.weights.dims[0], d.weights.dims[1], d.weights.dims[2],
                            d.weights.dims[3]);
    st.eta_c.push_back(spectral_step_size(d, in_h, in_w));
    st.lambdas.push_back(lambda);
    st.input_h = in_h;
    st.input_w = in_w;
    st.seed = seed;
    return st;
}

} // namespace

TEST_CASE("soft_threshold_nonneg basics") {
    Tensor4<double> v(1, 1, 1, 3);
    v.data = {1.2, -3.0, 0.4};
    const auto out = soft_threshold_nonneg(v, 0.5);
    CHECK(out.data[0] == doctest::Approx(0.7));
    CHECK(out.data[1] == 0.0);
    CHECK(out.data[2] == 0.0);

    // alpha = 0 degenerates to a rectifier, idempotent on nonnegative input.
    const auto relu = soft_threshold_nonneg(v, 0.0);
    CHECK(relu.data[0] == doctest::Approx(1.2));
    CHECK(relu.data[1] == 0.0);
    CHECK(relu.data[2] == doctest::Approx(0.4));
    const auto relu2 = soft_threshold_nonneg(relu, 0.0);
    for (size_t i = 0; i < relu.size(); ++i) CHECK(relu.data[i] == relu2.data[i]);

    CHECK_THROWS_AS(soft_threshold_nonneg(v, -0.1), param_error);
}

TEST_CASE("lasso_cost: identity dictionary cases and naive oracle") {
    const auto d = identity_2x2d();
    Tensor4<double> prev(1, 2, 1, 1);
    prev.at(0, 0, 0, 0) = 1.0;
    Tensor4<double> gamma(1, 2, 1, 1);

    auto t = lasso_cost(d, prev, gamma, 0.1);
    CHECK(t.quadratic == doctest::Approx(0.5));
    CHECK(t.l1 == doctest::Approx(0.0));

    gamma.at(0, 0, 0, 0) = 1.0;
    t = lasso_cost(d, prev, gamma, 0.1);
    CHECK(t.quadratic == doctest::Approx(0.0));
    CHECK(t.l1 == doctest::Approx(0.1));

    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto rd = random_dict<double>(rng, 3, 2, 3, 1);
        const auto rprev = random_tensor<double>(rng, 2, 2, 6, 6);
        const auto rg = random_nonneg_tensor<double>(rng, 2, 3, 4, 4);
        const auto got = lasso_cost(rd, rprev, rg, 0.37);
        const auto want = naive_lasso(rd, rprev, rg, 0.37);
        CHECK(rel_err(got.quadratic, want.first) <= 1e-10);
        CHECK(rel_err(got.l1, want.second) <= 1e-10);
        CHECK(got.total() == doctest::Approx(got.quadratic + got.l1));
    }
}

TEST_CASE("spc_cost: perfect prediction, top layer, naive oracle") {
    Rng rng(22);
    const auto d = random_dict<double>(rng, 3, 2, 3, 1);
    const auto prev = random_tensor<double>(rng, 1, 2, 6, 6);
    const auto gamma = random_nonneg_tensor<double>(rng, 1, 3, 4, 4);

    // Upper layer that predicts gamma exactly: identity atoms need matched
    // channel count, so use a 3-channel identity.
    Tensor4<double> wid(3, 3, 1, 1);
    for (int f = 0; f < 3; ++f) wid.at(f, f, 0, 0) = 1.0;
    const ConvDictionary<double> d_next(std::move(wid), 1);
    const Tensor4<double>& gamma_next = gamma; // 1x1 identity: code == prediction

    auto t = spc_cost(d, prev, gamma, 0.2, &d_next, &gamma_next);
    CHECK(t.topdown == doctest::Approx(0.0));
    const auto base = lasso_cost(d, prev, gamma, 0.2);
    CHECK(t.quadratic == doctest::Approx(base.quadratic));
    CHECK(t.l1 == doctest::Approx(base.l1));

    // Top layer: no upper dictionary, top-down term is zero.
    auto top = spc_cost<double>(d, prev, gamma, 0.2, nullptr, nullptr);
    CHECK(top.topdown == 0.0);

    // Random upper state vs. scalar oracle.
    const auto gnext = random_nonneg_tensor<double>(rng, 1, 3, 4, 4);
    t = spc_cost(d, prev, gamma, 0.2, &d_next, &gnext);
    const auto pred = decode(d_next, gnext, 4, 4);
    double td = 0;
    for (size_t i = 0; i < gamma.size(); ++i) {
        const double e = gamma.data[i] - pred.data[i];
        td += e * e;
    }
    CHECK(rel_err(t.topdown, 0.5 * td) <= 1e-10);
}

TEST_CASE("layer_update: single step arithmetic with and without feedback") {
    const auto d = identity_1x1d();
    Tensor4<double> gamma(1, 1, 1, 1);
    Tensor4<double> prev(1, 1, 1, 1);
    prev.at(0, 0, 0, 0) = 1.0;

    auto out = layer_update<double>(gamma, prev, d, 0.3, 1.0, nullptr);
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.7));

    Tensor4<double> fb(1, 1, 1, 1);
    fb.at(0, 0, 0, 0) = 0.2;
    out = layer_update<double>(gamma, prev, d, 0.3, 1.0, &fb);
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.5));
}

TEST_CASE("layer_update with all-zero feedback is bit-identical to none") {
    Rng rng(23);
    const auto d = random_dict<float>(rng, 4, 2, 3, 1);
    const auto prev = random_tensor<float>(rng, 2, 2, 7, 7);
    const auto gamma = random_nonneg_tensor<float>(rng, 2, 4, 5, 5);
    Tensor4f zeros(2, 4, 5, 5);
    const auto a = layer_update<float>(gamma, prev, d, 0.2f, 0.05f, nullptr);
    const auto b = layer_update<float>(gamma, prev, d, 0.2f, 0.05f, &zeros);
    CHECK(std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("smooth gradient of the quadratic term matches finite differences") {
    Rng rng(24);
    for (int trial = 0; trial < 25; ++trial) {
        const auto d = random_dict<double>(rng, 3, 1, 3, 1 + static_cast<int>(rng.below(2)));
        const int in_h = 3 + static_cast<int>(rng.below(4)) + d.stride;
        const int in_w = 3 + static_cast<int>(rng.below(4)) + d.stride;
        const auto prev = random_tensor<double>(rng, 1, 1, in_h, in_w);
        const auto sh = make_conv_shape(d, 1, in_h, in_w);
        auto gamma = random_nonneg_tensor<double>(rng, 1, 3, sh.out_h, sh.out_w);

        // Analytic: -D(prev - D^T gamma)
        const auto recon = decode(d, gamma, in_h, in_w);
        Tensor4<double> eps(1, 1, in_h, in_w);
        for (size_t i = 0; i < eps.size(); ++i) eps.data[i] = prev.data[i] - recon.data[i];
        auto g = encode(d, eps);
        for (auto& v : g.data) v = -v;

        auto quad = [&](const Tensor4<double>& x) {
            return naive_lasso(d, prev, x, 0.0).first;
        };
        const double h = 1e-6;
        for (int probe = 0; probe < 10; ++probe) {
            const size_t j = rng.below(gamma.size());
            auto plus = gamma, minus = gamma;
            plus.data[j] += h;
            minus.data[j] -= h;
            const double fd = (quad(plus) - quad(minus)) / (2 * h);
            CHECK(std::fabs(fd - g.data[j]) <= 1e-4 * std::max(1.0, std::fabs(fd)));
        }
    }
}

TEST_CASE("fista_alpha_next values and asymptotics") {
    CHECK(fista_alpha_next(1.0) == doctest::Approx(1.6180).epsilon(1e-4));
    CHECK(fista_alpha_next(1.6180) == doctest::Approx(2.1935).epsilon(1e-4));
    CHECK_THROWS_AS(fista_alpha_next(0.5), param_error);

    double a = 1.0;
    const int steps = 10000;
    for (int t = 0; t < steps; ++t) {
        const double next = fista_alpha_next(a);
        CHECK(next > a);
        a = next;
    }
    CHECK(a / steps == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("fista_momentum cases") {
    Rng rng(25);
    const auto g = random_nonneg_tensor<double>(rng, 1, 2, 3, 3);
    auto same = fista_momentum(g, g, 1.7, 2.2);
    for (size_t i = 0; i < g.size(); ++i) CHECK(same.data[i] == doctest::Approx(g.data[i]));

    // First iteration: coefficient (1-1)/alpha' = 0.
    const auto gp = random_nonneg_tensor<double>(rng, 1, 2, 3, 3);
    auto first = fista_momentum(g, gp, 1.0, fista_alpha_next(1.0));
    for (size_t i = 0; i < g.size(); ++i) CHECK(first.data[i] == doctest::Approx(g.data[i]));

    Tensor4<double> a(1, 1, 1, 1), b(1, 1, 1, 1);
    a.at(0, 0, 0, 0) = 1.0;
    b.at(0, 0, 0, 0) = 2.0;
    const auto m = fista_momentum(a, b, 2.0, 2.5);
    CHECK(m.at(0, 0, 0, 0) == doctest::Approx(0.6));

    Tensor4<double> wrong(1, 1, 2, 1);
    CHECK_THROWS_AS(fista_momentum(a, wrong, 2.0, 2.5), shape_error);
}

TEST_CASE("stability_reached semantics") {
    Rng rng(26);
    std::vector<Tensor4<double>> cur, prev;
    cur.push_back(random_nonneg_tensor<double>(rng, 1, 2, 4, 4));
    cur.push_back(random_nonneg_tensor<double>(rng, 1, 3, 2, 2));
    prev = cur;
    CHECK(stability_reached(cur, prev, 1e-4));

    // One layer moved by 10%.
    auto moved = prev;
    for (auto& v : moved[0].data) v *= 1.1;
    CHECK_FALSE(stability_reached(cur, moved, 1e-4));

    // Conjunction: layer changes (1e-5, 1e-3) against 5e-4 fails.
    auto small = cur;
    for (auto& v : small[0].data) v *= (1.0 + 1e-5);
    for (auto& v : small[1].data) v *= (1.0 + 1e-3);
    CHECK_FALSE(stability_reached(cur, small, 5e-4));
    CHECK(stability_reached(cur, small, 5e-2));

    // Zero-state guard: zero now counts as stable only if zero before.
    std::vector<Tensor4<double>> z1, z2;
    z1.emplace_back(1, 1, 2, 2);
    z2.emplace_back(1, 1, 2, 2);
    CHECK(stability_reached(z1, z2, 1e-4));
    z2[0].at(0, 0, 0, 0) = 0.5;
    CHECK_FALSE(stability_reached(z1, z2, 1e-4));
}

TEST_CASE("infer: L=1 modes are bit-identical; degenerate threshold stops at 1") {
    Rng rng(27);
    auto d = random_dict<float>(rng, 6, 1, 5, 1);
    Rng dead(1);
    normalize_atoms(d, dead);
    const auto st = single_layer_state(d, 0.1f, 12, 12);
    const auto x = random_tensor<float>(rng, 3, 1, 12, 12);

    const auto a = infer(st, x, {Mode::HiLa, 5e-4f, 500});
    const auto b = infer(st, x, {Mode::Spc, 5e-4f, 500});
    CHECK(a.iterations == b.iterations);
    CHECK(a.converged == b.converged);
    REQUIRE(a.gammas.size() == 1);
    CHECK(std::memcmp(a.gammas[0].ptr(), b.gammas[0].ptr(),
                      a.gammas[0].size() * sizeof(float)) == 0);
    CHECK(a.converged);
    for (float v : a.gammas[0].data) CHECK(v >= 0.0f);

    // Huge threshold: one sweep suffices in both modes.
    const auto one = infer(st, x, {Mode::Spc, 1e9f, 500});
    CHECK(one.iterations == 1);
}

TEST_CASE("infer: descent, fixed point, residuals, iteration cap") {
    Rng rng(28);
    auto d = random_dict<float>(rng, 8, 1, 5, 1);
    Rng dead(2);
    normalize_atoms(d, dead);
    const auto st = single_layer_state(d, 0.08f, 12, 12);

    // Data the dictionary can represent: a few active atoms plus mild noise.
    SyntheticSpec sspec;
    sspec.dicts.push_back(d);
    sspec.code_h = sspec.code_w = 8;
    sspec.active_atoms = 3;
    sspec.noise_std = 0.02f;
    sspec.n_images = 2;
    sspec.seed = 5;
    const Tensor4f x = generate_synthetic(sspec).data.images;
    const InferenceConfig cfg{Mode::HiLa, 1e-4f, 500};

    const auto res = infer(st, x, cfg);
    CHECK(res.converged);

    // Endpoint cost does not exceed the all-zero start.
    const auto at_end = lasso_cost(st.dicts[0], x, res.gammas[0], st.lambdas[0]);
    Tensor4f zero_gamma(res.gammas[0].dims[0], res.gammas[0].dims[1], res.gammas[0].dims[2],
                        res.gammas[0].dims[3]);
    const auto at_start = lasso_cost(st.dicts[0], x, zero_gamma, st.lambdas[0]);
    CHECK(at_end.total() <= at_start.total());

    // Re-applying the update from the converged state barely moves it.
    const auto moved = layer_update<float>(res.gammas[0], x, st.dicts[0], st.lambdas[0],
                                           st.eta_c[0], nullptr);
    const double move = std::sqrt(kern::sq_diff(moved.ptr(), res.gammas[0].ptr(), moved.size()));
    const double norm = std::sqrt(kern::sum_sq(res.gammas[0].ptr(), res.gammas[0].size()));
    CHECK(move <= cfg.t_stab * norm * 10);

    // Residual field matches gamma_prev - decode(gamma).
    const auto recon = decode(st.dicts[0], res.gammas[0], 12, 12);
    for (size_t i = 0; i < recon.size(); ++i)
        CHECK(res.residuals[0].data[i] ==
              doctest::Approx(x.data[i] - recon.data[i]).epsilon(1e-5));

    // Iteration cap on hard data: returns unconverged, never throws.
    Rng rng2(31);
    const auto noise = random_tensor<float>(rng2, 2, 1, 12, 12);
    const auto capped = infer(st, noise, {Mode::HiLa, 1e-9f, 3});
    CHECK_FALSE(capped.converged);
    CHECK(capped.iterations == 3);
}

TEST_CASE("infer: non-finite states raise numeric_error naming the layer") {
    Rng rng(29);
    auto d = random_dict<float>(rng, 4, 1, 3, 1);
    Rng dead(3);
    normalize_atoms(d, dead);
    auto st = single_layer_state(d, 0.0f, 8, 8);
    st.eta_c[0] = 1e18f; // absurd step size blows the state up
    const auto x = random_tensor<float>(rng, 1, 1, 8, 8);
    try {
        infer(st, x, {Mode::HiLa, 1e-6f, 50});
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}

TEST_CASE("infer: support recovery on noiseless single-atom data") {
    Rng rng(30);
    SyntheticSpec spec;
    auto d = random_dict<float>(rng, 8, 1, 5, 1);
    Rng dead(4);
    normalize_atoms(d, dead);
    spec.dicts.push_back(d);
    spec.code_h = spec.code_w = 8;
    spec.active_atoms = 1;
    spec.noise_std = 0;
    spec.n_images = 40;
    spec.seed = 99;
    const auto data = generate_synthetic(spec);

    int recovered = 0;
    for (int img = 0; img < spec.n_images; ++img) {
        Tensor4f x(1, 1, data.data.images.dims[2], data.data.images.dims[3]);
        std::copy(data.data.images.plane(img, 0), data.data.images.plane(img + 1, 0), x.ptr());
        const auto corr = encode(d, x);
        float peak = 0;
        for (float v : corr.data) peak = std::max(peak, v);
        auto st = single_layer_state(d, 0.05f * peak, x.dims[2], x.dims[3]);
        const auto res = infer(st, x, {Mode::HiLa, 1e-5f, 500});

        // Support = strictly positive coefficients.
        bool match = true;
        const float* truth = data.true_codes.plane(img, 0);
        const float* got = res.gammas[0].ptr();
        for (size_t i = 0; i < res.gammas[0].size(); ++i)
            if ((truth[i] > 0) != (got[i] > 0)) match = false;
        recovered += match;
    }
    CHECK(recovered >= 38); // 95% of 40
}
