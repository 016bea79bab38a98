#include "hsc/solver.hpp"

#include <cmath>
#include <string>

#include "hsc/parallel.hpp"

namespace hsc {

const char* mode_name(Mode m) { return m == Mode::HiLa ? "hila" : "spc"; }

Mode mode_from_name(const std::string& s) {
    if (s == "hila" || s == "hi-la" || s == "HiLa") return Mode::HiLa;
    if (s == "spc" || s == "2l-spc" || s == "Spc") return Mode::Spc;
    throw param_error("unknown mode '" + s + "' (expected hila or spc)");
}

void NetworkSpec::validate(int image_channels) {
    if (layers.empty()) throw config_error("network has no layers");
    if (t_stab <= 0) throw config_error("t_stab must be > 0");
    if (max_iters < 1) throw config_error("max_iters must be >= 1");
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    int chan = image_channels;
    for (size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        const std::string where = "layer " + std::to_string(i + 1);
        if (l.n_features < 1) throw config_error(where + ": n_features must be >= 1");
        if (l.k_h < 1 || l.k_w < 1) throw config_error(where + ": kernel dims must be >= 1");
        if (l.stride < 1) throw config_error(where + ": stride must be >= 1");
        if (l.lambda < 0) throw config_error(where + ": lambda must be >= 0");
        if (l.eta_learn < 0) throw config_error(where + ": eta_learn must be >= 0");
        if (l.in_channels >= 0 && l.in_channels != chan)
            throw config_error(where + ": in_channels " + std::to_string(l.in_channels) +
                               " does not chain from previous layer (" + std::to_string(chan) +
                               ")");
        l.in_channels = chan;
        chan = l.n_features;
    }
}

template <class T>
Tensor4<T> soft_threshold_nonneg(const Tensor4<T>& v, T alpha) {
    if (alpha < T(0)) throw param_error("soft_threshold_nonneg: alpha must be >= 0");
    Tensor4<T> out(v.dims[0], v.dims[1], v.dims[2], v.dims[3]);
    if constexpr (std::is_same_v<T, float>)
        kern::soft_threshold(v.ptr(), alpha, out.ptr(), v.size());
    else
        kern::soft_threshold_ref(v.ptr(), alpha, out.ptr(), v.size());
    return out;
}

namespace {

template <class T>
double tensor_sum_sq(const Tensor4<T>& t) {
    if constexpr (std::is_same_v<T, float>)
        return kern::sum_sq(t.ptr(), t.size());
    else
        return kern::sum_sq_ref(t.ptr(), t.size());
}

template <class T>
double tensor_sum_abs(const Tensor4<T>& t) {
    if constexpr (std::is_same_v<T, float>)
        return kern::sum_abs(t.ptr(), t.size());
    else
        return kern::sum_abs_ref(t.ptr(), t.size());
}

template <class T>
double tensor_sq_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
    if constexpr (std::is_same_v<T, float>)
        return kern::sq_diff(a.ptr(), b.ptr(), a.size());
    else
        return kern::sq_diff_ref(a.ptr(), b.ptr(), a.size());
}

template <class T>
void tensor_sub(const Tensor4<T>& a, const Tensor4<T>& b, Tensor4<T>& out) {
    if constexpr (std::is_same_v<T, float>)
        kern::sub(a.ptr(), b.ptr(), out.ptr(), a.size());
    else
        kern::sub_ref(a.ptr(), b.ptr(), out.ptr(), a.size());
}

} // namespace

template <class T>
CostTerms lasso_cost(const ConvDictionary<T>& d, const Tensor4<T>& gamma_prev,
                     const Tensor4<T>& gamma, T lambda) {
    Tensor4<T> recon(gamma_prev.dims[0], gamma_prev.dims[1], gamma_prev.dims[2],
                     gamma_prev.dims[3]);
    decode_into(d, gamma, recon);
    CostTerms t;
    t.quadratic = 0.5 * tensor_sq_diff(gamma_prev, recon);
    t.l1 = static_cast<double>(lambda) * tensor_sum_abs(gamma);
    return t;
}

template <class T>
SpcCostTerms spc_cost(const ConvDictionary<T>& d, const Tensor4<T>& gamma_prev,
                      const Tensor4<T>& gamma, T lambda, const ConvDictionary<T>* d_next,
                      const Tensor4<T>* gamma_next) {
    const CostTerms base = lasso_cost(d, gamma_prev, gamma, lambda);
    SpcCostTerms t;
    t.quadratic = base.quadratic;
    t.l1 = base.l1;
    if (d_next && gamma_next) {
        Tensor4<T> pred(gamma.dims[0], gamma.dims[1], gamma.dims[2], gamma.dims[3]);
        decode_into(*d_next, *gamma_next, pred);
        t.topdown = 0.5 * tensor_sq_diff(gamma, pred);
    }
    return t;
}

template <class T>
Tensor4<T> layer_update(const Tensor4<T>& point, const Tensor4<T>& gamma_prev,
                        const ConvDictionary<T>& d, T lambda, T eta_c,
                        const Tensor4<T>* feedback) {
    if (eta_c <= T(0)) throw param_error("layer_update: eta_c must be > 0");
    if (feedback && !feedback->same_shape(point))
        throw shape_error("layer_update: feedback shape " + feedback->shape_str() +
                          " != state shape " + point.shape_str());
    Tensor4<T> recon(gamma_prev.dims[0], gamma_prev.dims[1], gamma_prev.dims[2],
                     gamma_prev.dims[3]);
    decode_into(d, point, recon);
    Tensor4<T> eps(recon.dims[0], recon.dims[1], recon.dims[2], recon.dims[3]);
    tensor_sub(gamma_prev, recon, eps);
    Tensor4<T> enc;
    encode_into(d, eps, enc);
    if (!enc.same_shape(point))
        throw shape_error("layer_update: encoded gradient shape " + enc.shape_str() +
                          " != state shape " + point.shape_str());
    Tensor4<T> out(point.dims[0], point.dims[1], point.dims[2], point.dims[3]);
    if constexpr (std::is_same_v<T, float>)
        kern::fista_step(point.ptr(), enc.ptr(), feedback ? feedback->ptr() : nullptr, eta_c,
                         eta_c * lambda, out.ptr(), out.size());
    else
        kern::fista_step_ref(point.ptr(), enc.ptr(), feedback ? feedback->ptr() : nullptr,
                             eta_c, eta_c * lambda, out.ptr(), out.size());
    return out;
}

double fista_alpha_next(double alpha) {
    if (alpha < 1.0) throw param_error("fista_alpha_next: alpha must be >= 1");
    return (1.0 + std::sqrt(1.0 + 4.0 * alpha * alpha)) / 2.0;
}

template <class T>
Tensor4<T> fista_momentum(const Tensor4<T>& gamma_t, const Tensor4<T>& gamma_prev_t,
                          double alpha_t, double alpha_next) {
    if (!gamma_t.same_shape(gamma_prev_t))
        throw shape_error("fista_momentum: shape mismatch " + gamma_t.shape_str() + " vs " +
                          gamma_prev_t.shape_str());
    const T coef = static_cast<T>((alpha_t - 1.0) / alpha_next);
    Tensor4<T> out(gamma_t.dims[0], gamma_t.dims[1], gamma_t.dims[2], gamma_t.dims[3]);
    if constexpr (std::is_same_v<T, float>)
        kern::momentum_combine(gamma_t.ptr(), gamma_prev_t.ptr(), coef, out.ptr(), out.size());
    else
        kern::momentum_combine_ref(gamma_t.ptr(), gamma_prev_t.ptr(), coef, out.ptr(),
                                   out.size());
    return out;
}

template <class T>
bool stability_reached(const std::vector<Tensor4<T>>& gammas_t,
                       const std::vector<Tensor4<T>>& gammas_prev, double t_stab) {
    if (gammas_t.size() != gammas_prev.size())
        throw shape_error("stability_reached: layer list lengths differ");
    for (size_t i = 0; i < gammas_t.size(); ++i) {
        const double nn = tensor_sum_sq(gammas_t[i]);
        const double dd = tensor_sq_diff(gammas_t[i], gammas_prev[i]);
        if (nn == 0.0) {
            if (dd != 0.0) return false;
        } else if (std::sqrt(dd) >= t_stab * std::sqrt(nn)) {
            return false;
        }
    }
    return true;
}

InferenceResult<real> infer(const NetworkState& state, const Tensor4f& x,
                            const InferenceConfig& cfg) {
    const int L = state.layer_count();
    if (L == 0) throw config_error("infer: empty network state");
    if (static_cast<int>(state.eta_c.size()) != L || static_cast<int>(state.lambdas.size()) != L)
        throw config_error("infer: state missing per-layer step sizes or penalties");
    const int n = x.dims[0];

    // Per-layer geometry chained from the input.
    std::vector<kern::conv_shape> shapes(L);
    {
        int c = x.dims[1], h = x.dims[2], w = x.dims[3];
        for (int i = 0; i < L; ++i) {
            shapes[i] = make_conv_shape(state.dicts[i], c, h, w);
            c = shapes[i].n_feat;
            h = shapes[i].out_h;
            w = shapes[i].out_w;
        }
    }

    auto code_tensor = [&](int i) {
        return Tensor4f(n, shapes[i].n_feat, shapes[i].out_h, shapes[i].out_w);
    };
    auto signal_tensor = [&](int i) {
        return Tensor4f(n, shapes[i].in_c, shapes[i].in_h, shapes[i].in_w);
    };

    std::vector<Tensor4f> cur(L), nxt(L), gm(L), dec(L), eps(L), enc(L), fb(L);
    for (int i = 0; i < L; ++i) {
        cur[i] = code_tensor(i);  // gamma^{t-1}
        nxt[i] = code_tensor(i);  // gamma^t
        gm[i] = code_tensor(i);   // momentum state
        enc[i] = code_tensor(i);
        dec[i] = signal_tensor(i);
        eps[i] = signal_tensor(i);
        if (cfg.mode == Mode::Spc && i + 1 < L) fb[i] = code_tensor(i);
    }

    InferenceResult<real> res;
    res.gammas.resize(L);
    res.residuals.resize(L);

    double alpha = 1.0;
    int t = 0;
    bool stable = false;
    while (!stable && t < cfg.max_iters) {
        ++t;
        const double alpha_next = fista_alpha_next(alpha);
        const float coef = static_cast<float>((alpha - 1.0) / alpha_next);

        // Predictions from the start-of-iteration momentum states.
        for (int i = 0; i < L; ++i) {
            const auto& sh = shapes[i];
            parallel_for(n, [&](int img) {
                kern::decode_image(sh, gm[i].plane(img, 0), state.dicts[i].weights.ptr(),
                                   dec[i].plane(img, 0));
            });
        }

        stable = true;
        for (int i = 0; i < L; ++i) {
            const auto& sh = shapes[i];
            const Tensor4f& below = (i == 0) ? x : gm[i - 1]; // live lower momentum
            kern::sub(below.ptr(), dec[i].ptr(), eps[i].ptr(), eps[i].size());
            parallel_for(n, [&](int img) {
                kern::encode_image(sh, eps[i].plane(img, 0), state.dicts[i].weights.ptr(),
                                   enc[i].plane(img, 0));
            });
            const float* feedback = nullptr;
            if (cfg.mode == Mode::Spc && i + 1 < L) {
                kern::sub(gm[i].ptr(), dec[i + 1].ptr(), fb[i].ptr(), fb[i].size());
                feedback = fb[i].ptr();
            }
            kern::fista_step(gm[i].ptr(), enc[i].ptr(), feedback, state.eta_c[i],
                             state.eta_c[i] * state.lambdas[i], nxt[i].ptr(), nxt[i].size());

            const double nn = kern::sum_sq(nxt[i].ptr(), nxt[i].size());
            const double dd = kern::sq_diff(nxt[i].ptr(), cur[i].ptr(), nxt[i].size());
            if (!std::isfinite(nn) || !std::isfinite(dd))
                throw numeric_error("infer: non-finite state at layer " + std::to_string(i + 1) +
                                    ", iteration " + std::to_string(t));
            if (nn == 0.0 ? (dd != 0.0) : (std::sqrt(dd) >= cfg.t_stab * std::sqrt(nn)))
                stable = false;

            kern::momentum_combine(nxt[i].ptr(), cur[i].ptr(), coef, gm[i].ptr(), gm[i].size());
            std::swap(cur[i], nxt[i]);
        }
        alpha = alpha_next;
    }

    res.iterations = t;
    res.converged = stable;
    for (int i = 0; i < L; ++i) {
        const auto& sh = shapes[i];
        parallel_for(n, [&](int img) {
            kern::decode_image(sh, cur[i].plane(img, 0), state.dicts[i].weights.ptr(),
                               dec[i].plane(img, 0));
        });
        const Tensor4f& below = (i == 0) ? x : cur[i - 1];
        kern::sub(below.ptr(), dec[i].ptr(), eps[i].ptr(), eps[i].size());
        res.residuals[i] = std::move(eps[i]);
    }
    for (int i = 0; i < L; ++i) res.gammas[i] = std::move(cur[i]);
    return res;
}

#define HSC_INSTANTIATE_SOLVER(T)                                                             \
    template Tensor4<T> soft_threshold_nonneg<T>(const Tensor4<T>&, T);                       \
    template CostTerms lasso_cost<T>(const ConvDictionary<T>&, const Tensor4<T>&,             \
                                     const Tensor4<T>&, T);                                   \
    template SpcCostTerms spc_cost<T>(const ConvDictionary<T>&, const Tensor4<T>&,            \
                                      const Tensor4<T>&, T, const ConvDictionary<T>*,         \
                                      const Tensor4<T>*);                                     \
    template Tensor4<T> layer_update<T>(const Tensor4<T>&, const Tensor4<T>&,                 \
                                        const ConvDictionary<T>&, T, T, const Tensor4<T>*);   \
    template Tensor4<T> fista_momentum<T>(const Tensor4<T>&, const Tensor4<T>&, double,       \
                                          double);                                            \
    template bool stability_reached<T>(const std::vector<Tensor4<T>>&,                        \
                                       const std::vector<Tensor4<T>>&, double);

HSC_INSTANTIATE_SOLVER(float)
HSC_INSTANTIATE_SOLVER(double)

#undef HSC_INSTANTIATE_SOLVER

} // namespace hsc
