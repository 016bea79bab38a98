#pragma once

#include <optional>
#include <vector>

#include "hsc/network.hpp"
#include "hsc/tensor.hpp"

// Proximal inference over the layer stack: nonnegative soft-thresholding,
// per-layer cost terms, the accelerated layer update, and the joint
// multi-layer loop with the relative-change stopping rule.

namespace hsc {

struct InferenceConfig {
    Mode mode = Mode::Spc;
    real t_stab = 1e-4f;
    int max_iters = 500;
};

template <class T>
struct InferenceResult {
    std::vector<Tensor4<T>> gammas;    // one sparse map per layer, >= 0
    std::vector<Tensor4<T>> residuals; // eps_i = gamma_{i-1} - D_i^T gamma_i
    int iterations = 0;
    bool converged = false;
};

// Elementwise max(v - alpha, 0); alpha = 0 degenerates to a plain rectifier.
template <class T>
Tensor4<T> soft_threshold_nonneg(const Tensor4<T>& v, T alpha);

struct CostTerms {
    double quadratic = 0; // 1/2 ||gamma_prev - D^T gamma||^2, summed over batch
    double l1 = 0;        // lambda * ||gamma||_1, summed over batch
    double total() const { return quadratic + l1; }
};

struct SpcCostTerms {
    double quadratic = 0;
    double l1 = 0;
    double topdown = 0; // 1/2 ||gamma_i - D_next^T gamma_next||^2
    double total() const { return quadratic + l1 + topdown; }
};

template <class T>
CostTerms lasso_cost(const ConvDictionary<T>& d, const Tensor4<T>& gamma_prev,
                     const Tensor4<T>& gamma, T lambda);

// Adds the top-down prediction error; pass null d_next/gamma_next at the top
// layer, where the term is zero.
template <class T>
SpcCostTerms spc_cost(const ConvDictionary<T>& d, const Tensor4<T>& gamma_prev,
                      const Tensor4<T>& gamma, T lambda, const ConvDictionary<T>* d_next,
                      const Tensor4<T>* gamma_next);

// One proximal step evaluated at `point`:
//   T_{eta*lambda}( point + eta * D (gamma_prev - D^T point) - eta * feedback )
// No feedback pointer and an all-zero feedback tensor produce bit-identical
// results.
template <class T>
Tensor4<T> layer_update(const Tensor4<T>& point, const Tensor4<T>& gamma_prev,
                        const ConvDictionary<T>& d, T lambda, T eta_c,
                        const Tensor4<T>* feedback = nullptr);

// Momentum strength sequence: alpha' = (1 + sqrt(1 + 4 alpha^2)) / 2, alpha >= 1.
double fista_alpha_next(double alpha);

// T_0( gamma_t + ((alpha_t - 1)/alpha_next) (gamma_t - gamma_prev_t) )
template <class T>
Tensor4<T> fista_momentum(const Tensor4<T>& gamma_t, const Tensor4<T>& gamma_prev_t,
                          double alpha_t, double alpha_next);

// True iff every layer's relative change is below t_stab. A layer with zero
// current norm counts as stable only if its previous state was zero too.
template <class T>
bool stability_reached(const std::vector<Tensor4<T>>& gammas_t,
                       const std::vector<Tensor4<T>>& gammas_prev, double t_stab);

// Joint inference over all layers for a batch x: sparse maps start at zero,
// layers sweep in ascending order each iteration reading the live momentum
// states, and the loop stops when all layers are stable or max_iters is hit
// (converged=false, no throw). NaN anywhere raises numeric_error naming the
// layer and iteration.
InferenceResult<real> infer(const NetworkState& state, const Tensor4f& x,
                            const InferenceConfig& cfg);

} // namespace hsc
