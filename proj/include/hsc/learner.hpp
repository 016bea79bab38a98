#pragma once

#include <string>
#include <vector>

#include "hsc/network.hpp"
#include "hsc/rng.hpp"
#include "hsc/solver.hpp"
#include "hsc/tensor.hpp"

// Dictionary learning: loss gradient w.r.t. the kernels, SGD with momentum,
// atom normalization, and the epoch loop alternating inference and learning.

namespace hsc {

struct TrainLogEntry {
    int epoch = 0;
    double total_cost = 0; // mean over test images of sum_i (quadratic_i + l1_i)
    std::vector<CostTerms> per_layer; // means over test images
    double mean_iterations = 0;
    double wall_seconds = 0; // reported separately from deterministic outputs
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    std::vector<std::string> incidents; // skipped updates, recoveries
};

// Batch-averaged gradient of the quadratic term 1/2||gamma_prev - D^T gamma||^2
// with respect to the kernel weights. The top-down term of the feedback loss
// does not depend on the weights, so both modes share this gradient.
template <class T>
Tensor4<T> dict_gradient(const ConvDictionary<T>& d, const Tensor4<T>& gamma_prev,
                         const Tensor4<T>& gamma);

// Every atom rescaled to unit l2 norm. Atoms already within 1e-6 of unit norm
// are left untouched; zero atoms are redrawn from the generator and normalized.
void normalize_atoms(ConvDict& d, Rng& dead_atom_rng);

enum class StepStatus { ok, skipped_nonfinite };

// Classical momentum: v <- 0.9 v + g; W <- W - eta v; then atom normalization
// and an eta_c refresh. A non-finite gradient skips the update and reports it.
StepStatus sgd_momentum_step(NetworkState& state, int layer, const Tensor4f& gradient,
                             real eta_learn, Rng& dead_atom_rng, real momentum = 0.9f);

// Fresh state: standard-normal kernels (seeded), unit atoms, step sizes for
// the given input extent.
NetworkState init_state(const NetworkSpec& spec, int image_channels, int input_h, int input_w,
                        uint64_t seed);

// Mean per-layer cost terms and iteration count of inference over a dataset
// tensor, evaluated in batches with frozen dictionaries.
struct EvalResult {
    std::vector<CostTerms> per_layer; // means per image
    double total_cost = 0;
    double mean_iterations = 0;       // mean over batches of the joint count
    int unconverged_batches = 0;
};
EvalResult evaluate_cost(const NetworkState& state, const Tensor4f& images,
                         const InferenceConfig& cfg, int batch_size);

// Alternate inference and learning over the training set; per-epoch cost on
// the held-out test set (inference only, no updates). NaN in an epoch cost
// writes `snapshot_path` (when set) with the last good state and raises
// numeric_error.
struct TrainResult {
    NetworkState state;
    TrainLog log;
};
TrainResult train(const NetworkSpec& spec, const Tensor4f& train_images,
                  const Tensor4f& test_images, const std::string& snapshot_path = "");

} // namespace hsc
