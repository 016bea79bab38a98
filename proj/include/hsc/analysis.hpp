#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsc/image_io.hpp"
#include "hsc/learner.hpp"
#include "hsc/network.hpp"
#include "hsc/solver.hpp"

// Everything behind the study's figures: per-layer cost decomposition,
// lambda-grid sweeps with both inference flavors, iteration counts, learning
// curves, activation statistics, and receptive-field mosaics.

namespace hsc {

struct CostReport {
    std::vector<CostTerms> per_layer; // means per image
    double total = 0;                 // sum over layers of quadratic + l1
    double mean_iterations = 0;
    int unconverged_batches = 0;
    // metadata
    std::vector<real> lambdas;
    Mode mode = Mode::Spc;
    uint64_t seed = 0;
    uint64_t epoch = 0;
};

CostReport cost_report(const NetworkState& state, const Tensor4f& images, Mode mode,
                       real t_stab, int max_iters, int batch_size);

struct MedianMad {
    double median = 0;
    double mad = 0;
};

// Median and median absolute deviation; even-length median is the midpoint
// of the central pair.
MedianMad median_mad(std::vector<double> samples);

struct ActivationHistogram {
    std::vector<double> probabilities; // descending
    std::vector<int> atom_indices;     // original atom ids, same order
};

// Per layer, per atom: fraction of images in which the atom fires at least
// one strictly positive coefficient.
std::vector<ActivationHistogram> activation_probability(const NetworkState& state,
                                                        const Tensor4f& images,
                                                        const InferenceConfig& cfg,
                                                        int batch_size);

// ---- sweeps ----

struct SweepConfig {
    NetworkSpec base; // per-layer lambdas overridden cell by cell
    std::vector<real> lambda1, lambda2;
    std::vector<uint64_t> seeds;
    std::string out_dir; // cell artifacts + resume files; empty = in-memory only
    bool resume = false;
    int image_channels = 1;
};

struct SweepCell {
    real lambda1 = 0, lambda2 = 0;
    uint64_t seed = 0;
    Mode mode = Mode::Spc;
    bool valid = false;
    std::string error;
    std::vector<double> epoch_total;            // test total per epoch
    std::vector<std::vector<CostTerms>> epoch_layers; // [epoch][layer]
    std::vector<double> epoch_iterations;       // mean per epoch
    double final_total = 0;
    double final_iterations = 0;
};

struct SweepGrid {
    std::vector<real> lambda1, lambda2;
    std::vector<uint64_t> seeds;
    std::vector<SweepCell> cells; // (l1, l2, seed, mode) row-major, mode fastest

    const SweepCell& cell(int i1, int i2, int is, Mode m) const;
    // Median over seeds of the final test total for one mode.
    double median_total(int i1, int i2, Mode m) const;
    double median_iterations(int i1, int i2, Mode m) const;
    // (HiLa - Spc) / HiLa of the median totals.
    double relative_difference(int i1, int i2) const;
};

// Trains and evaluates both modes for every (lambda1, lambda2, seed) cell.
// Cell failures are recorded and skipped, never fatal. Cells run in parallel
// up to the configured worker count; out_dir enables resume by fingerprint.
SweepGrid sweep(const SweepConfig& cfg, const Tensor4f& train_images,
                const Tensor4f& test_images);

// Long-format rows (mode, seed, lambda1, lambda2, layer, quadratic, l1,
// iterations, epoch), 9-significant-digit floats.
void export_sweep_csv(const SweepGrid& grid, const std::string& path);
void export_sweep_grid_json(const SweepGrid& grid, const std::string& path);

// ---- mosaics ----

// Tiles atom images (per-atom min-max normalized) into a grid, ordered by
// `order` (e.g. descending activation); optionally drops the first entry.
Image atom_mosaic(const Tensor4f& atoms, const std::vector<int>& order, bool exclude_top,
                  int pad = 1);

} // namespace hsc
