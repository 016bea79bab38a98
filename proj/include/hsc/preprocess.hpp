#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hsc/conv.hpp"
#include "hsc/tensor.hpp"

// Dataset ingestion (IDX, image folders, synthetic) and the preprocessing
// chain: local contrast normalization then spectral whitening. Every dataset
// carries provenance with a parameter fingerprint; each preprocessing stage
// refuses to run twice.

namespace hsc {

struct Provenance {
    std::string source;      // path or generator descriptor
    std::string params_json; // canonical record of applied parameters
    uint64_t fingerprint = 0;
    bool lcn_applied = false;
    bool whitened = false;
    std::vector<std::string> warnings;
};

struct Dataset {
    Tensor4f images; // [N, c, h, w]
    std::string split;
    std::vector<int> labels; // parsed, unused; empty when absent
    Provenance provenance;

    int count() const { return images.dims[0]; }
};

uint64_t fnv1a64(const std::string& s);

// ---- local contrast normalization ----

struct LcnParams {
    int window = 9;        // odd
    float epsilon = 1e-3f; // divisive floor
    float sigma = 0;       // 0 -> window/4
};

// Gaussian-weighted local mean removal and std division, window shared
// across channels, kernel mass renormalized at borders.
Tensor4f lcn(const Tensor4f& images, int window, float epsilon, float sigma = 0);
void apply_lcn(Dataset& ds, const LcnParams& p);

// ---- whitening ----

struct WhitenParams {
    std::string method = "fourier"; // fourier | zca
    float f0_factor = 0.8f;         // f0 = factor * Nyquist
    float zca_eps = 1e-2f;          // eigenvalue shrinkage for zca
};

// Reusable operator: the Fourier filter is data-independent; ZCA is fitted
// on the training images only.
struct WhiteningOp {
    WhitenParams params;
    int channels = 0, height = 0, width = 0;
    std::vector<float> zca; // [d x d] row-major when method == zca
};

WhiteningOp fit_whitening(const Dataset& train, const WhitenParams& p);
Tensor4f whiten_apply(const WhiteningOp& op, const Tensor4f& images);
void apply_whitening(Dataset& ds, const WhiteningOp& op);

// ---- IDX ----

// Reads an IDX image file (magic 0x00000803), optionally paired with a label
// file (magic 0x00000801). Pixels scaled to [0, 1]. Errors carry the byte
// offset of the problem.
Dataset load_idx(const std::string& images_path, const std::string& labels_path = "");

// Writers for the same container (8-bit payload); loaders round-trip
// bit-exact through these.
void write_idx_images(const std::string& path, const Tensor4f& images);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

// Bilinear resample of every image; guarded against already-preprocessed
// data (resizing after LCN/whitening would invalidate the statistics).
void resize_dataset(Dataset& ds, int target_h, int target_w);

// ---- image folders ----

struct ImageDirParams {
    int target_h = 0, target_w = 0; // 0 keeps native dims (all must agree)
    int channels = 1;
    double split_ratio = 0.8; // fraction of images in the train split
    uint64_t seed = 0;
};

// Decodes every readable raster file in deterministic alphabetical order,
// resizes, converts channels, and splits train/test with a seeded
// permutation. Unreadable files are skipped with a provenance warning.
std::pair<Dataset, Dataset> load_image_dir(const std::string& dir, const ImageDirParams& p);

// ---- synthetic generator ----

struct SyntheticSpec {
    std::vector<ConvDict> dicts; // ground truth, top layer last
    int code_h = 1, code_w = 1;  // top-layer code extent
    int active_atoms = 1;        // strictly positive coefficients per image
    float noise_std = 0;
    int n_images = 0;
    uint64_t seed = 0;
};

struct SyntheticData {
    Dataset data;
    Tensor4f true_codes;               // top-layer sparse codes
    std::vector<Tensor4f> layer_codes; // per-layer states, bottom to top
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// ---- dataset cache ----

// "HSD1" container: dims, float32 payload, labels, provenance JSON.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

} // namespace hsc
