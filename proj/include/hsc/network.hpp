#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsc/conv.hpp"
#include "hsc/tensor.hpp"

namespace hsc {

// Inference flavor: independent Lasso layers, or the same loop with the
// inter-layer feedback term switched on.
enum class Mode { HiLa, Spc };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct LayerSpec {
    int n_features = 0;
    int k_h = 0, k_w = 0;
    int stride = 1;
    real lambda = 0;
    real eta_learn = 0;
    int in_channels = -1; // derived from the previous layer / image channels
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    real t_stab = 1e-4f;
    int max_iters = 500;
    int epochs = 1;
    int batch_size = 32;
    Mode mode = Mode::Spc;
    uint64_t seed = 0;

    // Fills the in_channels chain from the image channel count and checks
    // every invariant; throws config_error on violation.
    void validate(int image_channels);
};

// Learned quantities plus cached inference step sizes.
struct NetworkState {
    std::vector<ConvDict> dicts;
    std::vector<Tensor4f> momenta; // gradient momentum, same shape as weights
    std::vector<real> eta_c;       // 1/lambda_max per layer, for input_h x input_w
    std::vector<real> lambdas;
    int input_h = 0, input_w = 0;
    uint64_t seed = 0;
    uint64_t epoch = 0;

    int layer_count() const { return static_cast<int>(dicts.size()); }
};

} // namespace hsc
