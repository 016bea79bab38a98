#pragma once

#include <string>

#include "hsc/network.hpp"

// Binary checkpoint, magic "HSC1", little-endian. Layout:
//   u32 layer_count
//   per layer: u32 n_features, in_channels, k_h, k_w, stride; f32 lambda
//   per layer: f32 weights (row-major)
//   per layer: f32 gradient momentum (row-major)
//   u64 seed, u64 epoch
// Round-trips bit-exact. eta_c is derived state and recomputed on load when
// an input extent is supplied.

namespace hsc {

void save_checkpoint(const std::string& path, const NetworkState& state);

// Loads weights/momenta/metadata. If input extent is given (h, w > 0), eta_c
// is recomputed for it; otherwise eta_c is left empty until the caller knows
// the data dims.
NetworkState load_checkpoint(const std::string& path, int input_h = 0, int input_w = 0);

} // namespace hsc
