#pragma once

#include <stdexcept>
#include <string>

namespace hsc {

// Shape/axis mismatches between tensors, dictionaries and datasets.
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad parameter values (negative lambda, even LCN window, ...).
struct param_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed files: IDX, checkpoint, dataset cache, config.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf or non-convergence detected during numerics.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid run configuration (failed NetworkSpec validation, missing keys).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace hsc
