#pragma once

#include <string>
#include <vector>

#include "hsc/network.hpp"
#include "hsc/preprocess.hpp"

// Structured run configuration. One JSON file drives train/sweep; CLI flags
// override individual keys. The parsed config is echoed into the output
// directory for provenance.

namespace hsc {

struct RunConfig {
    NetworkSpec network;
    std::string train_path, test_path; // dataset caches (.hsd)
    std::vector<real> lambda1_list, lambda2_list;
    std::vector<uint64_t> sweep_seeds;
    std::string out_dir;
    std::string raw_json; // canonical echo
};

// Parses "a:b::s" range shorthand into the inclusive list {a, a+s, ..., b};
// plain numbers pass through.
std::vector<real> parse_range_list(const std::string& text);

RunConfig load_run_config(const std::string& path);

// Canonical serialization of the effective configuration.
std::string config_echo(const RunConfig& cfg);

} // namespace hsc
