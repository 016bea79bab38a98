#include "hsc/config.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace hsc {

std::vector<real> parse_range_list(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        try {
            return {static_cast<real>(std::stod(text))};
        } catch (const std::exception&) {
            throw config_error("cannot parse number '" + text + "'");
        }
    }
    const auto sep = text.find("::");
    if (sep == std::string::npos || sep < colon)
        throw config_error("range '" + text + "' must look like start:stop::step");
    try {
        const double start = std::stod(text.substr(0, colon));
        const double stop = std::stod(text.substr(colon + 1, sep - colon - 1));
        const double step = std::stod(text.substr(sep + 2));
        if (step <= 0) throw config_error("range '" + text + "' needs step > 0");
        if (stop < start) throw config_error("range '" + text + "' is empty (stop < start)");
        std::vector<real> out;
        for (int k = 0;; ++k) {
            const double v = start + k * step;
            if (v > stop + step * 1e-9) break;
            out.push_back(static_cast<real>(v));
        }
        return out;
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        throw config_error("cannot parse range '" + text + "'");
    }
}

namespace {

std::vector<real> parse_lambda_axis(const json& node, const char* name) {
    std::vector<real> out;
    auto add = [&](const json& item) {
        if (item.is_number()) {
            out.push_back(item.get<real>());
        } else if (item.is_string()) {
            for (real v : parse_range_list(item.get<std::string>())) out.push_back(v);
        } else {
            throw config_error(std::string(name) + ": entries must be numbers or range strings");
        }
    };
    if (node.is_array())
        for (const auto& item : node) add(item);
    else
        add(node);
    if (out.empty()) throw config_error(std::string(name) + ": empty list");
    return out;
}

} // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error(path + ": cannot open config");
    const json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw config_error(path + ": invalid JSON");

    RunConfig cfg;
    if (!j.contains("network") || !j["network"].contains("layers"))
        throw config_error(path + ": missing network.layers");
    const json& net = j["network"];
    for (const auto& lj : net["layers"]) {
        LayerSpec l;
        if (!lj.contains("features")) throw config_error(path + ": layer missing 'features'");
        l.n_features = lj["features"].get<int>();
        if (lj.contains("kernel")) {
            if (lj["kernel"].is_array()) {
                l.k_h = lj["kernel"][0].get<int>();
                l.k_w = lj["kernel"].size() > 1 ? lj["kernel"][1].get<int>() : l.k_h;
            } else {
                l.k_h = l.k_w = lj["kernel"].get<int>();
            }
        } else {
            throw config_error(path + ": layer missing 'kernel'");
        }
        l.stride = lj.value("stride", 1);
        l.lambda = lj.value("lambda", 0.0f);
        l.eta_learn = lj.value("eta_learn", 0.0f);
        cfg.network.layers.push_back(l);
    }
    cfg.network.t_stab = net.value("t_stab", 1e-4f);
    cfg.network.max_iters = net.value("max_iters", 500);

    if (j.contains("training")) {
        const json& tr = j["training"];
        cfg.network.epochs = tr.value("epochs", 1);
        cfg.network.batch_size = tr.value("batch_size", 32);
        cfg.network.seed = tr.value("seed", 0ULL);
        if (tr.contains("mode")) cfg.network.mode = mode_from_name(tr["mode"].get<std::string>());
    }

    if (j.contains("data")) {
        cfg.train_path = j["data"].value("train", "");
        cfg.test_path = j["data"].value("test", "");
    }

    if (j.contains("sweep")) {
        const json& sw = j["sweep"];
        if (sw.contains("lambda1")) cfg.lambda1_list = parse_lambda_axis(sw["lambda1"], "lambda1");
        if (sw.contains("lambda2")) cfg.lambda2_list = parse_lambda_axis(sw["lambda2"], "lambda2");
        if (sw.contains("seeds"))
            for (const auto& s : sw["seeds"]) cfg.sweep_seeds.push_back(s.get<uint64_t>());
    }

    if (j.contains("output")) cfg.out_dir = j["output"].value("dir", "");
    cfg.raw_json = j.dump(2);
    return cfg;
}

std::string config_echo(const RunConfig& cfg) {
    json j;
    json layers = json::array();
    for (const auto& l : cfg.network.layers)
        layers.push_back({{"features", l.n_features},
                          {"kernel", {l.k_h, l.k_w}},
                          {"stride", l.stride},
                          {"lambda", l.lambda},
                          {"eta_learn", l.eta_learn},
                          {"in_channels", l.in_channels}});
    j["network"] = {{"layers", layers},
                    {"t_stab", cfg.network.t_stab},
                    {"max_iters", cfg.network.max_iters}};
    j["training"] = {{"epochs", cfg.network.epochs},
                     {"batch_size", cfg.network.batch_size},
                     {"mode", mode_name(cfg.network.mode)},
                     {"seed", cfg.network.seed}};
    j["data"] = {{"train", cfg.train_path}, {"test", cfg.test_path}};
    if (!cfg.lambda1_list.empty() || !cfg.lambda2_list.empty()) {
        json seeds = json::array();
        for (uint64_t s : cfg.sweep_seeds) seeds.push_back(s);
        j["sweep"] = {{"lambda1", cfg.lambda1_list},
                      {"lambda2", cfg.lambda2_list},
                      {"seeds", seeds}};
    }
    j["output"] = {{"dir", cfg.out_dir}};
    return j.dump(2);
}

} // namespace hsc
