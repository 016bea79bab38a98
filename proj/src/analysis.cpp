#include "hsc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hsc/csv.hpp"
#include "hsc/parallel.hpp"
#include "hsc/preprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hsc {

CostReport cost_report(const NetworkState& state, const Tensor4f& images, Mode mode,
                       real t_stab, int max_iters, int batch_size) {
    if (images.dims[0] == 0) throw param_error("cost_report: empty dataset");
    const InferenceConfig cfg{mode, t_stab, max_iters};
    const EvalResult ev = evaluate_cost(state, images, cfg, batch_size);
    CostReport r;
    r.per_layer = ev.per_layer;
    r.total = ev.total_cost;
    r.mean_iterations = ev.mean_iterations;
    r.unconverged_batches = ev.unconverged_batches;
    r.lambdas = state.lambdas;
    r.mode = mode;
    r.seed = state.seed;
    r.epoch = state.epoch;
    return r;
}

MedianMad median_mad(std::vector<double> samples) {
    if (samples.empty()) throw param_error("median_mad: empty sample list");
    auto med = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    MedianMad r;
    r.median = med(samples);
    for (auto& v : samples) v = std::fabs(v - r.median);
    r.mad = med(samples);
    return r;
}

std::vector<ActivationHistogram> activation_probability(const NetworkState& state,
                                                        const Tensor4f& images,
                                                        const InferenceConfig& cfg,
                                                        int batch_size) {
    const int L = state.layer_count();
    const int n = images.dims[0];
    if (n == 0) throw param_error("activation_probability: empty dataset");
    std::vector<std::vector<long>> fire(L);
    for (int i = 0; i < L; ++i) fire[i].assign(state.dicts[i].n_features(), 0);

    for (int start = 0; start < n; start += batch_size) {
        const int bn = std::min(batch_size, n - start);
        Tensor4f batch(bn, images.dims[1], images.dims[2], images.dims[3]);
        std::copy(images.plane(start, 0), images.plane(start + bn, 0), batch.ptr());
        const auto res = infer(state, batch, cfg);
        for (int i = 0; i < L; ++i) {
            const Tensor4f& g = res.gammas[i];
            const size_t plane = static_cast<size_t>(g.dims[2]) * g.dims[3];
            for (int img = 0; img < bn; ++img)
                for (int f = 0; f < g.dims[1]; ++f) {
                    const float* p = g.plane(img, f);
                    for (size_t k = 0; k < plane; ++k)
                        if (p[k] > 0.0f) {
                            ++fire[i][f];
                            break;
                        }
                }
        }
    }

    std::vector<ActivationHistogram> out(L);
    for (int i = 0; i < L; ++i) {
        const int nf = static_cast<int>(fire[i].size());
        std::vector<int> idx(nf);
        for (int f = 0; f < nf; ++f) idx[f] = f;
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return fire[i][a] > fire[i][b]; });
        out[i].atom_indices = idx;
        out[i].probabilities.reserve(nf);
        for (int f : idx)
            out[i].probabilities.push_back(static_cast<double>(fire[i][f]) / n);
    }
    return out;
}

// ---- sweeps ----

const SweepCell& SweepGrid::cell(int i1, int i2, int is, Mode m) const {
    const size_t n2 = lambda2.size(), ns = seeds.size();
    const size_t idx = ((static_cast<size_t>(i1) * n2 + i2) * ns + is) * 2 +
                       (m == Mode::Spc ? 1 : 0);
    return cells[idx];
}

double SweepGrid::median_total(int i1, int i2, Mode m) const {
    std::vector<double> v;
    for (size_t is = 0; is < seeds.size(); ++is) {
        const SweepCell& c = cell(i1, i2, static_cast<int>(is), m);
        if (c.valid) v.push_back(c.final_total);
    }
    if (v.empty()) return std::nan("");
    return median_mad(v).median;
}

double SweepGrid::median_iterations(int i1, int i2, Mode m) const {
    std::vector<double> v;
    for (size_t is = 0; is < seeds.size(); ++is) {
        const SweepCell& c = cell(i1, i2, static_cast<int>(is), m);
        if (c.valid) v.push_back(c.final_iterations);
    }
    if (v.empty()) return std::nan("");
    return median_mad(v).median;
}

double SweepGrid::relative_difference(int i1, int i2) const {
    const double hila = median_total(i1, i2, Mode::HiLa);
    const double spc = median_total(i1, i2, Mode::Spc);
    return (hila - spc) / hila;
}

namespace {

std::string cell_key(const SweepCell& c) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "l1_%.6g_l2_%.6g_seed_%llu_%s",
                  static_cast<double>(c.lambda1), static_cast<double>(c.lambda2),
                  static_cast<unsigned long long>(c.seed), mode_name(c.mode));
    return buf;
}

uint64_t cell_fingerprint(const SweepConfig& cfg, const SweepCell& c) {
    json j;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["seed"] = c.seed;
    j["mode"] = mode_name(c.mode);
    j["epochs"] = cfg.base.epochs;
    j["batch_size"] = cfg.base.batch_size;
    j["t_stab"] = cfg.base.t_stab;
    j["max_iters"] = cfg.base.max_iters;
    json layers = json::array();
    for (const auto& l : cfg.base.layers)
        layers.push_back({l.n_features, l.k_h, l.k_w, l.stride, l.eta_learn});
    j["layers"] = layers;
    return fnv1a64(j.dump());
}

json cell_to_json(const SweepCell& c, uint64_t fp) {
    json j;
    j["fingerprint"] = fp;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["seed"] = c.seed;
    j["mode"] = mode_name(c.mode);
    j["valid"] = c.valid;
    j["error"] = c.error;
    j["epoch_total"] = c.epoch_total;
    j["epoch_iterations"] = c.epoch_iterations;
    json layers = json::array();
    for (const auto& ep : c.epoch_layers) {
        json le = json::array();
        for (const auto& t : ep) le.push_back({{"quadratic", t.quadratic}, {"l1", t.l1}});
        layers.push_back(le);
    }
    j["epoch_layers"] = layers;
    j["final_total"] = c.final_total;
    j["final_iterations"] = c.final_iterations;
    return j;
}

bool cell_from_json(const json& j, uint64_t fp, SweepCell& c) {
    if (!j.contains("fingerprint") || j["fingerprint"].get<uint64_t>() != fp) return false;
    c.valid = j.value("valid", false);
    c.error = j.value("error", "");
    c.epoch_total = j.value("epoch_total", std::vector<double>{});
    c.epoch_iterations = j.value("epoch_iterations", std::vector<double>{});
    c.epoch_layers.clear();
    for (const auto& ep : j.value("epoch_layers", json::array())) {
        std::vector<CostTerms> ts;
        for (const auto& t : ep)
            ts.push_back(CostTerms{t.value("quadratic", 0.0), t.value("l1", 0.0)});
        c.epoch_layers.push_back(std::move(ts));
    }
    c.final_total = j.value("final_total", 0.0);
    c.final_iterations = j.value("final_iterations", 0.0);
    return true;
}

} // namespace

SweepGrid sweep(const SweepConfig& cfg, const Tensor4f& train_images,
                const Tensor4f& test_images) {
    if (cfg.lambda1.empty() || cfg.lambda2.empty() || cfg.seeds.empty())
        throw param_error("sweep: lambda and seed lists must be nonempty");
    if (cfg.base.layers.empty()) throw config_error("sweep: network has no layers");

    SweepGrid grid;
    grid.lambda1 = cfg.lambda1;
    grid.lambda2 = cfg.lambda2;
    grid.seeds = cfg.seeds;
    for (real l1 : cfg.lambda1)
        for (real l2 : cfg.lambda2)
            for (uint64_t seed : cfg.seeds)
                for (Mode m : {Mode::HiLa, Mode::Spc}) {
                    SweepCell c;
                    c.lambda1 = l1;
                    c.lambda2 = l2;
                    c.seed = seed;
                    c.mode = m;
                    grid.cells.push_back(c);
                }

    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

    parallel_for(static_cast<int>(grid.cells.size()), [&](int ci) {
        SweepCell& c = grid.cells[ci];
        const uint64_t fp = cell_fingerprint(cfg, c);
        const std::string cell_path =
            cfg.out_dir.empty() ? "" : (fs::path(cfg.out_dir) / (cell_key(c) + ".json")).string();
        if (cfg.resume && !cell_path.empty() && fs::exists(cell_path)) {
            std::ifstream is(cell_path);
            const json j = json::parse(is, nullptr, false);
            if (!j.is_discarded() && cell_from_json(j, fp, c)) return; // completed earlier
        }
        try {
            NetworkSpec spec = cfg.base;
            spec.seed = c.seed;
            spec.mode = c.mode;
            spec.layers[0].lambda = c.lambda1;
            if (spec.layers.size() > 1) spec.layers[1].lambda = c.lambda2;
            const TrainResult tr = train(spec, train_images, test_images);
            for (const auto& e : tr.log.entries) {
                c.epoch_total.push_back(e.total_cost);
                c.epoch_iterations.push_back(e.mean_iterations);
                c.epoch_layers.push_back(e.per_layer);
            }
            c.final_total = c.epoch_total.back();
            c.final_iterations = c.epoch_iterations.back();
            c.valid = true;
        } catch (const std::exception& e) {
            c.valid = false;
            c.error = e.what();
        }
        if (!cell_path.empty()) {
            std::ofstream os(cell_path);
            os << cell_to_json(c, fp).dump(2) << "\n";
        }
    });
    return grid;
}

void export_sweep_csv(const SweepGrid& grid, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"mode", "seed", "lambda1", "lambda2", "layer", "quadratic", "l1", "iterations",
                "epoch"});
    for (const auto& c : grid.cells) {
        if (!c.valid) continue;
        for (size_t ep = 0; ep < c.epoch_layers.size(); ++ep)
            for (size_t layer = 0; layer < c.epoch_layers[ep].size(); ++layer) {
                csv.field(mode_name(c.mode));
                csv.field(static_cast<long long>(c.seed));
                csv.field(c.lambda1);
                csv.field(c.lambda2);
                csv.field(static_cast<long long>(layer + 1));
                csv.field(c.epoch_layers[ep][layer].quadratic);
                csv.field(c.epoch_layers[ep][layer].l1);
                csv.field(c.epoch_iterations[ep]);
                csv.field(static_cast<long long>(ep + 1));
                csv.end_row();
            }
    }
}

void export_sweep_grid_json(const SweepGrid& grid, const std::string& path) {
    json j;
    j["lambda1"] = grid.lambda1;
    j["lambda2"] = grid.lambda2;
    json seeds = json::array();
    for (uint64_t s : grid.seeds) seeds.push_back(s);
    j["seeds"] = seeds;
    json hila = json::array(), spc = json::array(), rel = json::array(), iters_h = json::array(),
         iters_s = json::array();
    for (size_t i1 = 0; i1 < grid.lambda1.size(); ++i1) {
        json rh = json::array(), rs = json::array(), rr = json::array(), ih = json::array(),
             is2 = json::array();
        for (size_t i2 = 0; i2 < grid.lambda2.size(); ++i2) {
            rh.push_back(grid.median_total(static_cast<int>(i1), static_cast<int>(i2), Mode::HiLa));
            rs.push_back(grid.median_total(static_cast<int>(i1), static_cast<int>(i2), Mode::Spc));
            rr.push_back(grid.relative_difference(static_cast<int>(i1), static_cast<int>(i2)));
            ih.push_back(
                grid.median_iterations(static_cast<int>(i1), static_cast<int>(i2), Mode::HiLa));
            is2.push_back(
                grid.median_iterations(static_cast<int>(i1), static_cast<int>(i2), Mode::Spc));
        }
        hila.push_back(rh);
        spc.push_back(rs);
        rel.push_back(rr);
        iters_h.push_back(ih);
        iters_s.push_back(is2);
    }
    j["median_total_hila"] = hila;
    j["median_total_spc"] = spc;
    j["relative_difference"] = rel;
    j["median_iterations_hila"] = iters_h;
    j["median_iterations_spc"] = iters_s;
    int invalid = 0;
    json failures = json::array();
    for (const auto& c : grid.cells)
        if (!c.valid) {
            ++invalid;
            failures.push_back({{"lambda1", c.lambda1},
                                {"lambda2", c.lambda2},
                                {"seed", c.seed},
                                {"mode", mode_name(c.mode)},
                                {"error", c.error}});
        }
    j["invalid_cells"] = invalid;
    j["failures"] = failures;
    std::ofstream os(path);
    if (!os) throw format_error(path + ": cannot open for writing");
    os << j.dump(2) << "\n";
}

Image atom_mosaic(const Tensor4f& atoms, const std::vector<int>& order, bool exclude_top,
                  int pad) {
    const int n_all = atoms.dims[0];
    if (n_all == 0) throw param_error("atom_mosaic: no atoms");
    std::vector<int> seq = order.empty() ? std::vector<int>() : order;
    if (seq.empty()) {
        seq.resize(n_all);
        for (int i = 0; i < n_all; ++i) seq[i] = i;
    }
    if (exclude_top && seq.size() > 1) seq.erase(seq.begin());
    const int n = static_cast<int>(seq.size());
    const int c = atoms.dims[1], ah = atoms.dims[2], aw = atoms.dims[3];
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols;

    Image img;
    img.channels = c;
    img.height = rows * ah + (rows + 1) * pad;
    img.width = cols * aw + (cols + 1) * pad;
    img.pixels.assign(static_cast<size_t>(c) * img.height * img.width, 0.0f);

    for (int t = 0; t < n; ++t) {
        const int atom = seq[t];
        if (atom < 0 || atom >= n_all) throw param_error("atom_mosaic: order index out of range");
        // Per-atom min-max normalization over all channels.
        float lo = atoms.at(atom, 0, 0, 0), hi = lo;
        for (int ch = 0; ch < c; ++ch) {
            const float* p = atoms.plane(atom, ch);
            for (int i = 0; i < ah * aw; ++i) {
                lo = std::min(lo, p[i]);
                hi = std::max(hi, p[i]);
            }
        }
        const float scale = hi > lo ? 1.0f / (hi - lo) : 0.0f;
        const int ty = t / cols, tx = t % cols;
        const int y0 = pad + ty * (ah + pad), x0 = pad + tx * (aw + pad);
        for (int ch = 0; ch < c; ++ch) {
            const float* p = atoms.plane(atom, ch);
            for (int y = 0; y < ah; ++y)
                for (int x = 0; x < aw; ++x)
                    img.at(ch, y0 + y, x0 + x) =
                        scale > 0 ? (p[y * aw + x] - lo) * scale : 0.5f;
        }
    }
    return img;
}

} // namespace hsc
