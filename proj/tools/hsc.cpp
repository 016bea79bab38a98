#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsc/analysis.hpp"
#include "hsc/checkpoint.hpp"
#include "hsc/config.hpp"
#include "hsc/csv.hpp"
#include "hsc/learner.hpp"
#include "hsc/preprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hsc;

namespace {

json cost_terms_json(const std::vector<CostTerms>& per_layer) {
    json arr = json::array();
    for (const auto& t : per_layer)
        arr.push_back({{"quadratic", t.quadratic}, {"l1", t.l1}});
    return arr;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw format_error(path + ": cannot open for writing");
    os << text;
    if (!text.empty() && text.back() != '\n') os << "\n";
}

// ---- train ----

struct TrainArgs {
    std::string config, out_override, mode_override;
    int epochs_override = -1;
    long long seed_override = -1;
    double t_stab_override = -1;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = load_run_config(a.config);
    if (!a.out_override.empty()) cfg.out_dir = a.out_override;
    if (!a.mode_override.empty()) cfg.network.mode = mode_from_name(a.mode_override);
    if (a.epochs_override > 0) cfg.network.epochs = a.epochs_override;
    if (a.seed_override >= 0) cfg.network.seed = static_cast<uint64_t>(a.seed_override);
    if (a.t_stab_override > 0) cfg.network.t_stab = static_cast<real>(a.t_stab_override);
    if (cfg.out_dir.empty()) throw config_error("no output directory (output.dir or --out)");

    // Datasets must resolve before any artifact is created.
    const Dataset train_ds = load_dataset(cfg.train_path);
    const Dataset test_ds = load_dataset(cfg.test_path);

    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "config_echo.json").string(), config_echo(cfg));

    const TrainResult tr = train(cfg.network, train_ds.images, test_ds.images,
                                 (fs::path(cfg.out_dir) / "diagnostic.hsc").string());

    save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.hsc").string(), tr.state);

    {
        CsvWriter csv((fs::path(cfg.out_dir) / "train_log.csv").string());
        std::vector<std::string> cols = {"epoch", "total_cost", "mean_iterations"};
        for (size_t i = 0; i < cfg.network.layers.size(); ++i) {
            cols.push_back("quadratic_" + std::to_string(i + 1));
            cols.push_back("l1_" + std::to_string(i + 1));
        }
        csv.header(cols);
        for (const auto& e : tr.log.entries) {
            csv.field(e.epoch);
            csv.field(e.total_cost);
            csv.field(e.mean_iterations);
            for (const auto& t : e.per_layer) {
                csv.field(t.quadratic);
                csv.field(t.l1);
            }
            csv.end_row();
        }
    }
    {
        // Wall-clock lives apart so the main log is byte-reproducible.
        CsvWriter csv((fs::path(cfg.out_dir) / "train_timing.csv").string());
        csv.header({"epoch", "wall_seconds"});
        for (const auto& e : tr.log.entries) {
            csv.field(e.epoch);
            csv.field(e.wall_seconds);
            csv.end_row();
        }
    }
    {
        const TrainLogEntry& last = tr.log.entries.back();
        json j;
        j["total"] = last.total_cost;
        j["per_layer"] = cost_terms_json(last.per_layer);
        j["mean_iterations"] = last.mean_iterations;
        j["mode"] = mode_name(cfg.network.mode);
        j["seed"] = cfg.network.seed;
        j["epoch"] = last.epoch;
        json lambdas = json::array();
        for (const auto& l : cfg.network.layers) lambdas.push_back(l.lambda);
        j["lambda"] = lambdas;
        write_text((fs::path(cfg.out_dir) / "cost_report.json").string(), j.dump(2));
    }
    if (!tr.log.incidents.empty()) {
        std::string text;
        for (const auto& s : tr.log.incidents) text += s + "\n";
        write_text((fs::path(cfg.out_dir) / "incidents.log").string(), text);
    }
    std::cout << "train: " << tr.log.entries.size() << " epochs, final total cost "
              << tr.log.entries.back().total_cost << ", artifacts in " << cfg.out_dir << "\n";
    return 0;
}

// ---- infer ----

struct InferArgs {
    std::string checkpoint, data, out, mode = "spc";
    double t_stab = 1e-4;
    int max_iters = 500;
};

int cmd_infer(const InferArgs& a) {
    const Dataset ds = load_dataset(a.data);
    NetworkState state =
        load_checkpoint(a.checkpoint, ds.images.dims[2], ds.images.dims[3]);
    const InferenceConfig cfg{mode_from_name(a.mode), static_cast<real>(a.t_stab), a.max_iters};
    fs::create_directories(a.out);

    const int L = state.layer_count();
    std::vector<CostTerms> agg(L);
    double iter_sum = 0;
    int unconverged = 0;

    CsvWriter csv((fs::path(a.out) / "per_image.csv").string());
    csv.header({"image", "iterations", "converged", "layer", "quadratic", "l1"});
    const int n = ds.images.dims[0];
    for (int img = 0; img < n; ++img) {
        Tensor4f x(1, ds.images.dims[1], ds.images.dims[2], ds.images.dims[3]);
        std::copy(ds.images.plane(img, 0), ds.images.plane(img + 1, 0), x.ptr());
        const auto res = infer(state, x, cfg);
        iter_sum += res.iterations;
        if (!res.converged) ++unconverged;
        for (int i = 0; i < L; ++i) {
            const Tensor4f& below = (i == 0) ? x : res.gammas[i - 1];
            const CostTerms t =
                lasso_cost(state.dicts[i], below, res.gammas[i], state.lambdas[i]);
            agg[i].quadratic += t.quadratic;
            agg[i].l1 += t.l1;
            csv.field(img);
            csv.field(res.iterations);
            csv.field(res.converged ? 1 : 0);
            csv.field(i + 1);
            csv.field(t.quadratic);
            csv.field(t.l1);
            csv.end_row();
        }
    }
    json j;
    j["images"] = n;
    j["mode"] = a.mode;
    j["mean_iterations"] = iter_sum / std::max(1, n);
    j["unconverged"] = unconverged;
    double total = 0;
    for (auto& t : agg) {
        t.quadratic /= std::max(1, n);
        t.l1 /= std::max(1, n);
        total += t.total();
    }
    j["per_layer"] = cost_terms_json(agg);
    j["total"] = total;
    write_text((fs::path(a.out) / "aggregate.json").string(), j.dump(2));
    std::cout << "infer: " << n << " images, mean iterations " << (iter_sum / std::max(1, n))
              << ", total cost " << total << "\n";
    return 0;
}

// ---- sweep ----

struct SweepArgs {
    std::string config, out_override;
    bool resume = false;
};

int cmd_sweep(const SweepArgs& a) {
    RunConfig cfg = load_run_config(a.config);
    if (!a.out_override.empty()) cfg.out_dir = a.out_override;
    if (cfg.out_dir.empty()) throw config_error("no output directory (output.dir or --out)");
    if (cfg.lambda1_list.empty() || cfg.lambda2_list.empty() || cfg.sweep_seeds.empty())
        throw config_error("sweep section needs lambda1, lambda2 and seeds");

    const Dataset train_ds = load_dataset(cfg.train_path);
    const Dataset test_ds = load_dataset(cfg.test_path);

    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "config_echo.json").string(), config_echo(cfg));

    SweepConfig sc;
    sc.base = cfg.network;
    sc.lambda1 = cfg.lambda1_list;
    sc.lambda2 = cfg.lambda2_list;
    sc.seeds = cfg.sweep_seeds;
    sc.out_dir = (fs::path(cfg.out_dir) / "cells").string();
    sc.resume = a.resume;
    sc.image_channels = train_ds.images.dims[1];

    const SweepGrid grid = sweep(sc, train_ds.images, test_ds.images);
    export_sweep_csv(grid, (fs::path(cfg.out_dir) / "cells.csv").string());
    export_sweep_grid_json(grid, (fs::path(cfg.out_dir) / "grid.json").string());

    int valid = 0;
    for (const auto& c : grid.cells)
        if (c.valid) ++valid;
    std::cout << "sweep: " << valid << "/" << grid.cells.size() << " cells valid, artifacts in "
              << cfg.out_dir << "\n";
    return valid > 0 ? 0 : 1;
}

// ---- export-rf ----

struct ExportRfArgs {
    std::string checkpoint, data, out, mode = "spc", format = "png";
    double t_stab = 1e-4;
    int max_iters = 500;
    int batch_size = 32;
    bool exclude_top = false;
};

int cmd_export_rf(const ExportRfArgs& a) {
    const Dataset ds = load_dataset(a.data);
    NetworkState state = load_checkpoint(a.checkpoint, ds.images.dims[2], ds.images.dims[3]);
    const InferenceConfig cfg{mode_from_name(a.mode), static_cast<real>(a.t_stab), a.max_iters};
    fs::create_directories(a.out);

    const auto histos = activation_probability(state, ds.images, cfg, a.batch_size);
    json jh = json::array();
    for (int i = 0; i < state.layer_count(); ++i) {
        const Tensor4f rf = effective_dictionary(state.dicts, i + 1);
        const Image mosaic = atom_mosaic(rf, histos[i].atom_indices, a.exclude_top);
        const std::string img_path =
            (fs::path(a.out) / ("layer" + std::to_string(i + 1) + "_rf." + a.format)).string();
        write_image(img_path, mosaic);
        jh.push_back({{"layer", i + 1},
                      {"atom_indices", histos[i].atom_indices},
                      {"probabilities", histos[i].probabilities},
                      {"rf_height", rf.dims[2]},
                      {"rf_width", rf.dims[3]},
                      {"excluded_top", a.exclude_top}});
    }
    json j;
    j["definition"] =
        "per-image event: atom has at least one strictly positive coefficient; "
        "probability = event count / images";
    j["layers"] = jh;
    write_text((fs::path(a.out) / "histogram.json").string(), j.dump(2));
    std::cout << "export-rf: " << state.layer_count() << " mosaics in " << a.out << "\n";
    return 0;
}

// ---- gen-synthetic ----

struct GenArgs {
    std::string out;
    int n = 200, features = 8, kernel = 5, stride = 1, code_h = 8, code_w = 8, channels = 1;
    int active = 1;
    double noise = 0;
    long long seed = 0;
};

int cmd_gen_synthetic(const GenArgs& a) {
    SyntheticSpec spec;
    Rng rng(split_seed(static_cast<uint64_t>(a.seed), 0xD1C7u));
    Tensor4f w(a.features, a.channels, a.kernel, a.kernel);
    for (auto& v : w.data) v = static_cast<float>(rng.normal());
    ConvDict d(std::move(w), a.stride);
    Rng dead(split_seed(static_cast<uint64_t>(a.seed), 0xDEADu));
    normalize_atoms(d, dead);
    spec.dicts.push_back(std::move(d));
    spec.code_h = a.code_h;
    spec.code_w = a.code_w;
    spec.active_atoms = a.active;
    spec.noise_std = static_cast<float>(a.noise);
    spec.n_images = a.n;
    spec.seed = static_cast<uint64_t>(a.seed);

    SyntheticData data = generate_synthetic(spec);
    fs::create_directories(a.out);
    save_dataset((fs::path(a.out) / "images.hsd").string(), data.data);
    Dataset codes;
    codes.images = data.true_codes;
    codes.split = "codes";
    codes.provenance = data.data.provenance;
    save_dataset((fs::path(a.out) / "true_codes.hsd").string(), codes);

    NetworkState st;
    st.dicts = spec.dicts;
    st.momenta.emplace_back(a.features, a.channels, a.kernel, a.kernel);
    st.lambdas.push_back(0.0f);
    st.seed = spec.seed;
    save_checkpoint((fs::path(a.out) / "true_dict.hsc").string(), st);
    std::cout << "gen-synthetic: " << a.n << " images in " << a.out << "\n";
    return 0;
}

// ---- preprocess ----

struct PrepArgs {
    std::string idx_images, idx_labels, image_dir;
    std::string out, out_train, out_test;
    std::string whiten = "fourier";
    std::string split; // train/test tag for single-file output
    int target_h = 0, target_w = 0, channels = 1;
    int lcn_window = 9;
    double lcn_eps = 1e-3, lcn_sigma = 0, f0_factor = 0.8, split_ratio = 0.8, zca_eps = 1e-2;
    long long seed = 0;
    int take = 0; // keep only the first N images (0 = all)
};

void preprocess_one(Dataset& ds, const PrepArgs& a, const WhiteningOp* op) {
    LcnParams lp;
    lp.window = a.lcn_window;
    lp.epsilon = static_cast<float>(a.lcn_eps);
    lp.sigma = static_cast<float>(a.lcn_sigma);
    apply_lcn(ds, lp);
    if (a.whiten != "none") {
        WhiteningOp local;
        if (!op) {
            WhitenParams wp;
            wp.method = a.whiten;
            wp.f0_factor = static_cast<float>(a.f0_factor);
            wp.zca_eps = static_cast<float>(a.zca_eps);
            local = fit_whitening(ds, wp);
            op = &local;
        }
        apply_whitening(ds, *op);
    }
}

int cmd_preprocess(const PrepArgs& a) {
    if (!a.idx_images.empty()) {
        if (a.out.empty()) throw config_error("--out is required with --idx-images");
        Dataset ds = load_idx(a.idx_images, a.idx_labels);
        if (a.take > 0 && a.take < ds.count()) {
            Tensor4f keep(a.take, ds.images.dims[1], ds.images.dims[2], ds.images.dims[3]);
            std::copy(ds.images.plane(0, 0), ds.images.plane(a.take, 0), keep.ptr());
            ds.images = std::move(keep);
            if (!ds.labels.empty()) ds.labels.resize(a.take);
        }
        ds.split = a.split;
        preprocess_one(ds, a, nullptr);
        save_dataset(a.out, ds);
        std::cout << "preprocess: " << ds.count() << " images -> " << a.out << "\n";
        return 0;
    }
    if (!a.image_dir.empty()) {
        if (a.out_train.empty() || a.out_test.empty())
            throw config_error("--out-train and --out-test are required with --image-dir");
        ImageDirParams p;
        p.target_h = a.target_h;
        p.target_w = a.target_w;
        p.channels = a.channels;
        p.split_ratio = a.split_ratio;
        p.seed = static_cast<uint64_t>(a.seed);
        auto [train_ds, test_ds] = load_image_dir(a.image_dir, p);
        // Whitening is fitted on the training split only and reused.
        WhitenParams wp;
        wp.method = a.whiten == "none" ? "fourier" : a.whiten;
        wp.f0_factor = static_cast<float>(a.f0_factor);
        wp.zca_eps = static_cast<float>(a.zca_eps);
        LcnParams lp;
        lp.window = a.lcn_window;
        lp.epsilon = static_cast<float>(a.lcn_eps);
        lp.sigma = static_cast<float>(a.lcn_sigma);
        apply_lcn(train_ds, lp);
        apply_lcn(test_ds, lp);
        if (a.whiten != "none") {
            const WhiteningOp op = fit_whitening(train_ds, wp);
            apply_whitening(train_ds, op);
            apply_whitening(test_ds, op);
        }
        save_dataset(a.out_train, train_ds);
        save_dataset(a.out_test, test_ds);
        std::cout << "preprocess: " << train_ds.count() << " train / " << test_ds.count()
                  << " test -> " << a.out_train << ", " << a.out_test << "\n";
        return 0;
    }
    throw config_error("preprocess needs --idx-images or --image-dir");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical convolutional sparse coding (Hi-La / 2L-SPC)"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "alternate inference and dictionary learning");
    train_cmd->add_option("--config", ta.config, "run configuration JSON")->required();
    train_cmd->add_option("--out", ta.out_override, "output directory (overrides config)");
    train_cmd->add_option("--mode", ta.mode_override, "hila or spc (overrides config)");
    train_cmd->add_option("--epochs", ta.epochs_override, "epoch count (overrides config)");
    train_cmd->add_option("--seed", ta.seed_override, "run seed (overrides config)");
    train_cmd->add_option("--t-stab", ta.t_stab_override, "stability threshold (overrides config)");

    InferArgs ia;
    auto* infer_cmd = app.add_subcommand("infer", "run inference with frozen dictionaries");
    infer_cmd->add_option("--checkpoint", ia.checkpoint, "HSC1 checkpoint")->required();
    infer_cmd->add_option("--data", ia.data, "HSD1 dataset cache")->required();
    infer_cmd->add_option("--out", ia.out, "output directory")->required();
    infer_cmd->add_option("--mode", ia.mode, "hila or spc");
    infer_cmd->add_option("--t-stab", ia.t_stab, "stability threshold");
    infer_cmd->add_option("--max-iters", ia.max_iters, "iteration cap");

    SweepArgs sa;
    auto* sweep_cmd = app.add_subcommand("sweep", "train/evaluate both modes over a lambda grid");
    sweep_cmd->add_option("--config", sa.config, "run configuration JSON")->required();
    sweep_cmd->add_option("--out", sa.out_override, "output directory (overrides config)");
    sweep_cmd->add_flag("--resume", sa.resume, "skip cells already completed (by fingerprint)");

    ExportRfArgs ea;
    auto* rf_cmd = app.add_subcommand("export-rf", "receptive-field mosaics + activation stats");
    rf_cmd->add_option("--checkpoint", ea.checkpoint, "HSC1 checkpoint")->required();
    rf_cmd->add_option("--data", ea.data, "HSD1 dataset for activation ranking")->required();
    rf_cmd->add_option("--out", ea.out, "output directory")->required();
    rf_cmd->add_option("--mode", ea.mode, "hila or spc");
    rf_cmd->add_option("--t-stab", ea.t_stab, "stability threshold");
    rf_cmd->add_option("--max-iters", ea.max_iters, "iteration cap");
    rf_cmd->add_option("--batch-size", ea.batch_size, "inference batch size");
    rf_cmd->add_option("--format", ea.format, "png, pgm or ppm");
    rf_cmd->add_flag("--exclude-top", ea.exclude_top, "drop the most activated atom");

    GenArgs ga;
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "dataset from a known dictionary");
    gen_cmd->add_option("--out", ga.out, "output directory")->required();
    gen_cmd->add_option("--n", ga.n, "image count");
    gen_cmd->add_option("--features", ga.features, "atom count");
    gen_cmd->add_option("--channels", ga.channels, "image channels");
    gen_cmd->add_option("--kernel", ga.kernel, "kernel extent");
    gen_cmd->add_option("--stride", ga.stride, "stride");
    gen_cmd->add_option("--code-h", ga.code_h, "code height");
    gen_cmd->add_option("--code-w", ga.code_w, "code width");
    gen_cmd->add_option("--active", ga.active, "active atoms per image");
    gen_cmd->add_option("--noise", ga.noise, "additive noise std");
    gen_cmd->add_option("--seed", ga.seed, "generator seed");

    PrepArgs pa;
    auto* prep_cmd = app.add_subcommand("preprocess", "LCN + whitening into a dataset cache");
    prep_cmd->add_option("--idx-images", pa.idx_images, "IDX image file");
    prep_cmd->add_option("--idx-labels", pa.idx_labels, "IDX label file");
    prep_cmd->add_option("--image-dir", pa.image_dir, "folder of PNG/PPM/PGM images");
    prep_cmd->add_option("--out", pa.out, "output cache (.hsd) for --idx-images");
    prep_cmd->add_option("--out-train", pa.out_train, "train cache for --image-dir");
    prep_cmd->add_option("--out-test", pa.out_test, "test cache for --image-dir");
    prep_cmd->add_option("--split", pa.split, "split tag for --idx-images output");
    prep_cmd->add_option("--take", pa.take, "keep only the first N images");
    prep_cmd->add_option("--target-h", pa.target_h, "resize height");
    prep_cmd->add_option("--target-w", pa.target_w, "resize width");
    prep_cmd->add_option("--channels", pa.channels, "output channels");
    prep_cmd->add_option("--split-ratio", pa.split_ratio, "train fraction for --image-dir");
    prep_cmd->add_option("--seed", pa.seed, "split seed");
    prep_cmd->add_option("--lcn-window", pa.lcn_window, "LCN window (odd)");
    prep_cmd->add_option("--lcn-eps", pa.lcn_eps, "LCN divisive floor");
    prep_cmd->add_option("--lcn-sigma", pa.lcn_sigma, "LCN Gaussian sigma (0 = window/4)");
    prep_cmd->add_option("--whiten", pa.whiten, "fourier, zca or none");
    prep_cmd->add_option("--f0-factor", pa.f0_factor, "whitening cutoff as a Nyquist fraction");
    prep_cmd->add_option("--zca-eps", pa.zca_eps, "ZCA eigenvalue shrinkage");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(train_cmd)) return cmd_train(ta);
        if (app.got_subcommand(infer_cmd)) return cmd_infer(ia);
        if (app.got_subcommand(sweep_cmd)) return cmd_sweep(sa);
        if (app.got_subcommand(rf_cmd)) return cmd_export_rf(ea);
        if (app.got_subcommand(gen_cmd)) return cmd_gen_synthetic(ga);
        if (app.got_subcommand(prep_cmd)) return cmd_preprocess(pa);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const param_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
