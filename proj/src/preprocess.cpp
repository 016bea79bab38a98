#include "hsc/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "hsc/image_io.hpp"
#include "hsc/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hsc {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---- LCN ----

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> g(window);
    const int r = window / 2;
    double sum = 0;
    for (int i = 0; i < window; ++i) {
        const double d = i - r;
        g[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

// Separable blur with zero padding, plus the matching kernel-mass image so
// border pixels can be renormalized. mass(y, x) = my(y) * mx(x).
void sep_blur(const float* src, int h, int w, const std::vector<double>& g,
              std::vector<double>& tmp, std::vector<double>& dst) {
    const int r = static_cast<int>(g.size()) / 2;
    tmp.assign(static_cast<size_t>(h) * w, 0.0);
    dst.assign(static_cast<size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            const int lo = std::max(0, x - r), hi = std::min(w - 1, x + r);
            for (int xx = lo; xx <= hi; ++xx) acc += g[xx - x + r] * src[y * w + xx];
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            const int lo = std::max(0, y - r), hi = std::min(h - 1, y + r);
            for (int yy = lo; yy <= hi; ++yy) acc += g[yy - y + r] * tmp[static_cast<size_t>(yy) * w + x];
            dst[static_cast<size_t>(y) * w + x] = acc;
        }
}

std::vector<double> axis_mass(int extent, const std::vector<double>& g) {
    const int r = static_cast<int>(g.size()) / 2;
    std::vector<double> m(extent);
    for (int x = 0; x < extent; ++x) {
        double acc = 0;
        const int lo = std::max(0, x - r), hi = std::min(extent - 1, x + r);
        for (int xx = lo; xx <= hi; ++xx) acc += g[xx - x + r];
        m[x] = acc;
    }
    return m;
}

} // namespace

Tensor4f lcn(const Tensor4f& images, int window, float epsilon, float sigma) {
    const int n = images.dims[0], c = images.dims[1], h = images.dims[2], w = images.dims[3];
    if (window < 1 || window % 2 == 0) throw param_error("lcn: window must be odd and positive");
    if (window > h || window > w)
        throw param_error("lcn: window " + std::to_string(window) + " exceeds image extent " +
                          std::to_string(h) + "x" + std::to_string(w));
    if (epsilon <= 0) throw param_error("lcn: epsilon must be > 0");
    const double sg = sigma > 0 ? sigma : window / 4.0;
    const auto g = gaussian_kernel(window, sg);
    const auto my = axis_mass(h, g);
    const auto mx = axis_mass(w, g);

    Tensor4f out(n, c, h, w);
    std::vector<double> tmp, blur, mean(static_cast<size_t>(h) * w),
        var(static_cast<size_t>(h) * w);
    std::vector<float> centered(static_cast<size_t>(h) * w);
    for (int img = 0; img < n; ++img) {
        // Channel-joint weighted mean.
        std::fill(mean.begin(), mean.end(), 0.0);
        for (int ch = 0; ch < c; ++ch) {
            sep_blur(images.plane(img, ch), h, w, g, tmp, blur);
            for (size_t i = 0; i < mean.size(); ++i) mean[i] += blur[i];
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                mean[static_cast<size_t>(y) * w + x] /= c * my[y] * mx[x];
        // Channel-joint weighted variance of the centered image.
        std::fill(var.begin(), var.end(), 0.0);
        for (int ch = 0; ch < c; ++ch) {
            const float* src = images.plane(img, ch);
            for (size_t i = 0; i < centered.size(); ++i) {
                const double d = src[i] - mean[i];
                centered[i] = static_cast<float>(d * d);
            }
            sep_blur(centered.data(), h, w, g, tmp, blur);
            for (size_t i = 0; i < var.size(); ++i) var[i] += blur[i];
        }
        for (int ch = 0; ch < c; ++ch) {
            const float* src = images.plane(img, ch);
            float* dst = out.plane(img, ch);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(y) * w + x;
                    const double sd = std::sqrt(var[i] / (c * my[y] * mx[x]));
                    dst[i] = static_cast<float>((src[i] - mean[i]) /
                                                std::max(sd, static_cast<double>(epsilon)));
                }
        }
    }
    return out;
}

void apply_lcn(Dataset& ds, const LcnParams& p) {
    if (ds.provenance.lcn_applied)
        throw param_error("lcn already applied to this dataset (fingerprint " +
                          std::to_string(ds.provenance.fingerprint) + ")");
    ds.images = lcn(ds.images, p.window, p.epsilon, p.sigma);
    json j = json::parse(ds.provenance.params_json.empty() ? "{}" : ds.provenance.params_json);
    j["lcn"] = {{"window", p.window}, {"epsilon", p.epsilon},
                {"sigma", p.sigma > 0 ? p.sigma : p.window / 4.0f}};
    ds.provenance.params_json = j.dump();
    ds.provenance.lcn_applied = true;
    ds.provenance.fingerprint = fnv1a64(ds.provenance.source + "|" + ds.provenance.params_json);
}

void apply_whitening(Dataset& ds, const WhiteningOp& op) {
    if (ds.provenance.whitened)
        throw param_error("whitening already applied to this dataset (fingerprint " +
                          std::to_string(ds.provenance.fingerprint) + ")");
    ds.images = whiten_apply(op, ds.images);
    json j = json::parse(ds.provenance.params_json.empty() ? "{}" : ds.provenance.params_json);
    j["whiten"] = {{"method", op.params.method},
                   {"f0_factor", op.params.f0_factor},
                   {"zca_eps", op.params.zca_eps}};
    ds.provenance.params_json = j.dump();
    ds.provenance.whitened = true;
    ds.provenance.fingerprint = fnv1a64(ds.provenance.source + "|" + ds.provenance.params_json);
}

// ---- IDX ----

namespace {

uint32_t read_be32(std::istream& is, const std::string& path, size_t offset) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw format_error(path + ": truncated at byte offset " + std::to_string(offset));
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream is(images_path, std::ios::binary);
    if (!is) throw format_error(images_path + ": cannot open");
    const uint32_t magic = read_be32(is, images_path, 0);
    if (magic != 0x00000803u)
        throw format_error(images_path + ": bad magic at byte offset 0 (got 0x" +
                           [&] { char b[16]; std::snprintf(b, 16, "%08x", magic); return std::string(b); }() +
                           ", want 0x00000803)");
    const uint32_t count = read_be32(is, images_path, 4);
    const uint32_t rows = read_be32(is, images_path, 8);
    const uint32_t cols = read_be32(is, images_path, 12);
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
        throw format_error(images_path + ": implausible image dims at byte offset 8");

    Dataset ds;
    ds.images = Tensor4f(static_cast<int>(count), 1, static_cast<int>(rows),
                         static_cast<int>(cols));
    const size_t npix = static_cast<size_t>(rows) * cols;
    std::vector<unsigned char> buf(npix);
    for (uint32_t i = 0; i < count; ++i) {
        if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(npix)))
            throw format_error(images_path + ": truncated at byte offset " +
                               std::to_string(16 + static_cast<size_t>(i) * npix));
        float* dst = ds.images.plane(static_cast<int>(i), 0);
        for (size_t p = 0; p < npix; ++p) dst[p] = static_cast<float>(buf[p]) / 255.0f;
    }

    if (!labels_path.empty()) {
        std::ifstream ls(labels_path, std::ios::binary);
        if (!ls) throw format_error(labels_path + ": cannot open");
        const uint32_t lmagic = read_be32(ls, labels_path, 0);
        if (lmagic != 0x00000801u)
            throw format_error(labels_path + ": bad magic at byte offset 0 (want 0x00000801)");
        const uint32_t lcount = read_be32(ls, labels_path, 4);
        if (lcount != count)
            throw format_error(labels_path + ": label count " + std::to_string(lcount) +
                               " != image count " + std::to_string(count));
        ds.labels.resize(lcount);
        for (uint32_t i = 0; i < lcount; ++i) {
            char b;
            if (!ls.get(b))
                throw format_error(labels_path + ": truncated at byte offset " +
                                   std::to_string(8 + i));
            ds.labels[i] = static_cast<unsigned char>(b);
        }
    }

    ds.provenance.source = images_path;
    ds.provenance.params_json = "{}";
    ds.provenance.fingerprint = fnv1a64(images_path + "|{}");
    return ds;
}

void write_idx_images(const std::string& path, const Tensor4f& images) {
    if (images.dims[1] != 1)
        throw param_error("write_idx_images: container holds single-channel images");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw format_error(path + ": cannot open for writing");
    write_be32(os, 0x00000803u);
    write_be32(os, static_cast<uint32_t>(images.dims[0]));
    write_be32(os, static_cast<uint32_t>(images.dims[2]));
    write_be32(os, static_cast<uint32_t>(images.dims[3]));
    const size_t npix = static_cast<size_t>(images.dims[2]) * images.dims[3];
    for (int i = 0; i < images.dims[0]; ++i) {
        const float* src = images.plane(i, 0);
        for (size_t p = 0; p < npix; ++p) {
            const float v = std::clamp(src[p], 0.0f, 1.0f);
            os.put(static_cast<char>(std::lround(v * 255.0f)));
        }
    }
    if (!os) throw format_error(path + ": write failed");
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw format_error(path + ": cannot open for writing");
    write_be32(os, 0x00000801u);
    write_be32(os, static_cast<uint32_t>(labels.size()));
    for (int l : labels) os.put(static_cast<char>(l & 0xff));
    if (!os) throw format_error(path + ": write failed");
}

// ---- image folders ----

std::pair<Dataset, Dataset> load_image_dir(const std::string& dir, const ImageDirParams& p) {
    if (!fs::is_directory(dir)) throw format_error(dir + ": not a directory");
    if (p.split_ratio < 0 || p.split_ratio > 1)
        throw param_error("load_image_dir: split_ratio must be in [0, 1]");
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());

    std::vector<Image> imgs;
    std::vector<std::string> warnings;
    for (const auto& name : names) {
        const std::string path = (fs::path(dir) / name).string();
        try {
            Image im = read_image(path);
            im = convert_channels(im, p.channels);
            if (p.target_h > 0 && p.target_w > 0 &&
                (im.height != p.target_h || im.width != p.target_w))
                im = resize_bilinear(im, p.target_h, p.target_w);
            imgs.push_back(std::move(im));
        } catch (const std::exception& e) {
            warnings.push_back(std::string("skipped ") + name + ": " + e.what());
            std::cerr << "warning: skipped " << path << ": " << e.what() << "\n";
        }
    }
    if (imgs.empty()) throw format_error(dir + ": no readable images");
    const int h = imgs[0].height, w = imgs[0].width;
    for (size_t i = 1; i < imgs.size(); ++i)
        if (imgs[i].height != h || imgs[i].width != w)
            throw format_error(dir + ": images disagree on dims; set target dims to resize");

    const int n = static_cast<int>(imgs.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(split_seed(p.seed, 0x5917u));
    rng.shuffle(order);
    int n_train = static_cast<int>(std::llround(n * p.split_ratio));
    n_train = std::clamp(n_train, 0, n);
    if (n_train == 0 && n > 0 && p.split_ratio > 0) n_train = 1;
    if (n_train == n && p.split_ratio < 1)
        warnings.push_back("test split is empty (" + std::to_string(n) + " images, ratio " +
                           std::to_string(p.split_ratio) + ")");

    auto build = [&](int lo, int hi, const char* split) {
        Dataset ds;
        ds.split = split;
        ds.images = Tensor4f(hi - lo, p.channels, h, w);
        for (int i = lo; i < hi; ++i) {
            const Image& im = imgs[order[i]];
            std::copy(im.pixels.begin(), im.pixels.end(), ds.images.plane(i - lo, 0));
        }
        json params = {{"target_h", h},          {"target_w", w},
                       {"channels", p.channels}, {"split_ratio", p.split_ratio},
                       {"seed", p.seed},         {"split", split}};
        ds.provenance.source = dir;
        ds.provenance.params_json = params.dump();
        ds.provenance.warnings = warnings;
        ds.provenance.fingerprint = fnv1a64(dir + "|" + ds.provenance.params_json);
        return ds;
    };
    Dataset train = build(0, n_train, "train");
    Dataset test = build(n_train, n, "test");
    if (test.count() == 0)
        std::cerr << "warning: " << dir << ": test split is empty\n";
    return {std::move(train), std::move(test)};
}

// ---- synthetic ----

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.dicts.empty()) throw param_error("generate_synthetic: no dictionaries");
    if (spec.n_images < 0) throw param_error("generate_synthetic: n_images must be >= 0");
    const ConvDict& top = spec.dicts.back();
    const size_t code_slots = static_cast<size_t>(top.n_features()) * spec.code_h * spec.code_w;
    if (spec.active_atoms < 0 || static_cast<size_t>(spec.active_atoms) > code_slots)
        throw param_error("generate_synthetic: active_atoms " + std::to_string(spec.active_atoms) +
                          " exceeds code capacity " + std::to_string(code_slots));

    Rng rng(split_seed(spec.seed, 0x57A7u));
    SyntheticData out;
    out.true_codes = Tensor4f(spec.n_images, top.n_features(), spec.code_h, spec.code_w);
    for (int img = 0; img < spec.n_images; ++img) {
        // Sample distinct flat positions.
        std::vector<size_t> picked;
        while (static_cast<int>(picked.size()) < spec.active_atoms) {
            const size_t pos = rng.below(code_slots);
            if (std::find(picked.begin(), picked.end(), pos) == picked.end())
                picked.push_back(pos);
        }
        float* dst = out.true_codes.plane(img, 0);
        for (size_t pos : picked) dst[pos] = static_cast<float>(rng.uniform(0.5, 1.5));
    }

    // Cascade down through the dictionaries (top layer last in the list).
    Tensor4f cur = out.true_codes;
    out.layer_codes.assign(spec.dicts.size(), Tensor4f());
    out.layer_codes.back() = cur;
    for (int i = static_cast<int>(spec.dicts.size()) - 1; i >= 0; --i) {
        cur = decode(spec.dicts[i], cur);
        if (i > 0) out.layer_codes[i - 1] = cur;
    }
    if (spec.noise_std > 0)
        for (auto& v : cur.data) v += static_cast<float>(spec.noise_std * rng.normal());

    out.data.images = std::move(cur);
    out.data.split = "train";
    json params = {{"layers", spec.dicts.size()},   {"active_atoms", spec.active_atoms},
                   {"noise_std", spec.noise_std},   {"n_images", spec.n_images},
                   {"seed", spec.seed},             {"code_h", spec.code_h},
                   {"code_w", spec.code_w}};
    out.data.provenance.source = "synthetic";
    out.data.provenance.params_json = params.dump();
    out.data.provenance.fingerprint = fnv1a64("synthetic|" + out.data.provenance.params_json);
    return out;
}

// ---- cache ----

namespace {

void put_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw format_error(path + ": truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw format_error(path + ": cannot open for writing");
    os.write("HSD1", 4);
    for (int d : ds.images.dims) put_u32le(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(ds.images.ptr()),
             static_cast<std::streamsize>(ds.images.size() * sizeof(float)));
    put_u32le(os, static_cast<uint32_t>(ds.labels.size()));
    for (int l : ds.labels) put_u32le(os, static_cast<uint32_t>(l));
    json j = {{"source", ds.provenance.source},
              {"params", ds.provenance.params_json},
              {"fingerprint", ds.provenance.fingerprint},
              {"lcn_applied", ds.provenance.lcn_applied},
              {"whitened", ds.provenance.whitened},
              {"warnings", ds.provenance.warnings},
              {"split", ds.split}};
    const std::string s = j.dump();
    put_u32le(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!os) throw format_error(path + ": write failed");
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error(path + ": cannot open");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "HSD1", 4) != 0)
        throw format_error(path + ": bad magic (expected HSD1)");
    int dims[4];
    for (int& d : dims) d = static_cast<int>(get_u32le(is, path));
    Dataset ds;
    ds.images = Tensor4f(dims[0], dims[1], dims[2], dims[3]);
    if (!is.read(reinterpret_cast<char*>(ds.images.ptr()),
                 static_cast<std::streamsize>(ds.images.size() * sizeof(float))))
        throw format_error(path + ": truncated payload");
    const uint32_t nlabels = get_u32le(is, path);
    ds.labels.resize(nlabels);
    for (auto& l : ds.labels) l = static_cast<int>(get_u32le(is, path));
    const uint32_t jlen = get_u32le(is, path);
    std::string s(jlen, '\0');
    if (!is.read(s.data(), jlen)) throw format_error(path + ": truncated provenance");
    const json j = json::parse(s, nullptr, false);
    if (j.is_discarded()) throw format_error(path + ": corrupt provenance JSON");
    ds.provenance.source = j.value("source", "");
    ds.provenance.params_json = j.value("params", "{}");
    ds.provenance.fingerprint = j.value("fingerprint", 0ULL);
    ds.provenance.lcn_applied = j.value("lcn_applied", false);
    ds.provenance.whitened = j.value("whitened", false);
    ds.provenance.warnings = j.value("warnings", std::vector<std::string>{});
    ds.split = j.value("split", "");
    return ds;
}

} // namespace hsc
