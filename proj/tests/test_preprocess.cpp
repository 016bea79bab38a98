#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "hsc/image_io.hpp"
#include "hsc/learner.hpp"
#include "hsc/preprocess.hpp"
#include "test_util.hpp"

using namespace hsc;
using namespace hsc::test;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& n) const { return (path / n).string(); }
};

} // namespace

TEST_CASE("lcn: constant image maps to zero; parameter validation") {
    Tensor4f img(1, 1, 16, 16);
    img.fill(0.7f);
    const auto out = lcn(img, 9, 1e-3f);
    for (float v : out.data) CHECK(std::fabs(v) <= 1e-5f);

    CHECK_THROWS_AS(lcn(img, 8, 1e-3f), param_error);  // even window
    CHECK_THROWS_AS(lcn(img, 17, 1e-3f), param_error); // larger than image
    CHECK_THROWS_AS(lcn(img, 9, 0.0f), param_error);
}

TEST_CASE("lcn: invariant to affine rescaling away from the epsilon floor") {
    Rng rng(51);
    auto img = random_tensor<float>(rng, 1, 1, 20, 20, 0.0, 1.0);
    const int window = 9;
    const float eps = 1e-3f;
    const auto base = lcn(img, window, eps);

    Tensor4f scaled(1, 1, 20, 20);
    for (size_t i = 0; i < img.size(); ++i) scaled.data[i] = 3.0f * img.data[i] + 0.25f;
    const auto rescaled = lcn(scaled, window, eps);

    // Compare where the local contrast is comfortably above the floor; the
    // random texture keeps almost every pixel there.
    int compared = 0;
    for (size_t i = 0; i < base.size(); ++i) {
        if (std::fabs(base.data[i]) > 0.05f) {
            CHECK(std::fabs(base.data[i] - rescaled.data[i]) <=
                  1e-5f * std::max(1.0f, std::fabs(base.data[i])));
            ++compared;
        }
    }
    CHECK(compared > 100);
}

TEST_CASE("lcn: single bright pixel yields positive center and negative ring") {
    Tensor4f img(1, 1, 9, 9);
    img.at(0, 0, 4, 4) = 1.0f;
    const auto out = lcn(img, 5, 1e-2f);
    CHECK(out.at(0, 0, 4, 4) > 0.0f);
    // Ring neighbours see a positive local mean but hold zero themselves.
    CHECK(out.at(0, 0, 4, 3) < 0.0f);
    CHECK(out.at(0, 0, 3, 4) < 0.0f);
    // Far corner is outside the window: exactly unaffected.
    CHECK(out.at(0, 0, 0, 0) == 0.0f);
}

TEST_CASE("lcn: residual local mean is small relative to input scale") {
    Rng rng(52);
    const auto img = random_tensor<float>(rng, 1, 1, 24, 24, 0.0, 1.0);
    const auto out = lcn(img, 9, 1e-3f);
    // One more subtractive pass measures the Gaussian-weighted local mean of
    // the output; it shrinks well below the unit-variance output scale but is
    // not exactly zero for general inputs.
    const auto remean = lcn(out, 9, 1e9f); // huge epsilon: pure mean subtraction
    double max_mean = 0;
    for (size_t i = 0; i < out.size(); ++i)
        max_mean = std::max(max_mean, std::fabs(out.data[i] - remean.data[i] * 1e9));
    CHECK(max_mean < 0.8);
}

TEST_CASE("whiten: DC is killed, double application is guarded") {
    Dataset ds;
    ds.images = Tensor4f(1, 1, 16, 16);
    ds.images.fill(0.5f);
    const auto op = fit_whitening(ds, WhitenParams{});
    const auto out = whiten_apply(op, ds.images);
    for (float v : out.data) CHECK(std::fabs(v) <= 1e-5f);

    apply_whitening(ds, op);
    CHECK(ds.provenance.whitened);
    CHECK_THROWS_AS(apply_whitening(ds, op), param_error);

    Dataset tiny;
    tiny.images = Tensor4f(1, 1, 1, 1);
    CHECK_THROWS_AS(fit_whitening(tiny, WhitenParams{}), param_error);
}

TEST_CASE("whiten: filter is not idempotent") {
    Rng rng(53);
    Dataset ds;
    ds.images = random_tensor<float>(rng, 1, 1, 16, 16);
    const auto op = fit_whitening(ds, WhitenParams{});
    const auto once = whiten_apply(op, ds.images);
    const auto twice = whiten_apply(op, once);
    double diff = 0, scale = 0;
    for (size_t i = 0; i < once.size(); ++i) {
        diff = std::max(diff, std::fabs(static_cast<double>(once.data[i]) - twice.data[i]));
        scale = std::max(scale, std::fabs(static_cast<double>(once.data[i])));
    }
    CHECK(diff > 0.05 * scale);
}

TEST_CASE("whiten: mid-frequency spectrum of smooth images flattens") {
    // Natural-image stand-in: 1/f-ish smooth random fields.
    Rng rng(54);
    const int n = 16, hw = 32;
    Tensor4f imgs(n, 1, hw, hw);
    for (int i = 0; i < n; ++i) {
        // Sum of random low-frequency cosines plus light noise.
        std::vector<double> fy(6), fx(6), ph(6), amp(6);
        for (int k = 0; k < 6; ++k) {
            fy[k] = rng.uniform(0.02, 0.45);
            fx[k] = rng.uniform(0.02, 0.45);
            ph[k] = rng.uniform(0, 6.283);
            amp[k] = 1.0 / (fy[k] + fx[k] + 0.05);
        }
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                double v = 0;
                for (int k = 0; k < 6; ++k)
                    v += amp[k] * std::cos(6.283 * (fy[k] * y + fx[k] * x) + ph[k]);
                imgs.at(i, 0, y, x) = static_cast<float>(v + 0.1 * rng.normal());
            }
    }
    Dataset ds;
    ds.images = imgs;
    const auto op = fit_whitening(ds, WhitenParams{});
    const auto white = whiten_apply(op, imgs);

    // Radially averaged power in mid-frequency bands via plain DFT rows.
    auto band_power = [&](const Tensor4f& t, double flo, double fhi) {
        double acc = 0;
        int count = 0;
        for (int ky = 0; ky < hw; ++ky)
            for (int kx = 0; kx < hw / 2; ++kx) {
                const double gy = (ky <= hw / 2 ? ky : ky - hw) / static_cast<double>(hw);
                const double gx = kx / static_cast<double>(hw);
                const double r = std::sqrt(gy * gy + gx * gx);
                if (r < flo || r > fhi) continue;
                for (int i = 0; i < n; ++i) {
                    double re = 0, im = 0;
                    for (int y = 0; y < hw; ++y)
                        for (int x = 0; x < hw; ++x) {
                            const double a = -6.28318530718 * (gy * y + gx * x);
                            re += t.at(i, 0, y, x) * std::cos(a);
                            im += t.at(i, 0, y, x) * std::sin(a);
                        }
                    acc += re * re + im * im;
                    ++count;
                }
            }
        return acc / std::max(1, count);
    };
    const double low = band_power(white, 0.08, 0.16);
    const double mid = band_power(white, 0.16, 0.24);
    const double ratio = low / mid;
    CHECK(ratio < 2.0);
    CHECK(ratio > 0.5);

    // The raw images are visibly steeper across the same bands.
    const double raw_ratio = band_power(imgs, 0.08, 0.16) / band_power(imgs, 0.16, 0.24);
    CHECK(raw_ratio > 2.0);
}

TEST_CASE("idx: round-trip, official-style headers, error offsets") {
    TempDir tmp("hsc_idx_test");
    Rng rng(55);
    Tensor4f imgs(7, 1, 9, 11);
    for (auto& v : imgs.data) v = static_cast<float>(rng.below(256)) / 255.0f;
    write_idx_images(tmp.file("imgs.idx"), imgs);
    std::vector<int> labels = {0, 1, 2, 3, 4, 5, 9};
    write_idx_labels(tmp.file("labels.idx"), labels);

    const Dataset ds = load_idx(tmp.file("imgs.idx"), tmp.file("labels.idx"));
    CHECK(ds.count() == 7);
    CHECK(ds.images.dims[2] == 9);
    CHECK(ds.images.dims[3] == 11);
    CHECK(ds.labels == labels);
    for (size_t i = 0; i < imgs.size(); ++i) CHECK(ds.images.data[i] == imgs.data[i]);

    // Bit-exact via a second write.
    write_idx_images(tmp.file("imgs2.idx"), ds.images);
    std::ifstream a(tmp.file("imgs.idx"), std::ios::binary);
    std::ifstream b(tmp.file("imgs2.idx"), std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);

    // Wrong magic reports the offset.
    {
        std::ofstream bad(tmp.file("bad.idx"), std::ios::binary);
        const unsigned char b4[4] = {0, 0, 8, 4};
        bad.write(reinterpret_cast<const char*>(b4), 4);
    }
    try {
        load_idx(tmp.file("bad.idx"));
        FAIL("expected format_error");
    } catch (const format_error& e) {
        CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
    }

    // Truncation reports the payload offset.
    {
        std::ifstream src(tmp.file("imgs.idx"), std::ios::binary);
        std::string head(16 + 9 * 11 * 3 + 5, '\0');
        src.read(head.data(), static_cast<std::streamsize>(head.size()));
        std::ofstream trunc(tmp.file("trunc.idx"), std::ios::binary);
        trunc.write(head.data(), static_cast<std::streamsize>(head.size()));
    }
    CHECK_THROWS_AS(load_idx(tmp.file("trunc.idx")), format_error);
}

TEST_CASE("image dir loader: alphabetical determinism, split policy, skip warnings") {
    TempDir tmp("hsc_imgdir_test");
    Rng rng(56);
    for (int i = 0; i < 10; ++i) {
        Image img;
        img.channels = 1;
        img.height = 12;
        img.width = 10;
        img.pixels.resize(120);
        for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
        write_image(tmp.file("img_" + std::to_string(i) + ".pgm"), img);
    }
    std::ofstream(tmp.file("notes.txt")) << "not an image";

    ImageDirParams p;
    p.target_h = 8;
    p.target_w = 8;
    p.channels = 1;
    p.split_ratio = 0.7;
    p.seed = 9;
    auto [train1, test1] = load_image_dir(tmp.path.string(), p);
    CHECK(train1.count() == 7);
    CHECK(test1.count() == 3);
    CHECK(train1.images.dims[2] == 8);
    bool warned = false;
    for (const auto& w : train1.provenance.warnings)
        if (w.find("notes.txt") != std::string::npos) warned = true;
    CHECK(warned);

    auto [train2, test2] = load_image_dir(tmp.path.string(), p);
    CHECK(std::memcmp(train1.images.ptr(), train2.images.ptr(),
                      train1.images.size() * sizeof(float)) == 0);

    // Single image at ratio 0.5: train takes it, test is empty.
    TempDir one("hsc_imgdir_one");
    Image solo;
    solo.channels = 1;
    solo.height = 6;
    solo.width = 6;
    solo.pixels.assign(36, 0.5f);
    write_image(one.file("only.pgm"), solo);
    ImageDirParams p1;
    p1.channels = 1;
    p1.split_ratio = 0.5;
    auto [t1, t2] = load_image_dir(one.path.string(), p1);
    CHECK(t1.count() == 1);
    CHECK(t2.count() == 0);

    TempDir empty("hsc_imgdir_empty");
    CHECK_THROWS_AS(load_image_dir(empty.path.string(), p1), format_error);
}

TEST_CASE("synthetic generator: determinism, zero activity, capacity guard") {
    Rng rng(57);
    SyntheticSpec spec;
    auto d = random_dict<float>(rng, 6, 1, 3, 1);
    Rng dead(5);
    normalize_atoms(d, dead);
    spec.dicts.push_back(d);
    spec.code_h = spec.code_w = 5;
    spec.active_atoms = 2;
    spec.noise_std = 0.01f;
    spec.n_images = 12;
    spec.seed = 42;

    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(std::memcmp(a.data.images.ptr(), b.data.images.ptr(),
                      a.data.images.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(a.true_codes.ptr(), b.true_codes.ptr(),
                      a.true_codes.size() * sizeof(float)) == 0);
    for (int img = 0; img < 12; ++img) {
        int active = 0;
        const float* c = a.true_codes.plane(img, 0);
        for (size_t i = 0; i < a.true_codes.size() / 12; ++i) active += c[i] > 0;
        CHECK(active == 2);
    }

    spec.active_atoms = 0;
    spec.noise_std = 0;
    const auto zero = generate_synthetic(spec);
    for (float v : zero.data.images.data) CHECK(v == 0.0f);

    spec.active_atoms = 6 * 5 * 5 + 1;
    CHECK_THROWS_AS(generate_synthetic(spec), param_error);
}

TEST_CASE("dataset cache round-trips tensors, labels and provenance") {
    TempDir tmp("hsc_cache_test");
    Rng rng(58);
    Dataset ds;
    ds.images = random_tensor<float>(rng, 5, 2, 6, 7);
    ds.labels = {1, 2, 3, 4, 5};
    ds.split = "train";
    ds.provenance.source = "unit-test";
    ds.provenance.params_json = "{\"k\":1}";
    ds.provenance.lcn_applied = true;
    ds.provenance.fingerprint = fnv1a64("unit-test|{\"k\":1}");
    ds.provenance.warnings = {"w1"};
    save_dataset(tmp.file("ds.hsd"), ds);

    const Dataset back = load_dataset(tmp.file("ds.hsd"));
    CHECK(back.count() == 5);
    CHECK(back.images.dims == ds.images.dims);
    CHECK(std::memcmp(back.images.ptr(), ds.images.ptr(), ds.images.size() * sizeof(float)) ==
          0);
    CHECK(back.labels == ds.labels);
    CHECK(back.split == "train");
    CHECK(back.provenance.lcn_applied);
    CHECK_FALSE(back.provenance.whitened);
    CHECK(back.provenance.fingerprint == ds.provenance.fingerprint);
    CHECK(back.provenance.warnings == ds.provenance.warnings);

    // LCN guard survives the round trip.
    Dataset guard = back;
    CHECK_THROWS_AS(apply_lcn(guard, LcnParams{}), param_error);

    std::ofstream(tmp.file("junk.hsd"), std::ios::binary) << "JUNKJUNKJUNK";
    CHECK_THROWS_AS(load_dataset(tmp.file("junk.hsd")), format_error);
}

TEST_CASE("image io: pgm/ppm/png round-trips and bilinear resize") {
    TempDir tmp("hsc_imgio_test");
    Rng rng(59);
    Image img;
    img.channels = 3;
    img.height = 11;
    img.width = 13;
    img.pixels.resize(3 * 11 * 13);
    for (auto& v : img.pixels) v = static_cast<float>(rng.below(256)) / 255.0f;

    for (const char* name : {"a.ppm", "a.png"}) {
        write_image(tmp.file(name), img);
        const Image back = read_image(tmp.file(name));
        REQUIRE(back.channels == 3);
        REQUIRE(back.height == 11);
        REQUIRE(back.width == 13);
        for (size_t i = 0; i < img.pixels.size(); ++i)
            CHECK(std::fabs(back.pixels[i] - img.pixels[i]) <= 1.0f / 255.0f);
    }

    const Image gray = convert_channels(img, 1);
    write_image(tmp.file("g.pgm"), gray);
    const Image gback = read_image(tmp.file("g.pgm"));
    CHECK(gback.channels == 1);

    // Constant image stays constant under resize.
    Image flat;
    flat.channels = 1;
    flat.height = 7;
    flat.width = 9;
    flat.pixels.assign(63, 0.25f);
    const Image up = resize_bilinear(flat, 15, 20);
    for (float v : up.pixels) CHECK(v == doctest::Approx(0.25f));
}
