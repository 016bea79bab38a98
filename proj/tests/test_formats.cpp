#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "hsc/checkpoint.hpp"
#include "hsc/config.hpp"
#include "hsc/csv.hpp"
#include "hsc/learner.hpp"
#include "test_util.hpp"

using namespace hsc;
using namespace hsc::test;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

NetworkState sample_state() {
    NetworkSpec spec;
    LayerSpec l1;
    l1.n_features = 3;
    l1.k_h = l1.k_w = 3;
    l1.stride = 2;
    l1.lambda = 0.21f;
    l1.eta_learn = 0.05f;
    LayerSpec l2;
    l2.n_features = 5;
    l2.k_h = l2.k_w = 2;
    l2.stride = 1;
    l2.lambda = 0.33f;
    l2.eta_learn = 0.01f;
    spec.layers = {l1, l2};
    auto st = init_state(spec, 1, 11, 11, 77);
    st.epoch = 9;
    // Non-trivial momenta so the round trip covers them.
    Rng rng(78);
    for (auto& m : st.momenta)
        for (auto& v : m.data) v = static_cast<float>(rng.uniform(-1, 1));
    return st;
}

} // namespace

TEST_CASE("checkpoint: bit-exact round trip") {
    const fs::path dir = fs::temp_directory_path() / "hsc_ckpt_test";
    fs::create_directories(dir);
    const auto st = sample_state();
    const std::string p1 = (dir / "a.hsc").string();
    const std::string p2 = (dir / "b.hsc").string();
    save_checkpoint(p1, st);

    const auto back = load_checkpoint(p1, 11, 11);
    REQUIRE(back.layer_count() == 2);
    CHECK(back.seed == st.seed);
    CHECK(back.epoch == 9);
    CHECK(back.dicts[0].stride == 2);
    CHECK(back.lambdas[0] == st.lambdas[0]);
    CHECK(back.lambdas[1] == st.lambdas[1]);
    for (int i = 0; i < 2; ++i) {
        CHECK(std::memcmp(back.dicts[i].weights.ptr(), st.dicts[i].weights.ptr(),
                          st.dicts[i].weights.size() * sizeof(float)) == 0);
        CHECK(std::memcmp(back.momenta[i].ptr(), st.momenta[i].ptr(),
                          st.momenta[i].size() * sizeof(float)) == 0);
        CHECK(back.eta_c[i] == st.eta_c[i]);
    }

    save_checkpoint(p2, back);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint: corrupt inputs") {
    const fs::path dir = fs::temp_directory_path() / "hsc_ckpt_bad";
    fs::create_directories(dir);
    const std::string bad = (dir / "bad.hsc").string();
    std::ofstream(bad, std::ios::binary) << "NOPE then some bytes";
    try {
        load_checkpoint(bad);
        FAIL("expected format_error");
    } catch (const format_error& e) {
        CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    }

    // Truncated file.
    const auto st = sample_state();
    const std::string full = (dir / "full.hsc").string();
    save_checkpoint(full, st);
    const std::string data = slurp(full);
    const std::string cut = (dir / "cut.hsc").string();
    std::ofstream(cut, std::ios::binary) << data.substr(0, data.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(cut), format_error);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.hsc").string()), format_error);
    fs::remove_all(dir);
}

TEST_CASE("range shorthand parsing") {
    const auto r = parse_range_list("0.1:0.3::0.05");
    REQUIRE(r.size() == 5);
    CHECK(r[0] == doctest::Approx(0.1f));
    CHECK(r[1] == doctest::Approx(0.15f));
    CHECK(r[2] == doctest::Approx(0.2f));
    CHECK(r[3] == doctest::Approx(0.25f));
    CHECK(r[4] == doctest::Approx(0.3f));

    const auto single = parse_range_list("0.5");
    REQUIRE(single.size() == 1);
    CHECK(single[0] == doctest::Approx(0.5f));

    CHECK_THROWS_AS(parse_range_list("0.1:0.3"), config_error);
    CHECK_THROWS_AS(parse_range_list("0.3:0.1::0.05"), config_error);
    CHECK_THROWS_AS(parse_range_list("abc"), config_error);
}

TEST_CASE("run config: parsing, axis shorthand, echo determinism") {
    const fs::path dir = fs::temp_directory_path() / "hsc_cfg_test";
    fs::create_directories(dir);
    const std::string path = (dir / "cfg.json").string();
    std::ofstream(path) << R"({
      "network": {
        "layers": [
          {"features": 32, "kernel": [5, 5], "stride": 2, "lambda": 0.2, "eta_learn": 0.05},
          {"features": 64, "kernel": 5, "stride": 1, "lambda": 0.3, "eta_learn": 0.001}
        ],
        "t_stab": 5e-4,
        "max_iters": 400
      },
      "training": {"epochs": 10, "batch_size": 32, "mode": "spc", "seed": 42},
      "data": {"train": "train.hsd", "test": "test.hsd"},
      "sweep": {"lambda1": ["0.15:0.25::0.05"], "lambda2": [0.25, "0.3:0.35::0.05"], "seeds": [1, 2, 3]},
      "output": {"dir": "out"}
    })";

    const auto cfg = load_run_config(path);
    REQUIRE(cfg.network.layers.size() == 2);
    CHECK(cfg.network.layers[0].n_features == 32);
    CHECK(cfg.network.layers[0].stride == 2);
    CHECK(cfg.network.layers[1].k_w == 5);
    CHECK(cfg.network.t_stab == doctest::Approx(5e-4f));
    CHECK(cfg.network.max_iters == 400);
    CHECK(cfg.network.epochs == 10);
    CHECK(cfg.network.mode == Mode::Spc);
    CHECK(cfg.network.seed == 42);
    CHECK(cfg.train_path == "train.hsd");
    REQUIRE(cfg.lambda1_list.size() == 3);
    REQUIRE(cfg.lambda2_list.size() == 3);
    CHECK(cfg.lambda2_list[0] == doctest::Approx(0.25f));
    CHECK(cfg.lambda2_list[2] == doctest::Approx(0.35f));
    REQUIRE(cfg.sweep_seeds.size() == 3);
    CHECK(cfg.out_dir == "out");

    CHECK(config_echo(cfg) == config_echo(cfg));

    std::ofstream((dir / "bad.json").string()) << "{ not json";
    CHECK_THROWS_AS(load_run_config((dir / "bad.json").string()), config_error);
    std::ofstream((dir / "empty.json").string()) << "{}";
    CHECK_THROWS_AS(load_run_config((dir / "empty.json").string()), config_error);
    fs::remove_all(dir);
}

TEST_CASE("csv writer: 9 significant digits, stable layout") {
    const fs::path dir = fs::temp_directory_path() / "hsc_csv_test";
    fs::create_directories(dir);
    const std::string path = (dir / "t.csv").string();
    {
        CsvWriter csv(path);
        csv.header({"a", "b", "c"});
        csv.field(1.0 / 3.0);
        csv.field(static_cast<long long>(42));
        csv.field("x");
        csv.end_row();
    }
    CHECK(slurp(path) == "a,b,c\n0.333333333,42,x\n");
    fs::remove_all(dir);
}

TEST_CASE("network spec validation errors") {
    NetworkSpec spec;
    CHECK_THROWS_AS(spec.validate(1), config_error); // no layers

    LayerSpec l;
    l.n_features = 4;
    l.k_h = l.k_w = 3;
    l.stride = 1;
    spec.layers = {l};
    spec.t_stab = 0;
    CHECK_THROWS_AS(spec.validate(1), config_error);
    spec.t_stab = 1e-4f;
    spec.epochs = 0;
    CHECK_THROWS_AS(spec.validate(1), config_error);
    spec.epochs = 1;
    spec.layers[0].lambda = -0.5f;
    CHECK_THROWS_AS(spec.validate(1), config_error);
    spec.layers[0].lambda = 0.1f;
    spec.validate(3);
    CHECK(spec.layers[0].in_channels == 3);
}
