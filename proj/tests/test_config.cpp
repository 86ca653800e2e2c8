#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>

#include "rytof/config.hpp"

using namespace rytof;

TEST_CASE("defaults validate and hash deterministically") {
    RunConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.hash() == RunConfig().hash());
    RunConfig other;
    other.seed = 2;
    CHECK(other.hash() != cfg.hash());
}

TEST_CASE("paper preset reproduces the published operating point") {
    const RunConfig cfg = RunConfig::paper_preset();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.cal_field_V_per_m == doctest::Approx(5020.0));
    // U spans 0.5 to 2.0 eV across the 300 um lens range
    const auto cal = cfg.series_config().calibration;
    CHECK(cal.energy_V(cfg.lens_start_m) == doctest::Approx(0.5).epsilon(1e-6));
    const auto lens = cfg.lens_positions();
    CHECK(cal.energy_V(lens.back()) == doctest::Approx(2.0).epsilon(0.01));
    // production-volume 2 sigma width of 21 um
    CHECK(cfg.series_config().volume.width_2sigma_m() == doctest::Approx(21e-6).epsilon(1e-9));
}

TEST_CASE("text round trip") {
    RunConfig cfg = RunConfig::paper_preset();
    cfg.seed = 77;
    cfg.out_dir = "elsewhere";
    const RunConfig back = RunConfig::from_text(cfg.canonical_text());
    CHECK(back.hash() == cfg.hash());
    CHECK(back.seed == 77);
    CHECK(back.out_dir == "elsewhere");
}

TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(RunConfig::from_text("nonsense_key = 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_text("ensemble.temperature_K = -1\n").validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_text("calibration.offset_source = sometimes\n").validate(),
                    std::invalid_argument);
}

TEST_CASE("file round trip") {
    const char* path = "config_roundtrip.txt";
    RunConfig cfg = RunConfig::paper_preset();
    cfg.n_atoms = 1234;
    cfg.write_file(path);
    const RunConfig back = RunConfig::from_file(path);
    std::remove(path);
    CHECK(back.n_atoms == 1234);
    CHECK(back.hash() == cfg.hash());
}

TEST_CASE("lens grid construction") {
    RunConfig cfg;
    cfg.lens_start_m = 10e-6;
    cfg.lens_step_m = 20e-6;
    cfg.lens_count = 4;
    const auto lens = cfg.lens_positions();
    REQUIRE(lens.size() == 4);
    CHECK(lens[0] == doctest::Approx(10e-6));
    CHECK(lens[3] == doctest::Approx(70e-6));
}
