#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "mugs/io/config.hpp"

using namespace mugs;

namespace {

std::string msg_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("an empty config yields the documented defaults") {
    Config cfg = Config::parse_text("", "empty.ini");
    RunConfig rc = load_run_config(cfg);
    REQUIRE(rc.data.scenes == 50);
    REQUIRE(rc.data.width == 64);
    REQUIRE(rc.data.height == 64);
    REQUIRE(rc.data.n_sources == 2);
    REQUIRE(rc.data.baseline == BaselineMode::Small);
    REQUIRE_FALSE(rc.data.occluder);
    REQUIRE(rc.model.d_coarse == 64);
    REQUIRE(rc.model.d_fine == 16);
    REQUIRE(rc.model.use_mono);
    REQUIRE(rc.model.use_refine);
    REQUIRE(rc.model.n_sources == 2);
    REQUIRE(rc.train.lr == 1e-3);
    REQUIRE(rc.train.reference_views);
}

TEST_CASE("file values override defaults and flags override the file") {
    const std::string text =
        "# experiment\n"
        "[data]\n"
        "scenes = 12\n"
        "baseline = large\n"
        "[train]\n"
        "iterations = 40\n"
        "lr = 0.01\n";
    Config cfg = Config::parse_text(text, "run.ini");
    cfg.set("train", "iterations", "80");  // command-line override
    RunConfig rc = load_run_config(cfg);
    REQUIRE(rc.data.scenes == 12);
    REQUIRE(rc.data.baseline == BaselineMode::Large);
    REQUIRE(rc.train.iterations == 80);
    REQUIRE(rc.train.lr == 0.01);
}

TEST_CASE("unknown keys are rejected with their position") {
    const std::string text =
        "[data]\n"
        "scenes = 4\n"
        "  typo_key = 9\n";
    Config cfg = Config::parse_text(text, "bad.ini");
    const std::string m = msg_of([&] { load_run_config(cfg); });
    REQUIRE(m.find("bad.ini:3:3") != std::string::npos);
    REQUIRE(m.find("data.typo_key") != std::string::npos);
}

TEST_CASE("keys outside any known section are rejected") {
    Config cfg = Config::parse_text("stray = 1\n", "s.ini");
    const std::string m = msg_of([&] { load_run_config(cfg); });
    REQUIRE(m.find("s.ini:1:1") != std::string::npos);
    REQUIRE(m.find("stray") != std::string::npos);
}

TEST_CASE("malformed lines name their location") {
    REQUIRE_THROWS_AS(Config::parse_text("[data]\nnot a pair\n", "m.ini"), ConfigError);
    const std::string m =
        msg_of([] { Config::parse_text("[data]\nnot a pair\n", "m.ini"); });
    REQUIRE(m.find("m.ini:2:1") != std::string::npos);
    REQUIRE_THROWS_AS(Config::parse_text("[data\n", "m.ini"), ConfigError);
    REQUIRE_THROWS_AS(Config::parse_text("= 3\n", "m.ini"), ConfigError);
}

TEST_CASE("typed getters validate their values") {
    auto load = [](const std::string& text) {
        Config cfg = Config::parse_text(text, "t.ini");
        return load_run_config(cfg);
    };
    REQUIRE_THROWS_AS(load("[data]\nscenes = many\n"), ConfigError);
    REQUIRE_THROWS_AS(load("[train]\nlr = fast\n"), ConfigError);
    REQUIRE_THROWS_AS(load("[model]\nuse_mono = maybe\n"), ConfigError);
    REQUIRE_THROWS_AS(load("[data]\nbaseline = huge\n"), ConfigError);
    REQUIRE_THROWS_AS(load("[data]\nseed = -3\n"), ConfigError);
    // Accepted boolean spellings.
    REQUIRE_FALSE(load("[model]\nuse_mono = off\n").model.use_mono);
    REQUIRE(load("[model]\nuse_refine = YES\n").model.use_refine);
}

TEST_CASE("range validation rejects unusable settings") {
    auto load = [](const std::string& text) {
        Config cfg = Config::parse_text(text, "r.ini");
        return load_run_config(cfg);
    };
    REQUIRE_THROWS_AS(load("[data]\nwidth = 30\n"), ConfigError);   // not divisible by 4
    REQUIRE_THROWS_AS(load("[data]\nn_sources = 1\n"), ConfigError);
    REQUIRE_THROWS_AS(load("[train]\nlr = 0\n"), ConfigError);
    REQUIRE_THROWS_AS(load("[train]\ncoarse_phase = 1.5\n"), ConfigError);
    REQUIRE_THROWS_AS(load("[data]\nscenes = -1\n"), ConfigError);
}

TEST_CASE("serialization round-trips every exposed field") {
    Config cfg = Config::parse_text(
        "[data]\nscenes = 7\nseed = 11\nwidth = 32\nheight = 32\nn_sources = 3\n"
        "baseline = large\noccluder = true\nmde_noise_sigma = 0.02\n"
        "[model]\nseed = 21\nd_coarse = 24\nd_fine = 8\nuse_mono = false\n"
        "[train]\niterations = 33\nlr = 0.002\ncosine = true\nreference_views = false\n"
        "coarse_phase = 0.25\nval_every = 5\ncheckpoint_every = 10\nseed = 31\n",
        "full.ini");
    RunConfig rc = load_run_config(cfg);
    const std::string text = serialize_run_config(rc);
    RunConfig back = load_run_config(Config::parse_text(text, "serialized.ini"));
    REQUIRE(serialize_run_config(back) == text);
    REQUIRE(back.data.scenes == 7);
    REQUIRE(back.data.n_sources == 3);
    REQUIRE(back.model.n_sources == 3);
    REQUIRE(back.data.baseline == BaselineMode::Large);
    REQUIRE(back.data.occluder);
    REQUIRE(back.model_seed == 21);
    REQUIRE(back.model.d_coarse == 24);
    REQUIRE_FALSE(back.model.use_mono);
    REQUIRE(back.train.iterations == 33);
    REQUIRE(back.train.cosine_schedule);
    REQUIRE_FALSE(back.train.reference_views);
    REQUIRE(back.train.seed == 31);
    REQUIRE(back.data.mde_noise_sigma == 0.02);
}

TEST_CASE("comments and blank lines are ignored") {
    const std::string text =
        "\n"
        "# full-line comment\n"
        "; alternative comment\n"
        "[data]\n"
        "\n"
        "scenes = 3\n";
    RunConfig rc = load_run_config(Config::parse_text(text, "c.ini"));
    REQUIRE(rc.data.scenes == 3);
}

TEST_CASE("missing config files raise a config error") {
    REQUIRE_THROWS_AS(Config::parse_file("/nonexistent/path/run.ini"), ConfigError);
}
