#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mugs/core/rng.hpp"
#include "mugs/train/eval.hpp"
#include "mugs/train/trainer.hpp"

using namespace mugs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

Tensor random_image(int c, int h, int w, uint64_t seed, float lo = 0.1f, float hi = 0.9f) {
    Rng rng(seed);
    std::vector<float> v(static_cast<size_t>(c) * h * w);
    for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return Tensor::from_data({c, h, w}, std::move(v));
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.n_sources = 2;
    c.d_coarse = 8;
    c.d_fine = 4;
    c.encoder.width1 = 6;
    c.encoder.width2 = 8;
    c.encoder.fine_channels = 6;
    c.encoder.coarse_channels = 8;
    c.mono.hidden = 4;
    c.mono.out_channels = 4;
    c.pooled_reg_channels = 4;
    c.pooled_head_channels = 8;
    c.reg_width = 4;
    c.unet.base = 4;
    c.unet.cue_channels = 4;
    c.refiner.key_dim = 8;
    c.refiner.value_dim = 4;
    c.head.hidden = 16;
    return c;
}

SceneSample tiny_scene(uint64_t seed) {
    GenConfig cfg;
    cfg.rig.width = 32;
    cfg.rig.height = 32;
    cfg.rig.n_sources = 2;
    return generate_scene_sample(seed, cfg);
}

}  // namespace

TEST_CASE("l1 loss matches hand values") {
    Tensor a = random_image(3, 8, 8, 42);
    REQUIRE(l1_loss(a, a).data()[0] == 0.0f);
    Tensor b = affine(a, 1.0f, 0.1f);  // constant offset
    REQUIRE(l1_loss(a, b).data()[0] == Catch::Approx(0.1).margin(1e-6));
}

TEST_CASE("structural similarity is exactly one for identical images") {
    Tensor a = random_image(3, 16, 16, 7);
    REQUIRE(ssim_mean(a, a).data()[0] == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(ssim_loss(a, a).data()[0] == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("tensor structural similarity agrees with the double-precision metric") {
    Tensor a = random_image(3, 18, 20, 11);
    Tensor b = random_image(3, 18, 20, 12);
    const double t = ssim_mean(a, b).data()[0];
    const double d = metrics::ssim(a.vec(), b.vec(), 3, 18, 20);
    REQUIRE(t == Catch::Approx(d).margin(1e-4));
    REQUIRE(t < 1.0);
}

TEST_CASE("gradient loss vanishes only for matching structure") {
    Tensor a = random_image(3, 12, 12, 3);
    REQUIRE(gradient_loss(a, a).data()[0] == 0.0f);
    Tensor b = random_image(3, 12, 12, 4);
    REQUIRE(gradient_loss(a, b).data()[0] > 0.0f);
    // A constant offset has identical finite differences.
    REQUIRE(gradient_loss(a, affine(a, 1.0f, 0.25f)).data()[0] == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("psnr has the pinned reference points") {
    std::vector<float> zeros(300, 0.0f);
    std::vector<float> tenth(300, 0.1f);
    REQUIRE(metrics::psnr(zeros, tenth) == Catch::Approx(20.0).margin(1e-5));
    REQUIRE(metrics::psnr(zeros, zeros) == 99.0);
    std::vector<float> tiny(300, 1e-6f);
    REQUIRE(metrics::psnr(zeros, tiny) == 99.0);  // cap
}

TEST_CASE("depth metrics follow the median-relative thresholds") {
    // Median of the valid entries {1,2,3,2} is 2; thresholds are 0.04 and 0.2.
    std::vector<float> gt = {1.0f, 2.0f, 3.0f, 0.0f, 2.0f};
    std::vector<float> pred = {1.03f, 2.0f, 3.5f, 9.0f, 2.1f};
    metrics::DepthMetrics m = metrics::depth_metrics(pred, gt);
    REQUIRE(m.valid == 4);
    REQUIRE(m.abs_err == Catch::Approx((0.03 + 0.0 + 0.5 + 0.1) / 4.0).margin(1e-6));
    REQUIRE(m.acc_2 == Catch::Approx(0.5).margin(1e-9));
    REQUIRE(m.acc_10 == Catch::Approx(0.75).margin(1e-9));
}

TEST_CASE("candidate resampling reproduces the uniform reference case") {
    // Uniform mass over [1,5] in 4 bins must put the 4 fine candidates at the
    // quartile midpoints 1.5, 2.5, 3.5, 4.5.
    Tensor prob = Tensor::from_data({4, 1, 1}, {0.25f, 0.25f, 0.25f, 0.25f});
    std::vector<float> cand = resample_candidates(prob, 1.0, 5.0, 4, 1, 1);
    REQUIRE(cand.size() == 4);
    REQUIRE(cand[0] == Catch::Approx(1.5).margin(1e-6));
    REQUIRE(cand[1] == Catch::Approx(2.5).margin(1e-6));
    REQUIRE(cand[2] == Catch::Approx(3.5).margin(1e-6));
    REQUIRE(cand[3] == Catch::Approx(4.5).margin(1e-6));
}

TEST_CASE("candidate resampling concentrates where the mass is") {
    // All mass in bin [2,3) of [0,4): every fine candidate lies inside it.
    Tensor prob = Tensor::from_data({4, 1, 1}, {0.0f, 0.0f, 1.0f, 0.0f});
    std::vector<float> cand = resample_candidates(prob, 0.0, 4.0, 4, 1, 1);
    for (int i = 0; i < 4; ++i) {
        REQUIRE(cand[i] >= 2.0f);
        REQUIRE(cand[i] <= 3.0f);
        REQUIRE(cand[i] == Catch::Approx(2.0 + (i + 0.5) / 4.0).margin(1e-6));
    }
}

TEST_CASE("candidate resampling stays in range and ordered on random rays") {
    const int dc = 6, hc = 10, wc = 10, df = 5, h = 40, w = 40;
    Rng rng(99);
    std::vector<float> pv(static_cast<size_t>(dc) * hc * wc);
    for (float& v : pv) v = rng.uniform() < 0.3 ? 0.0f : static_cast<float>(rng.uniform());
    // Zero out some whole rays to exercise the dead-ray fallback.
    for (int r = 0; r < 12; ++r) {
        const int yc = static_cast<int>(rng.uniform_int(hc));
        const int xc = static_cast<int>(rng.uniform_int(wc));
        for (int k = 0; k < dc; ++k) pv[(static_cast<size_t>(k) * hc + yc) * wc + xc] = 0.0f;
    }
    const double zmin = 0.7, zmax = 3.1;
    std::vector<float> cand =
        resample_candidates(Tensor::from_data({dc, hc, wc}, std::move(pv)), zmin, zmax, df, h, w);
    REQUIRE(cand.size() == static_cast<size_t>(df) * h * w);
    int rays = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            ++rays;
            float prev = -1.0f;
            for (int i = 0; i < df; ++i) {
                const float z = cand[(static_cast<size_t>(i) * h + y) * w + x];
                REQUIRE(z >= static_cast<float>(zmin));
                REQUIRE(z <= static_cast<float>(zmax));
                REQUIRE(z >= prev);
                prev = z;
            }
        }
    }
    REQUIRE(rays >= 1000);
}

TEST_CASE("grid depth sampling picks the cell-center pixel") {
    std::vector<float> full(16);
    for (int i = 0; i < 16; ++i) full[i] = static_cast<float>(i);
    std::vector<float> got = sample_grid_depth(full, 4, 4, 2);
    REQUIRE(got == std::vector<float>{5.0f, 7.0f, 13.0f, 15.0f});
    REQUIRE(sample_grid_depth(full, 4, 4, 1) == full);
}

TEST_CASE("adam takes a near-unit first step scaled by the learning rate") {
    ParamStore ps;
    Tensor x = Tensor::param({1}, {1.0f});
    ps.add("x", x);
    Adam opt(ps, AdamConfig{1e-3});
    x.node()->grad = {0.5f};
    opt.step();
    // First step: m-hat = g, v-hat = g^2, so the update is lr * g / (|g| + eps).
    REQUIRE(x.data()[0] == Catch::Approx(1.0 - 1e-3).margin(1e-7));
    x.node()->grad = {0.5f};
    opt.step();
    REQUIRE(x.data()[0] < 1.0 - 1.9e-3);  // keeps moving in the same direction
    REQUIRE(opt.iterations() == 2);
}

TEST_CASE("the non-finite guard names the producing op") {
    Tensor x = Tensor::param({1}, {1.0f});
    Tensor z = Tensor::from_data({1}, {0.0f});
    Tensor bad = div(x, z);
    REQUIRE(first_non_finite_op(sum_all(bad)) == "div");
}

TEST_CASE("model variants register parameters per their flags") {
    ModelConfig cfg = tiny_config();
    MugsModel full = MugsModel::create(cfg, 5);
    cfg.use_refine = false;
    MugsModel no_refine = MugsModel::create(cfg, 5);
    cfg.use_refine = true;
    cfg.use_mono = false;
    MugsModel no_mono = MugsModel::create(cfg, 5);
    REQUIRE(full.params.size() > no_refine.params.size());
    REQUIRE(full.params.size() > no_mono.params.size());
    // Two sources give a single pair weight, initialised to one.
    REQUIRE(full.params.find("coarse.pair_w").vec() == std::vector<float>{1.0f});
    REQUIRE_THROWS_AS(
        [&] {
            ModelConfig one = tiny_config();
            one.n_sources = 1;
            return MugsModel::create(one, 5);
        }(),
        ValueError);
}

TEST_CASE("the pipeline produces level outputs with the contracted shapes") {
    MugsModel model = MugsModel::create(tiny_config(), 21);
    SceneSample s = tiny_scene(31);
    REQUIRE(s.width == 32);

    PipelineOutput out = model.forward_scene(s, false, true);
    REQUIRE(out.levels.size() == 2);
    const LevelOutput& c = out.levels[0];
    const LevelOutput& f = out.levels[1];
    REQUIRE(c.h == 8);
    REQUIRE(c.w == 8);
    REQUIRE(c.prob.shape() == Shape{8, 8, 8});
    REQUIRE(c.depth.shape() == Shape{8, 8});
    REQUIRE(c.target.rgb.shape() == Shape{3, 16, 16});
    REQUIRE(c.sources.size() == 2);
    REQUIRE(f.h == 16);
    REQUIRE(f.prob.shape() == Shape{4, 16, 16});
    REQUIRE(f.target.rgb.shape() == Shape{3, 32, 32});
    REQUIRE(f.cand.size() == static_cast<size_t>(4) * 16 * 16);
    for (float z : f.cand) {
        REQUIRE(z >= static_cast<float>(s.depth_min));
        REQUIRE(z <= static_cast<float>(s.depth_max));
    }

    PipelineOutput coarse_only = model.forward_scene(s, true, false);
    REQUIRE(coarse_only.levels.size() == 1);
    REQUIRE(coarse_only.levels[0].sources.empty());
}

TEST_CASE("ablated model variants run the pipeline end to end") {
    SceneSample s = tiny_scene(32);
    for (int variant = 0; variant < 2; ++variant) {
        ModelConfig cfg = tiny_config();
        if (variant == 0) cfg.use_mono = false;
        if (variant == 1) cfg.use_refine = false;
        MugsModel model = MugsModel::create(cfg, 22);
        PipelineOutput out = model.forward_scene(s, false, false);
        REQUIRE(out.levels.size() == 2);
        for (float v : out.levels[1].target.rgb.vec()) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("training is deterministic and logs every iteration") {
    TempDir tmp("mugs_train_determinism");
    std::vector<SceneSample> train = {tiny_scene(101), tiny_scene(102)};
    std::vector<SceneSample> val = {tiny_scene(103)};
    TrainConfig tc;
    tc.iterations = 3;
    tc.coarse_phase = 0.4;  // first iteration coarse-only, then joint
    tc.val_every = 2;
    tc.seed = 9;

    auto run = [&](const std::string& dir) {
        MugsModel model = MugsModel::create(tiny_config(), 77);
        TrainConfig c = tc;
        c.out_dir = dir;
        return train_model(model, train, val, c);
    };
    TrainResult r1 = run(tmp.str() + "/a");
    TrainResult r2 = run(tmp.str() + "/b");
    REQUIRE(r1.log.size() == 3);
    for (size_t i = 0; i < r1.log.size(); ++i) {
        REQUIRE(r1.log[i].total == Catch::Approx(r2.log[i].total).margin(1e-6));
        REQUIRE(std::isfinite(r1.log[i].total));
    }
    REQUIRE(r1.log.back().val_psnr > 0.0);   // measured on the final iteration
    REQUIRE(r1.log.front().val_psnr < 0.0);  // not measured on the first

    std::ifstream csv(tmp.str() + "/a/train_log.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "iteration,total,l1,ssim,grad,reference,lr,val_psnr");
    int lines = 0;
    for (std::string line; std::getline(csv, line);)
        if (!line.empty()) ++lines;
    REQUIRE(lines == 3);
}

TEST_CASE("zero training iterations leave the initialization untouched") {
    TempDir tmp("mugs_train_zero_iters");
    std::vector<SceneSample> train = {tiny_scene(104)};
    MugsModel model = MugsModel::create(tiny_config(), 55);
    TrainConfig tc;
    tc.iterations = 0;
    tc.out_dir = tmp.str();
    TrainResult res = train_model(model, train, {}, tc);
    REQUIRE(fs::exists(res.checkpoint_path));

    MugsModel loaded = MugsModel::create(tiny_config(), 1234);  // different init
    load_checkpoint(loaded.params, res.checkpoint_path);
    MugsModel fresh = MugsModel::create(tiny_config(), 55);
    REQUIRE(loaded.params.size() == fresh.params.size());
    for (size_t i = 0; i < fresh.params.items().size(); ++i) {
        const auto& [name, t] = fresh.params.items()[i];
        REQUIRE(loaded.params.items()[i].first == name);
        REQUIRE(loaded.params.items()[i].second.vec() == t.vec());
    }
}

TEST_CASE("evaluation reports photometric and depth quality per scene") {
    MugsModel model = MugsModel::create(tiny_config(), 66);
    std::vector<SceneSample> scenes = {tiny_scene(105), tiny_scene(106)};
    EvalSummary sum = evaluate_model(model, scenes);
    REQUIRE(sum.scenes.size() == 2);
    for (const SceneEval& e : sum.scenes) {
        REQUIRE(std::isfinite(e.psnr));
        REQUIRE(e.psnr > 0.0);
        REQUIRE(e.ssim <= 1.0);
        REQUIRE(e.depth_fine.valid > 0);
        REQUIRE(e.depth_coarse.valid > 0);
        REQUIRE(e.depth_reference.valid > 0);
        REQUIRE(std::isfinite(e.depth_fine.abs_err));
    }
    REQUIRE(sum.fine_leq_coarse_frac >= 0.0);
    REQUIRE(sum.fine_leq_coarse_frac <= 1.0);
}
