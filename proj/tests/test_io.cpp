#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mugs/core/rng.hpp"
#include "mugs/io/dataset.hpp"
#include "mugs/io/pfm.hpp"
#include "mugs/io/png.hpp"

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

std::vector<char> slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pfm files round-trip bit-exactly") {
    TempDir tmp("mugs_pfm_test");
    std::string path = tmp.str() + "/a.pfm";
    Rng rng(1);
    std::vector<float> data(7 * 5);
    for (float& v : data) v = static_cast<float>(rng.normal() * 10.0);
    data[0] = 0.0f;
    data[1] = -3.25f;
    data[2] = 1e-40f;  // denormal survives
    write_pfm(path, 7, 5, data);
    PfmImage img = read_pfm(path);
    REQUIRE(img.width == 7);
    REQUIRE(img.height == 5);
    REQUIRE(std::memcmp(img.data.data(), data.data(), data.size() * 4) == 0);

    SECTION("header is grayscale little-endian") {
        auto bytes = slurp(path);
        REQUIRE(bytes.size() > 12);
        REQUIRE(bytes[0] == 'P');
        REQUIRE(bytes[1] == 'f');
        std::string header(bytes.begin(), bytes.begin() + 12);
        REQUIRE(header.find("7 5") != std::string::npos);
        REQUIRE(header.find("-1") != std::string::npos);
    }
    SECTION("size mismatch on write is rejected") {
        REQUIRE_THROWS_AS(write_pfm(path, 3, 3, data), ValueError);
    }
    SECTION("corrupt files are rejected") {
        REQUIRE_THROWS_AS(read_pfm(tmp.str() + "/missing.pfm"), IoError);
        {
            std::ofstream f(tmp.str() + "/bad.pfm", std::ios::binary);
            f << "PF\n7 5\n-1.0\n";  // colour magic, not grayscale
        }
        REQUIRE_THROWS_AS(read_pfm(tmp.str() + "/bad.pfm"), IoError);
        {
            auto bytes = slurp(path);
            std::ofstream f(tmp.str() + "/trunc.pfm", std::ios::binary);
            f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
        }
        REQUIRE_THROWS_AS(read_pfm(tmp.str() + "/trunc.pfm"), IoError);
    }
}

TEST_CASE("png files quantise to 8 bits and round-trip") {
    TempDir tmp("mugs_png_test");
    std::string path = tmp.str() + "/a.png";
    Rng rng(2);
    Tensor img = Tensor::alloc({3, 6, 9});
    for (size_t i = 0; i < img.numel(); ++i) img.mut_data()[i] = static_cast<float>(rng.uniform());
    img.mut_data()[0] = 0.0f;
    img.mut_data()[1] = 1.0f;
    img.mut_data()[2] = 2.0f;   // clamps to 1
    img.mut_data()[3] = -1.0f;  // clamps to 0
    write_png(path, img);
    Tensor back = read_png(path);
    REQUIRE(back.shape() == Shape({3, 6, 9}));
    for (size_t i = 0; i < img.numel(); ++i) {
        float expect = std::min(1.0f, std::max(0.0f, img.data()[i]));
        REQUIRE(back.data()[i] == Catch::Approx(expect).margin(0.5 / 255.0 + 1e-6));
    }
    REQUIRE(back.data()[0] == 0.0f);
    REQUIRE(back.data()[1] == 1.0f);
    REQUIRE(back.data()[2] == 1.0f);
    REQUIRE(back.data()[3] == 0.0f);

    SECTION("writing requires a (3, H, W) tensor") {
        REQUIRE_THROWS_AS(write_png(path, Tensor::zeros({1, 4, 4})), ValueError);
        REQUIRE_THROWS_AS(write_png(path, Tensor::zeros({3, 4})), ValueError);
    }
    SECTION("corrupt files are rejected") {
        REQUIRE_THROWS_AS(read_png(tmp.str() + "/missing.png"), IoError);
        {
            std::ofstream f(tmp.str() + "/not.png", std::ios::binary);
            f << "definitely not a png";
        }
        REQUIRE_THROWS_AS(read_png(tmp.str() + "/not.png"), IoError);
    }
}

TEST_CASE("scene samples round-trip through the dataset layout") {
    TempDir tmp("mugs_dataset_test");
    GenConfig cfg;
    cfg.rig.width = 32;
    cfg.rig.height = 32;
    cfg.rig.n_sources = 2;
    SceneSample s = generate_scene_sample(11, cfg);
    REQUIRE(s.n_sources == 2);
    REQUIRE(static_cast<int>(s.images.size()) == 3);
    REQUIRE(static_cast<int>(s.mde.size()) == 2);
    REQUIRE(s.depth_min > 0.0);
    REQUIRE(s.depth_max > s.depth_min);

    std::string dir = tmp.str() + "/scene_0000";
    write_scene_sample(dir, s);

    SECTION("directory contains the contracted files") {
        for (int v = 0; v < 3; ++v) {
            char png[32], pfm[32];
            std::snprintf(png, sizeof(png), "view_%02d.png", v);
            std::snprintf(pfm, sizeof(pfm), "depth_%02d.pfm", v);
            REQUIRE(fs::exists(fs::path(dir) / png));
            REQUIRE(fs::exists(fs::path(dir) / pfm));
        }
        REQUIRE(fs::exists(fs::path(dir) / "mde_00.pfm"));
        REQUIRE(fs::exists(fs::path(dir) / "mde_01.pfm"));
        REQUIRE_FALSE(fs::exists(fs::path(dir) / "mde_02.pfm"));
        REQUIRE(fs::exists(fs::path(dir) / "cameras.txt"));
        REQUIRE(fs::exists(fs::path(dir) / "manifest.txt"));
    }

    SceneSample back = load_scene_sample(dir);
    REQUIRE(back.width == s.width);
    REQUIRE(back.height == s.height);
    REQUIRE(back.n_sources == s.n_sources);
    REQUIRE(back.mode == s.mode);
    REQUIRE(back.depth_min == s.depth_min);
    REQUIRE(back.depth_max == s.depth_max);
    for (int v = 0; v < 3; ++v) {
        // Images pass through 8-bit quantisation; depth and mde are exact.
        for (size_t i = 0; i < s.images[v].numel(); ++i) {
            REQUIRE(back.images[v].data()[i] ==
                    Catch::Approx(s.images[v].data()[i]).margin(0.5 / 255.0 + 1e-6));
        }
        REQUIRE(std::memcmp(back.gt_depth[v].data(), s.gt_depth[v].data(),
                            s.gt_depth[v].size() * 4) == 0);
        REQUIRE((back.cameras[v].K() - s.cameras[v].K()).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((back.cameras[v].R() - s.cameras[v].R()).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((back.cameras[v].t() - s.cameras[v].t()).cwiseAbs().maxCoeff() == 0.0);
        if (v < 2) {
            REQUIRE(std::memcmp(back.mde[v].data(), s.mde[v].data(), s.mde[v].size() * 4) == 0);
        }
    }

    SECTION("missing and mangled files are rejected") {
        fs::remove(fs::path(dir) / "depth_01.pfm");
        REQUIRE_THROWS_AS(load_scene_sample(dir), IoError);
    }
    SECTION("unknown manifest keys are rejected") {
        std::ofstream mf(dir + "/manifest.txt", std::ios::app);
        mf << "mystery 42\n";
        mf.close();
        REQUIRE_THROWS_AS(load_scene_sample(dir), IoError);
    }
}

TEST_CASE("datasets write deterministically and list back") {
    TempDir tmp("mugs_dataset_det_test");
    GenConfig cfg;
    cfg.rig.width = 32;
    cfg.rig.height = 32;
    cfg.rig.n_sources = 2;
    auto dirs = write_dataset(tmp.str() + "/a", 2, 7, cfg);
    REQUIRE(dirs == std::vector<std::string>({"scene_0000", "scene_0001"}));
    write_dataset(tmp.str() + "/b", 2, 7, cfg);

    for (const std::string& d : dirs) {
        for (const auto& entry : fs::directory_iterator(tmp.str() + "/a/" + d)) {
            auto name = entry.path().filename().string();
            auto a = slurp(entry.path().string());
            auto b = slurp(tmp.str() + "/b/" + d + "/" + name);
            INFO(name);
            REQUIRE(a == b);
        }
    }

    auto listed = list_dataset(tmp.str() + "/a");
    REQUIRE(listed.size() == 2);
    SceneSample s0 = load_scene_sample(listed[0]);
    REQUIRE(s0.n_sources == 2);
    REQUIRE_THROWS_AS(list_dataset(tmp.str() + "/nope"), IoError);
}
