#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "mugs/check/suite.hpp"

using namespace mugs;

TEST_CASE("composite gradient cases pass at reduced seed count") {
    // The acceptance gate runs 10 seeds; three here keep the suite fast.
    std::vector<gradcheck::Report> reports = gradcheck::run_cases(gradcheck::composite_cases(),
                                                                  "", 3);
    REQUIRE(reports.size() == 5);
    for (const gradcheck::Report& r : reports) {
        INFO(r.op << " max err " << r.max_err << " threshold " << r.threshold);
        CHECK(r.pass);
    }
}

TEST_CASE("full registry carries primitives and composites") {
    std::set<std::string> names;
    for (const gradcheck::Case& c : gradcheck::all_cases()) names.insert(c.name);
    for (const char* want : {"add", "mul", "conv2d", "conv3d", "softmax", "bilinear_sample",
                             "sweep_pipeline", "consistency_unet", "depth_attention",
                             "gaussian_heads", "rasterizer"}) {
        INFO(want);
        CHECK(names.count(want) == 1);
    }
}

TEST_CASE("single-op filter selects exactly one case and rejects unknowns") {
    std::vector<gradcheck::Report> one = gradcheck::run_cases(gradcheck::all_cases(),
                                                              "depth_attention", 2);
    REQUIRE(one.size() == 1);
    CHECK(one[0].op == "depth_attention");
    CHECK(one[0].pass);
    CHECK_THROWS_AS(gradcheck::run_cases(gradcheck::all_cases(), "no_such_op", 1), ValueError);
}
