#include <gtest/gtest.h>

#include "cmaae/gradcheck.hpp"

using namespace cmaae;

TEST(Gradcheck, RelativeErrorDefinition) {
    EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(1.0, 2.0), 0.5);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-12), 1e-12 / kGradFloor);
}

TEST(Gradcheck, AllLossesPass) {
    GradcheckReport r = run_gradcheck();
    EXPECT_EQ(r.entries.size(), 8u);
    for (const auto& e : r.entries) {
        EXPECT_GE(e.coordinates, 50) << e.name;
        EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
    }
    EXPECT_TRUE(r.pass());
}

TEST(Gradcheck, KinkFilterKeepsMostCoordinates) {
    for (std::uint64_t seed : {1u, 4u, 12u}) {
        GradcheckOptions opts;
        opts.seed = seed;
        GradcheckReport r = run_gradcheck(opts);
        for (const auto& e : r.entries) {
            EXPECT_EQ(e.coordinates, opts.coordinates) << e.name;
            EXPECT_LE(e.kinks_skipped, opts.coordinates / 8) << e.name;
        }
        EXPECT_NE(r.to_text().find("kinks_skipped="), std::string::npos);
    }
}
