#include <catch2/catch_amalgamated.hpp>

#include "saliflow/flow_stats.hpp"
#include "support/fixtures.hpp"

using namespace saliflow;
using namespace testsupport;

TEST_CASE("epe is zero against itself and exact for a 3-4-5 offset") {
    Rng rng(5);
    FlowField f = random_flow(10, 10, rng);
    FlowStats self = flow_stats(f, &f);
    CHECK(*self.mean_epe == 0.0);
    CHECK(*self.max_epe == 0.0);

    // base values exactly representable in float so the (3,4) offset is exact
    FlowField base(10, 10), g(10, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            base.u(y, x) = 0.25f * (x % 5);
            base.v(y, x) = -0.5f * (y % 3);
            g.u(y, x) = base.u(y, x) + 3.0f;
            g.v(y, x) = base.v(y, x) + 4.0f;
        }
    FlowStats offset = flow_stats(g, &base);
    CHECK(*offset.mean_epe == 5.0);
    CHECK(*offset.max_epe == 5.0);
}

TEST_CASE("epe fields are absent without a reference") {
    FlowField f(4, 4);
    FlowStats stats = flow_stats(f);
    CHECK_FALSE(stats.mean_epe.has_value());
    CHECK_FALSE(stats.max_epe.has_value());
}

TEST_CASE("stats reject mismatched reference dimensions") {
    FlowField f(4, 4), g(4, 5);
    CHECK_THROWS_AS(flow_stats(f, &g), DimensionError);
}

TEST_CASE("checkerboard field scores strictly above a constant field") {
    FlowField checker(16, 16), constant(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            checker.u(y, x) = ((x + y) % 2 == 0) ? 1.0f : -1.0f;
            constant.u(y, x) = 1.0f;
        }
    double sc = checkerboard_score(checker);
    double cc = checkerboard_score(constant);
    CHECK(sc > cc);
    CHECK(cc < 1e-12);  // DCT rounding leaves ~1e-33 in the high band
    CHECK(sc > 0.4);
    CHECK(checkerboard_score(FlowField(16, 16)) == 0.0);  // zero energy
}

TEST_CASE("smoothness is zero for constant fields and positive for gradients") {
    CHECK(flow_smoothness(FlowField::constant(8, 8, 3.0f, -1.0f)) == 0.0);
    FlowField ramp(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) ramp.u(y, x) = static_cast<float>(x);
    CHECK(flow_smoothness(ramp) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean epe is invariant under joint transposition (property)") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        FlowField f = random_flow(9, 13, rng);
        FlowField g = random_flow(9, 13, rng);
        // transpose both fields, swapping u/v accordingly
        FlowField ft(13, 9), gt(13, 9);
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 13; ++x) {
                ft.u(x, y) = f.v(y, x);
                ft.v(x, y) = f.u(y, x);
                gt.u(x, y) = g.v(y, x);
                gt.v(x, y) = g.u(y, x);
            }
        double a = *flow_stats(f, &g).mean_epe;
        double b = *flow_stats(ft, &gt).mean_epe;
        REQUIRE(a == Catch::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("affine fields have negligible affine-fit residual; object motion does not") {
    FlowField affine(12, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
            affine.u(y, x) = static_cast<float>(0.1 * x - 0.05 * y + 2.0);
            affine.v(y, x) = static_cast<float>(0.02 * x + 0.07 * y - 1.0);
        }
    CHECK(affine_fit_residual(affine) < 1e-5);

    FlowField object(12, 12);
    for (int y = 4; y < 8; ++y)
        for (int x = 4; x < 8; ++x) object.u(y, x) = 5.0f;
    CHECK(affine_fit_residual(object) > 1.0);
}

TEST_CASE("masked mean epe restricts to mask pixels") {
    FlowField f = FlowField::constant(6, 6, 1.0f, 0.0f);
    FlowField g(6, 6);
    ImageU8 mask = rect_mask(6, 6, 0, 0, 3, 6);
    CHECK(masked_mean_epe(f, g, mask) == Catch::Approx(1.0));
}
