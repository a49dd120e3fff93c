#include <gtest/gtest.h>

#include <cmath>

#include "cpdewarp/dewarp.hpp"
#include "cpdewarp/grid.hpp"
#include "cpdewarp/metrics.hpp"
#include "test_support.hpp"

using namespace cpd;

namespace {

ReferenceSpec spec(int rows, int cols, double v, double h, Point2 origin = {0, 0}) {
    ReferenceSpec s;
    s.rows = rows;
    s.cols = cols;
    s.v_interval = v;
    s.h_interval = h;
    s.origin = origin;
    return s;
}

ImageBuffer gradient_image(int w, int h, int channels = 3) {
    ImageBuffer img(w, h, channels);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < channels; ++k)
                img.pixel(i, j)[k] = static_cast<std::uint8_t>((i * 7 + j * 3 + k * 50) % 256);
    return img;
}

}  // namespace

TEST(MeshMap, IdentityOnLatticeSpan) {
    const ReferenceSpec s = spec(5, 6, 12.5, 10.0);
    const BackwardMap map = bilinear_mesh_map(s, build_reference_grid(s), 51, 51);
    for (int i = 0; i < 51; ++i)
        for (int j = 0; j < 51; ++j) {
            EXPECT_NEAR(map.at(i, j).x, j, 1e-9);
            EXPECT_NEAR(map.at(i, j).y, i, 1e-9);
        }
}

TEST(MeshMap, CellCentreBlend) {
    const ReferenceSpec s = spec(2, 2, 10, 10);
    const ControlGrid c(2, 2, {{0, 0}, {10, 0}, {0, 10}, {20, 20}});
    const BackwardMap map = bilinear_mesh_map(s, c, 11, 11);
    // mean of the corners: x (0+10+0+20)/4, y (0+0+10+20)/4
    EXPECT_NEAR(map.at(5, 5).x, 7.5, 1e-12);
    EXPECT_NEAR(map.at(5, 5).y, 7.5, 1e-12);
}

TEST(MeshMap, NodesAreExact) {
    const ReferenceSpec s = spec(7, 9, 8, 6);
    const ControlGrid c = test::jittered(s, 2.5, 11);
    const BackwardMap map = bilinear_mesh_map(s, c, 49, 49);
    for (int r = 0; r < 7; ++r)
        for (int k = 0; k < 9; ++k) EXPECT_EQ(map.at(r * 8, k * 6), c.at(r, k)) << r << "," << k;
}

TEST(MeshMap, BilinearInsideCells) {
    const ReferenceSpec s = spec(4, 4, 8, 8);
    const ControlGrid c = test::jittered(s, 2.0, 5);
    const BackwardMap map = bilinear_mesh_map(s, c, 25, 25);
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k)
            for (int di = 0; di <= 8; di += 2)
                for (int dj = 0; dj <= 8; dj += 2) {
                    const double u = dj / 8.0, v = di / 8.0;
                    const Point2 want = c.at(r, k) * ((1 - u) * (1 - v)) + c.at(r, k + 1) * (u * (1 - v)) +
                                        c.at(r + 1, k) * ((1 - u) * v) + c.at(r + 1, k + 1) * (u * v);
                    const Point2 got = map.at(r * 8 + di, k * 8 + dj);
                    EXPECT_NEAR(got.x, want.x, 1e-9);
                    EXPECT_NEAR(got.y, want.y, 1e-9);
                }
}

TEST(MeshMap, ParallelogramCentreIsCornerMean) {
    const ReferenceSpec s = spec(2, 2, 10, 10);
    const ControlGrid c(2, 2, {{3, 4}, {15, 6}, {5, 16}, {17, 18}});
    const Point2 p = bilinear_mesh_map(s, c, 11, 11).at(5, 5);
    EXPECT_NEAR(p.x, (3 + 15 + 5 + 17) / 4.0, 1e-12);
    EXPECT_NEAR(p.y, (4 + 6 + 16 + 18) / 4.0, 1e-12);
}

TEST(MeshMap, OutsideSpanExtrapolatesEdgeCell) {
    const ReferenceSpec s = spec(2, 2, 10, 10);
    const ControlGrid c(2, 2, {{0, 0}, {20, 0}, {0, 10}, {20, 10}});
    const BackwardMap map = bilinear_mesh_map(s, c, 15, 12);
    EXPECT_NEAR(map.at(11, 14).x, 28.0, 1e-12);
    EXPECT_NEAR(map.at(11, 14).y, 11.0, 1e-12);
}

TEST(MeshMap, Errors) {
    const ReferenceSpec s = spec(3, 3, 10, 10);
    EXPECT_THROW(bilinear_mesh_map(s, build_reference_grid(spec(2, 3, 10, 10)), 10, 10), Error);
    ReferenceSpec bad = s;
    bad.h_interval = 0;
    try {
        bilinear_mesh_map(bad, build_reference_grid(s), 10, 10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
    }
}

TEST(Remap, IdentityIsByteExact) {
    for (int ch : {1, 3}) {
        const ImageBuffer img = gradient_image(37, 23, ch);
        BackwardMap id(37, 23);
        for (int i = 0; i < 23; ++i)
            for (int j = 0; j < 37; ++j) id.at(i, j) = {double(j), double(i)};
        EXPECT_EQ(remap(img, id), img);
    }
}

TEST(Remap, TranslationExposesFill) {
    ImageBuffer img(2, 1, 3);
    for (int k = 0; k < 3; ++k) {
        img.pixel(0, 0)[k] = 0;
        img.pixel(0, 1)[k] = 255;
    }
    BackwardMap m(2, 1);
    m.at(0, 0) = {1, 0};
    m.at(0, 1) = {2, 0};
    const ImageBuffer out = remap(img, m, {7, 8, 9});
    EXPECT_EQ(out.pixel(0, 0)[0], 255);
    EXPECT_EQ(out.pixel(0, 1)[0], 7);
    EXPECT_EQ(out.pixel(0, 1)[2], 9);
}

TEST(Remap, BilinearSampleAndDims) {
    ImageBuffer img(2, 2, 1);
    img.pixel(0, 0)[0] = 0;
    img.pixel(0, 1)[0] = 100;
    img.pixel(1, 0)[0] = 200;
    img.pixel(1, 1)[0] = 40;
    BackwardMap m(3, 1);
    m.at(0, 0) = {0.5, 0.5};
    m.at(0, 1) = {0.25, 0};
    m.at(0, 2) = {-0.01, 0};
    const ImageBuffer out = remap(img, m, {255, 255, 255});
    EXPECT_EQ(out.width(), 3);
    EXPECT_EQ(out.height(), 1);
    EXPECT_EQ(out.pixel(0, 0)[0], 85);
    EXPECT_EQ(out.pixel(0, 1)[0], 25);
    EXPECT_EQ(out.pixel(0, 2)[0], 255);
}

TEST(Remap, RejectsNonFiniteMap) {
    BackwardMap m(1, 1);
    m.at(0, 0) = {std::nan(""), 0};
    EXPECT_THROW(remap(gradient_image(2, 2), m), Error);
}

TEST(Dewarp, IdentityCropsInput) {
    const ImageBuffer img = gradient_image(120, 90);
    const ReferenceSpec s = spec(5, 7, 15, 12, {10, 20});
    DewarpOptions o;
    const ImageBuffer out = dewarp(img, build_reference_grid(s), s, o);
    ASSERT_EQ(out.width(), 72);
    ASSERT_EQ(out.height(), 60);
    for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 72; ++j)
            for (int k = 0; k < 3; ++k) ASSERT_EQ(out.pixel(i, j)[k], img.pixel(i + 20, j + 10)[k]);
    o.method = Method::Tps;
    o.step = 2;
    EXPECT_EQ(dewarp(img, build_reference_grid(s), s, o), out);
}

TEST(Dewarp, DefaultSizeRoundsSpan) {
    EXPECT_EQ(default_output_size(spec(31, 31, 32.4, 32.6)), (Size{978, 972}));
    EXPECT_EQ(default_output_size(spec(31, 31, 32, 32)), (Size{960, 960}));
}

TEST(Dewarp, OutSizeRescalesReference) {
    const ReferenceSpec s = spec(3, 3, 20, 20, {5, 5});
    DewarpOptions o;
    o.out_size = Size{20, 10};
    const BackwardMap m = dewarp_map(build_reference_grid(s), s, o);
    EXPECT_EQ(m.width(), 20);
    EXPECT_EQ(m.height(), 10);
    EXPECT_NEAR(m.at(5, 10).x, 25.0, 1e-12);
    EXPECT_NEAR(m.at(5, 10).y, 25.0, 1e-12);
}

TEST(Dewarp, InvalidStepReported) {
    const ReferenceSpec s = spec(31, 31, 10, 10);
    DewarpOptions o;
    o.step = 7;
    try {
        dewarp_map(build_reference_grid(s), s, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidStep);
        EXPECT_EQ(e.valid_steps(), (std::vector<int>{1, 2, 3, 5, 6, 10, 15, 30}));
    }
}

TEST(Dewarp, LinearAndTpsAgreeOnAffineGrids) {
    const ReferenceSpec s = spec(31, 31, 32, 32, {16, 16});
    for (int trial = 0; trial < 3; ++trial) {
        const double a = 0.9 + 0.05 * trial, b = 0.1 - 0.07 * trial, c = -0.08 + 0.04 * trial, d = 1.05 - 0.03 * trial;
        std::vector<Point2> pts;
        for (const ControlGrid base = build_reference_grid(s); auto p : base.points()) pts.push_back({a * p.x + b * p.y + 7, c * p.x + d * p.y - 3});
        const ControlGrid ctl(31, 31, pts);
        DewarpOptions lin;
        DewarpOptions tps;
        tps.method = Method::Tps;
        tps.step = 2;
        const auto e = metrics::map_endpoint_error(dewarp_map(ctl, s, lin), dewarp_map(ctl, s, tps));
        EXPECT_LT(e.mean_px, 0.5);
        EXPECT_LT(e.max_px, 1e-5);
    }
}

TEST(Dewarp, PureAndTimed) {
    const ImageBuffer img = gradient_image(200, 200);
    const ReferenceSpec s = spec(11, 11, 18, 18, {10, 10});
    const ControlGrid c = test::jittered(s, 3.0, 8);
    DewarpOptions o;
    o.method = Method::Tps;
    DewarpTiming t;
    const ImageBuffer a = dewarp(img, c, s, o, &t);
    EXPECT_EQ(dewarp(img, c, s, o), a);
    EXPECT_GE(t.total_ms, t.fit_ms + t.eval_ms);
    EXPECT_GT(t.remap_ms, 0.0);
}

TEST(Dewarp, MethodNames) {
    EXPECT_EQ(parse_method("tps"), Method::Tps);
    EXPECT_EQ(parse_method("linear"), Method::Linear);
    EXPECT_THROW(parse_method("cubic"), Error);
}
