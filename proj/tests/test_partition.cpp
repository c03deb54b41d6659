#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "kpshift/partition.hpp"

using namespace kpshift;

namespace {

double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

TEST_CASE("build_partition places baseline and shifted lines") {
    GridPartition p = build_partition(14, 14, 2, {0.0, 0.0});
    REQUIRE(p.row_lines.size() == 1);
    CHECK(p.row_lines[0] == 7);
    CHECK(p.col_lines[0] == 7);

    GridPartition q = build_partition(14, 14, 2, {2.0, -1.0});
    CHECK(q.row_lines[0] == 9);
    CHECK(q.col_lines[0] == 6);

    GridPartition c = build_partition(14, 14, 2, {100.0, 0.0});
    CHECK(c.row_lines[0] == 13);
    CHECK(c.col_lines[0] == 7);

    GridPartition d = build_partition(14, 14, 2, {-100.0, -100.0});
    CHECK(d.row_lines[0] == 1);
    CHECK(d.col_lines[0] == 1);

    GridPartition one = build_partition(5, 9, 1, {3.0, -3.0});
    CHECK(one.row_lines.empty());
    CHECK(one.col_lines.empty());
    RegionBounds full = one.region(0);
    CHECK(full.row_lo == 0);
    CHECK(full.row_hi == 5);
    CHECK(full.col_lo == 0);
    CHECK(full.col_hi == 9);

    CHECK_THROWS_AS(build_partition(1, 14, 2, {0.0, 0.0}), ShapeError);
    CHECK_THROWS_AS(build_partition(14, 1, 2, {0.0, 0.0}), ShapeError);
    CHECK_THROWS_AS(build_partition(14, 14, 0, {0.0, 0.0}), ShapeError);
    CHECK_THROWS_AS(build_partition(14, 14, 5, {0.0, 0.0}), ShapeError);
}

TEST_CASE("zero bias yields the uniform grid") {
    GridPartition k3 = build_partition(9, 9, 3, {0.0, 0.0});
    CHECK(k3.row_lines == std::vector<std::size_t>{3, 6});
    GridPartition k4 = build_partition(14, 14, 4, {0.0, 0.0});
    CHECK(k4.row_lines == std::vector<std::size_t>{4, 7, 11});
    GridPartition k2 = build_partition(8, 8, 2, {0.0, 0.0});
    CHECK(k2.row_lines == std::vector<std::size_t>{4});
}

TEST_CASE("region enumeration is row-major with half-open bounds") {
    GridPartition p = build_partition(14, 14, 2, {0.0, 0.0});
    RegionBounds r0 = p.region(0);
    CHECK(r0.row_lo == 0);
    CHECK(r0.row_hi == 7);
    CHECK(r0.col_lo == 0);
    CHECK(r0.col_hi == 7);

    GridPartition q = build_partition(14, 14, 2, {2.0, -1.0});
    RegionBounds r3 = q.region(3);
    CHECK(r3.row_lo == 9);
    CHECK(r3.row_hi == 14);
    CHECK(r3.col_lo == 6);
    CHECK(r3.col_hi == 14);

    RegionBounds r1 = q.region(1);
    CHECK(r1.row_lo == 0);
    CHECK(r1.row_hi == 9);
    CHECK(r1.col_lo == 6);
    CHECK(r1.col_hi == 14);

    CHECK_THROWS_AS(p.region(4), ShapeError);
}

TEST_CASE("partitions tile the frame exactly") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t k = 1 + rng() % 4;
        const std::size_t h = k + rng() % 17, w = k + rng() % 17;
        const double dr = -30.0 + 60.0 * unit(rng);
        const double dc = -30.0 + 60.0 * unit(rng);
        GridPartition p = build_partition(h, w, k, {dr, dc});
        std::vector<int> covered(h * w, 0);
        for (std::size_t r = 0; r < p.region_count(); ++r) {
            RegionBounds b = p.region(r);
            REQUIRE(b.row_lo < b.row_hi);
            REQUIRE(b.col_lo < b.col_hi);
            REQUIRE(b.row_hi <= h);
            REQUIRE(b.col_hi <= w);
            for (std::size_t y = b.row_lo; y < b.row_hi; ++y) {
                for (std::size_t x = b.col_lo; x < b.col_hi; ++x) covered[y * w + x] += 1;
            }
        }
        CHECK(std::all_of(covered.begin(), covered.end(), [](int c) { return c == 1; }));
    }
}

TEST_CASE("zero separation net gives zero bias") {
    SeparationNet net = make_separation_net(8, 2);
    std::mt19937_64 rng(11);
    Tensor frame({8, 6, 6});
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = -2.0 + 4.0 * unit(rng);
    auto [dr, dc] = compute_adaptive_bias(frame, net);
    CHECK(dr == 0.0);
    CHECK(dc == 0.0);
}

TEST_CASE("adaptive bias stays inside the tanh bound") {
    SeparationNet net = make_separation_net(4, 2);
    for (std::size_t i = 0; i < net.w1.size(); ++i) net.w1[i] = 1.0;

    // moderate weights: strictly inside the scaled interval
    for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] = 1.0;
    Tensor frame = Tensor::full({4, 8, 12}, 1.0);
    auto [mr, mc] = compute_adaptive_bias(frame, net);
    CHECK(mr > 0.0);
    CHECK(mr < 2.0);
    CHECK(mc < 3.0);

    // enormous weights: double tanh saturates but never exceeds the scale
    for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] = 1e6;
    auto [dr, dc] = compute_adaptive_bias(frame, net);
    CHECK(dr <= 2.0);
    CHECK(dc <= 3.0);
    CHECK(dr == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(dc == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("adaptive bias matches direct evaluation and scales with input") {
    SeparationNet net = make_separation_net(4, 2);
    REQUIRE(net.w1.extent(0) == 1);  // hidden = C/4
    net.w1 = Tensor({1, 4}, {0.5, -0.25, 0.1, 0.2});
    net.b1 = Tensor({1}, {0.3});
    net.w2 = Tensor({2, 1}, {0.8, -0.6});
    net.b2 = Tensor({2}, {0.05, -0.1});

    auto expect = [](double c) {
        const double hid = std::max(0.0, 0.55 * c + 0.3);
        return std::pair<double, double>{2.0 * std::tanh(0.8 * hid + 0.05),
                                         2.0 * std::tanh(-0.6 * hid - 0.1)};
    };

    Tensor f1 = Tensor::full({4, 8, 8}, 1.0);
    auto [r1, c1] = compute_adaptive_bias(f1, net);
    CHECK(r1 == doctest::Approx(expect(1.0).first).epsilon(1e-12));
    CHECK(c1 == doctest::Approx(expect(1.0).second).epsilon(1e-12));

    Tensor f2 = Tensor::full({4, 8, 8}, 2.0);
    auto [r2, c2] = compute_adaptive_bias(f2, net);
    CHECK(r2 == doctest::Approx(expect(2.0).first).epsilon(1e-12));
    CHECK(r2 != r1);
    CHECK(c2 != c1);

    CHECK_THROWS_AS(compute_adaptive_bias(Tensor::zeros({6, 8, 8}), net), ShapeError);
    CHECK_THROWS_AS(compute_adaptive_bias(Tensor::zeros({4, 8}), net), ShapeError);
}

TEST_CASE("adaptive bias ignores spatial ordering") {
    std::mt19937_64 rng(23);
    SeparationNet net = make_separation_net(6, 2);
    for (std::size_t i = 0; i < net.w1.size(); ++i) net.w1[i] = -1.0 + 2.0 * unit(rng);
    for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] = -1.0 + 2.0 * unit(rng);

    Tensor frame({6, 5, 7});
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = -3.0 + 6.0 * unit(rng);
    auto [dr, dc] = compute_adaptive_bias(frame, net);

    Tensor shuffled = frame;
    for (std::size_t ch = 0; ch < 6; ++ch) {
        double* begin = shuffled.data() + ch * 35;
        std::shuffle(begin, begin + 35, rng);
    }
    auto [sr, sc] = compute_adaptive_bias(shuffled, net);
    CHECK(sr == doctest::Approx(dr).epsilon(1e-9));
    CHECK(sc == doctest::Approx(dc).epsilon(1e-9));
}
