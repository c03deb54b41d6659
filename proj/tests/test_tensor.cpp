#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "kpshift/tensor.hpp"
#include "kpshift/tensor_io.hpp"
#include "ref/reference.hpp"

using namespace kpshift;

namespace {

double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> dims,
                     double lo = -10.0, double hi = 10.0) {
    Tensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * unit(rng);
    return t;
}

}  // namespace

TEST_CASE("tensor construction and indexing") {
    Tensor t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.size() == 6);
    CHECK(t.extent(0) == 2);
    CHECK(t.extent(1) == 3);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

    t.at({1, 2}) = 7.0;
    CHECK(t[5] == 7.0);
    CHECK(t.offset({1, 0}) == 3);

    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
    CHECK_THROWS_AS(t.at({0, 0, 0}), ShapeError);
    CHECK_THROWS_AS(t.extent(2), ShapeError);
}

TEST_CASE("f32 tensors live on the float grid") {
    Tensor t({1}, {0.1}, DType::F32);
    CHECK(t[0] == static_cast<double>(0.1f));
    CHECK(t[0] != 0.1);

    Tensor d({1}, {0.1});
    CHECK(d[0] == 0.1);
    Tensor back = d.astype(DType::F32).astype(DType::F64);
    CHECK(back[0] == static_cast<double>(0.1f));
}

TEST_CASE("require_finite rejects NaN and Inf") {
    Tensor t({2});
    t.require_finite("ok");
    t[1] = std::nan("");
    CHECK_THROWS_AS(t.require_finite("bad"), ShapeError);
    t[1] = HUGE_VAL;
    CHECK_THROWS_AS(t.require_finite("bad"), ShapeError);
}

TEST_CASE("softmax_axis examples") {
    Tensor two({2}, {0.0, 0.0});
    Tensor s2 = softmax_axis(two, 0);
    CHECK(s2[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s2[1] == doctest::Approx(0.5).epsilon(1e-12));

    Tensor big({3}, {1000.0, 1000.0, 1000.0});
    Tensor sb = softmax_axis(big, 0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::isfinite(sb[i]));
        CHECK(sb[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    Tensor t({3}, {1.0, 2.0, 3.0});
    Tensor s = softmax_axis(t, 0);
    // frozen from a long-double scalar evaluation
    CHECK(std::abs(s[0] - 0.0900305731703804) < 1e-5);
    CHECK(std::abs(s[1] - 0.2447284710547977) < 1e-5);
    CHECK(std::abs(s[2] - 0.6652409557748218) < 1e-5);
    // recompute the oracle in place
    long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(s[i] - static_cast<double>(std::exp(1.0L + i) / z)) < 1e-12);
    }

    CHECK_THROWS_AS(softmax_axis(t, 1), ShapeError);
}

TEST_CASE("softmax_axis respects the chosen axis") {
    Tensor t({2, 3}, {1.0, 2.0, 3.0, 3.0, 2.0, 1.0});
    Tensor rows = softmax_axis(t, 1);
    CHECK(rows.at({0, 0}) + rows.at({0, 1}) + rows.at({0, 2}) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows.at({0, 2}) == doctest::Approx(rows.at({1, 0})).epsilon(1e-12));

    Tensor cols = softmax_axis(t, 0);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(cols.at({0, c}) + cols.at({1, c}) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(cols.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax_axis properties over random tensors") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t rank = 1 + rng() % 3;
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) d = 1 + rng() % 5;
        Tensor t = random_tensor(rng, dims);
        const std::size_t axis = rng() % rank;
        Tensor s = softmax_axis(t, axis);

        std::size_t inner = 1;
        for (std::size_t a = axis + 1; a < rank; ++a) inner *= t.extent(a);
        const std::size_t n = t.extent(axis);
        for (std::size_t o = 0; o < t.size() / (n * inner); ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double v = s[o * n * inner + j * inner + i];
                    CHECK(v > 0.0);
                    sum += v;
                }
                CHECK(std::abs(sum - 1.0) < 1e-6);
            }
        }

        const double c = -5.0 + 10.0 * unit(rng);
        Tensor shifted = t;
        for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += c;
        Tensor s2 = softmax_axis(shifted, axis);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - s2[i]) < 1e-6);

        Tensor sr = ref::softmax_axis(t, axis);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - sr[i]) < 1e-12);
    }
}

TEST_CASE("region_reduce_max examples") {
    Tensor f({2, 2}, {1.0, 3.0, 2.0, 0.0});
    MaxPoint m = region_reduce_max(f, {0, 2, 0, 2});
    CHECK(m.row == 0);
    CHECK(m.col == 1);
    CHECK(m.value == 3.0);

    Tensor ties({2, 2}, {5.0, 5.0, 5.0, 5.0});
    MaxPoint mt = region_reduce_max(ties, {0, 2, 0, 2});
    CHECK(mt.row == 0);
    CHECK(mt.col == 0);
    CHECK(mt.value == 5.0);

    Tensor big({4, 4});
    big.at({2, 2}) = 0.1;
    big.at({2, 3}) = 0.9;
    big.at({3, 2}) = 0.2;
    big.at({3, 3}) = 0.3;
    MaxPoint mb = region_reduce_max(big, {2, 4, 2, 4});
    CHECK(mb.row == 2);
    CHECK(mb.col == 3);
    CHECK(mb.value == 0.9);

    CHECK_THROWS_AS(region_reduce_max(f, {1, 1, 0, 2}), ShapeError);
    CHECK_THROWS_AS(region_reduce_max(f, {0, 3, 0, 2}), ShapeError);
    Tensor r3({2, 2, 2});
    CHECK_THROWS_AS(region_reduce_max(r3, {0, 1, 0, 1}), ShapeError);
}

TEST_CASE("region_reduce_max matches the serial reference") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t h = 2 + rng() % 7, w = 2 + rng() % 7;
        Tensor f = random_tensor(rng, {h, w}, 0.0, 1.0);
        // duplicate some values to exercise the tie-break
        if (seed % 3 == 0) f[rng() % f.size()] = f[rng() % f.size()];
        RegionBounds b;
        b.row_lo = rng() % h;
        b.row_hi = b.row_lo + 1 + rng() % (h - b.row_lo);
        b.col_lo = rng() % w;
        b.col_hi = b.col_lo + 1 + rng() % (w - b.col_lo);
        MaxPoint a = region_reduce_max(f, b);
        MaxPoint r = ref::region_reduce_max(f, b);
        CHECK(a.row == r.row);
        CHECK(a.col == r.col);
        CHECK(a.value == r.value);
        CHECK(std::abs(region_reduce_mean(f, b) - ref::region_reduce_mean(f, b)) < 1e-12);
    }
}

TEST_CASE("region_reduce_mean examples") {
    Tensor f({2, 2}, {1.0, 3.0, 2.0, 0.0});
    CHECK(region_reduce_mean(f, {0, 2, 0, 2}) == doctest::Approx(1.5).epsilon(1e-12));

    Tensor c = Tensor::full({3, 3}, 4.25);
    CHECK(region_reduce_mean(c, {1, 3, 0, 2}) == doctest::Approx(4.25).epsilon(1e-12));

    Tensor g({2, 2}, {0.2, 0.4, 0.6, 0.8});
    CHECK(region_reduce_mean(g, {0, 1, 0, 2}) == doctest::Approx(0.3).epsilon(1e-12));

    CHECK_THROWS_AS(region_reduce_mean(f, {0, 0, 0, 2}), ShapeError);
}

TEST_CASE("linear_forward examples") {
    Tensor x({2}, {1.0, 2.0});

    Tensor w0 = Tensor::zeros({3, 2});
    Tensor b0({3}, {0.25, -1.0, 2.0});
    Tensor y0 = linear_forward(x, w0, b0);
    CHECK(y0[0] == 0.25);
    CHECK(y0[1] == -1.0);
    CHECK(y0[2] == 2.0);

    Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor zb = Tensor::zeros({2});
    Tensor yi = linear_forward(x, eye, zb);
    CHECK(yi[0] == 1.0);
    CHECK(yi[1] == 2.0);

    Tensor w({2, 2}, {1.0, 1.0, 2.0, 0.0});
    Tensor b({2}, {0.5, -0.5});
    Tensor y = linear_forward(x, w, b);
    CHECK(y[0] == doctest::Approx(3.5).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(1.5).epsilon(1e-12));

    Tensor batch({2, 1, 2}, {1.0, 2.0, 1.0, 2.0});
    Tensor yb = linear_forward(batch, w, b);
    CHECK(yb.rank() == 3);
    CHECK(yb.extent(0) == 2);
    CHECK(yb.extent(2) == 2);
    CHECK(yb.at({1, 0, 0}) == doctest::Approx(3.5).epsilon(1e-12));

    CHECK_THROWS_AS(linear_forward(x, Tensor::zeros({2, 3}), zb), ShapeError);
    CHECK_THROWS_AS(linear_forward(x, eye, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("linear_forward matches the serial reference") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t d_in = 1 + rng() % 8, d_out = 1 + rng() % 8;
        const std::size_t rows = 1 + rng() % 4;
        Tensor x = random_tensor(rng, {rows, d_in}, -2.0, 2.0);
        Tensor w = random_tensor(rng, {d_out, d_in}, -2.0, 2.0);
        Tensor b = random_tensor(rng, {d_out}, -2.0, 2.0);
        Tensor a = linear_forward(x, w, b);
        Tensor r = ref::linear_forward(x, w, b);
        REQUIRE(a.same_shape(r));
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - r[i]) < 1e-12);
    }
}

TEST_CASE("conv_1x3_halve examples") {
    Tensor x({2, 1, 4}, {1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0});
    Tensor w = Tensor::zeros({1, 2, 1, 3});
    w.at({0, 0, 0, 0}) = 1.0;
    w.at({0, 0, 0, 1}) = 1.0;
    w.at({0, 0, 0, 2}) = 1.0;
    Tensor b = Tensor::zeros({1});
    Tensor y = conv_1x3_halve(x, w, b);
    REQUIRE(y.rank() == 3);
    CHECK(y.extent(0) == 1);
    CHECK(y.extent(1) == 1);
    CHECK(y.extent(2) == 2);
    CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(9.0).epsilon(1e-12));

    Tensor xz = Tensor::zeros({4, 3, 6});
    Tensor wz = Tensor::zeros({2, 4, 1, 3});
    Tensor bz({2}, {0.75, -0.25});
    Tensor yz = conv_1x3_halve(xz, wz, bz);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t j = 0; j < yz.extent(2); ++j) {
            CHECK(yz.at({0, r, j}) == 0.75);
            CHECK(yz.at({1, r, j}) == -0.25);
        }
    }

    CHECK(conv_1x3_out_extent(24) == 12);
    CHECK(conv_1x3_out_extent(12) == 6);

    std::mt19937_64 rng(7);
    Tensor chain = random_tensor(rng, {4, 2, 24}, -1.0, 1.0);
    Tensor w1 = random_tensor(rng, {2, 4, 1, 3}, -1.0, 1.0);
    Tensor b1 = random_tensor(rng, {2}, -1.0, 1.0);
    Tensor mid = conv_1x3_halve(chain, w1, b1);
    CHECK(mid.extent(2) == 12);
    Tensor w2 = random_tensor(rng, {1, 2, 1, 3}, -1.0, 1.0);
    Tensor b2 = random_tensor(rng, {1}, -1.0, 1.0);
    Tensor out = conv_1x3_halve(mid, w2, b2);
    CHECK(out.extent(0) == 1);
    CHECK(out.extent(1) == 2);
    CHECK(out.extent(2) == 6);

    Tensor odd = Tensor::zeros({3, 1, 4});
    CHECK_THROWS_AS(conv_1x3_halve(odd, w, b), ShapeError);
    CHECK_THROWS_AS(conv_1x3_halve(Tensor::zeros({2, 1, 1}), w, b), ShapeError);
    CHECK_THROWS_AS(conv_1x3_halve(Tensor::zeros({2, 4}), w, b), ShapeError);
}

TEST_CASE("conv_1x3_halve matches the serial reference") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t c_in = 2 * (1 + rng() % 4);
        const std::size_t a = 1 + rng() % 4, b_ext = 2 + rng() % 12;
        Tensor x = random_tensor(rng, {c_in, a, b_ext}, -2.0, 2.0);
        Tensor w = random_tensor(rng, {c_in / 2, c_in, 1, 3}, -2.0, 2.0);
        Tensor bias = random_tensor(rng, {c_in / 2}, -2.0, 2.0);
        Tensor got = conv_1x3_halve(x, w, bias);
        Tensor want = ref::conv_1x3_halve(x, w, bias);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - want[i]) < 1e-12);
        }
    }
}

TEST_CASE("tensor round-trips through KPST bit-exactly") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t rank = 1 + rng() % 4;
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) d = 1 + rng() % 4;
        const DType dt = seed % 2 == 0 ? DType::F32 : DType::F64;
        Tensor t = random_tensor(rng, dims).astype(dt);
        const std::string path = "test_tensor_rt.kpst";
        tensor_write(t, path);
        Tensor u = tensor_read(path);
        REQUIRE(u.same_shape(t));
        CHECK(u.dtype() == t.dtype());
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(u[i] == t[i]);
        std::remove(path.c_str());
    }
}

TEST_CASE("KPST 2x2 f32 file is exactly 40 bytes") {
    Tensor t({2, 2}, {1.0, 2.0, 3.0, 4.0}, DType::F32);
    const std::string path = "test_tensor_40.kpst";
    tensor_write(t, path);
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    REQUIRE(in.good());
    CHECK(static_cast<std::size_t>(in.tellg()) == 40);
    in.seekg(0);
    char head[8];
    in.read(head, 8);
    CHECK(head[0] == 'K');
    CHECK(head[1] == 'P');
    CHECK(head[2] == 'S');
    CHECK(head[3] == 'T');
    CHECK(head[4] == 1);   // version lo
    CHECK(head[5] == 0);   // version hi
    CHECK(head[6] == 0);   // dtype f32
    CHECK(head[7] == 2);   // ndim
    in.close();
    std::remove(path.c_str());
}

TEST_CASE("KPST rejects malformed files with byte offsets") {
    Tensor t({2, 2}, {1.0, 2.0, 3.0, 4.0}, DType::F32);
    const std::string path = "test_tensor_bad.kpst";

    auto write_mutated = [&](std::size_t pos, unsigned char value, int trim = 0) {
        tensor_write(t, path);
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        if (pos != static_cast<std::size_t>(-1)) {
            f.seekp(static_cast<std::streamoff>(pos));
            f.put(static_cast<char>(value));
        }
        f.close();
        if (trim > 0) {
            std::ifstream in(path, std::ios::binary);
            std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
            in.close();
            bytes.resize(bytes.size() - static_cast<std::size_t>(trim));
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        }
    };

    write_mutated(0, 'X');
    CHECK_THROWS_WITH_AS(tensor_read(path), doctest::Contains("bad magic"), FormatError);
    try {
        write_mutated(0, 'X');
        tensor_read(path);
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 0);
    }

    write_mutated(4, 9);
    CHECK_THROWS_AS(tensor_read(path), FormatError);
    try {
        write_mutated(4, 9);
        tensor_read(path);
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 4);
    }

    write_mutated(6, 7);
    try {
        write_mutated(6, 7);
        tensor_read(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 6);
    }

    write_mutated(static_cast<std::size_t>(-1), 0, 5);
    CHECK_THROWS_WITH_AS(tensor_read(path), doctest::Contains("truncated"), FormatError);

    CHECK_THROWS_AS(tensor_read("no_such_file.kpst"), FormatError);
    std::remove(path.c_str());
}
