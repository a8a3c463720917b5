#include <doctest.h>

#include <cmath>

#include "ssdiff/fmim.hpp"
#include "ssdiff/random.hpp"

using namespace ssdiff;

TEST_CASE("identity mask is an FFT round trip") {
    FourierMask mask = FourierMask::radial(32, 32, 0.0, 1.0);  // alpha == 1 everywhere
    for (int64_t i = 0; i < mask.alpha.size(); ++i) CHECK(mask.alpha[i] == 1.0);
    Rng rng(1);
    Array x = rng.normal_array({3, 32, 32});
    Array y = high_pass(x, mask);
    CHECK(max_abs_diff(x, y) < 1e-5);

    // Parseval: energies agree
    double ex = dot(x, x), ey = dot(y, y);
    CHECK(std::abs(ex - ey) / ex < 1e-5);
}

TEST_CASE("mask geometry: ones outside the radius, low gain inside") {
    FourierMask m = FourierMask::radial(16, 16, 0.25, 0.125);
    CHECK(m.alpha[0] == 0.125);  // DC bin
    int64_t inside = 0;
    for (int64_t i = 0; i < m.alpha.size(); ++i) {
        CHECK((m.alpha[i] == 1.0 || m.alpha[i] == 0.125));
        if (m.alpha[i] != 1.0) inside += 1;
    }
    CHECK(inside > 0);
    CHECK(inside < m.alpha.size() / 4);
}

TEST_CASE("zero low gain annihilates the DC of constant inputs") {
    FourierMask mask = FourierMask::radial(16, 16, 0.25, 0.0);
    Array x({2, 16, 16}, 3.7);
    Array y = high_pass(x, mask);
    CHECK(max_abs(y) < 1e-9);
    CHECK(std::abs(mean_value(y)) < 1e-6);
}

TEST_CASE("pure Nyquist checkerboard passes a small-radius high-pass") {
    FourierMask mask = FourierMask::radial(16, 16, 0.25, 0.0);
    Array x({1, 16, 16});
    for (int64_t yx = 0; yx < 256; ++yx) {
        int64_t y = yx / 16, xx = yx % 16;
        x[yx] = ((y + xx) % 2 == 0) ? 1.0 : -1.0;
    }
    // the checkerboard's only nonzero bin is (H/2, W/2), at normalized
    // radius sqrt(2), well outside the 0.25 threshold
    Array y = high_pass(x, mask);
    CHECK(max_abs_diff(x, y) < 1e-5);
}

TEST_CASE("high_pass rejects a mismatched mask") {
    FourierMask mask = FourierMask::radial(8, 8);
    Rng rng(2);
    Array x = rng.normal_array({1, 16, 16});
    CHECK_THROWS(high_pass(x, mask));
}

TEST_CASE("scale_channels scales exactly the first half") {
    ChannelScale cfg;
    Rng rng(3);
    Array x = rng.normal_array({8, 4, 4});
    Array y = scale_channels(x, cfg, 0);
    for (int64_t c = 0; c < 8; ++c)
        for (int64_t p = 0; p < 16; ++p) {
            double expect = c < 4 ? 1.2 * x[c * 16 + p] : x[c * 16 + p];
            CHECK(y[c * 16 + p] == expect);  // untouched channels bit-identical
        }
    // level constants
    CHECK(scale_channels(x, cfg, 1)[0] == doctest::Approx(1.4 * x[0]));
    CHECK(scale_channels(x, cfg, 2)[0] == doctest::Approx(1.6 * x[0]));
    CHECK_THROWS(scale_channels(x, cfg, 3));
    CHECK_THROWS(scale_channels(x, cfg, -1));
    Array tiny = rng.normal_array({1, 4, 4});
    CHECK_THROWS(scale_channels(tiny, cfg, 0));

    // identity constant and multiplicative composition
    ChannelScale ones;
    ones.scale_by_level = {1.0, 1.0, 1.0};
    CHECK(max_abs_diff(scale_channels(x, ones, 0), x) == 0.0);
    Array twice = scale_channels(scale_channels(x, cfg, 1), cfg, 1);
    ChannelScale sq;
    sq.scale_by_level = {1.2 * 1.2, 1.4 * 1.4, 1.6 * 1.6};
    CHECK(max_abs_diff(twice, scale_channels(x, sq, 1)) < 1e-12);
}

TEST_CASE("fmim_transfer composition and linearity") {
    ChannelScale cfg;
    FourierMask mask = FourierMask::radial(8, 8, 0.25, 0.0);
    Rng rng(4);
    Array spa = rng.normal_array({4, 8, 8});
    Array spe = rng.normal_array({4, 8, 8});

    Array zero = Array::zeros_like(spa);
    CHECK(max_abs_diff(fmim_transfer(zero, spe, mask, cfg, 0), scale_channels(spe, cfg, 0)) <
          1e-12);

    FourierMask ident = FourierMask::radial(8, 8, 0.0, 1.0);
    CHECK(max_abs_diff(fmim_transfer(spa, zero, ident, cfg, 0), spa) < 1e-5);

    // linearity in the spatial input
    Array doubled = scaled(spa, 2.0);
    Array a = fmim_transfer(doubled, zero, mask, cfg, 0);
    Array b = scaled(fmim_transfer(spa, zero, mask, cfg, 0), 2.0);
    CHECK(max_abs_diff(a, b) < 1e-9);

    CHECK_THROWS(fmim_transfer(spa, rng.normal_array({4, 8, 9}), mask, cfg, 0));
}

TEST_CASE("batched high_pass equals per-image filtering") {
    FourierMask mask = FourierMask::radial(12, 12, 0.3, 0.0);
    Rng rng(5);
    Array batch = rng.normal_array({2, 3, 12, 12});
    Array out = high_pass(batch, mask);
    for (int64_t n = 0; n < 2; ++n) {
        Array one({3, 12, 12});
        std::copy(batch.data() + n * one.size(), batch.data() + (n + 1) * one.size(), one.data());
        Array ref = high_pass(one, mask);
        for (int64_t i = 0; i < one.size(); ++i)
            CHECK(out[n * one.size() + i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}
