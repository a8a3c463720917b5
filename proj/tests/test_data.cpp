#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "ssdiff/data.hpp"
#include "ssdiff/hdf5_io.hpp"
#include "ssdiff/random.hpp"

using namespace ssdiff;

TEST_CASE("mtf kernel: unit DC gain and Nyquist response oracle") {
    for (double gain : {0.15, 0.22, 0.29, 0.35}) {
        Array k = gaussian_mtf_kernel(gain, 4, 41);
        double sum = 0.0;
        for (int64_t i = 0; i < k.size(); ++i) sum += k[i];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

        // frequency-response oracle: evaluate the DTFT at the decimated
        // grid's Nyquist frequency (0.5/4 cycles per sample) and recover G
        double f = 0.5 / 4.0;
        double re = 0.0;
        int64_t half = k.size() / 2;
        for (int64_t i = 0; i < k.size(); ++i)
            re += k[i] * std::cos(2.0 * std::numbers::pi * f * static_cast<double>(i - half));
        CHECK(re == doctest::Approx(gain).epsilon(1e-3));
    }
    CHECK_THROWS(gaussian_mtf_kernel(0.0, 4, 41));
    CHECK_THROWS(gaussian_mtf_kernel(0.3, 4, 40));
}

TEST_CASE("mtf_downsample: constants, shapes, mean preservation") {
    MtfProfile prof = MtfProfile::generic(3);
    Array flat({3, 64, 64}, 0.42);
    Array down = mtf_downsample(flat, prof);
    CHECK(down.shape() == std::vector<int64_t>{3, 16, 16});
    CHECK(max_abs_diff(down, Array({3, 16, 16}, 0.42)) < 1e-12);

    Rng rng(1);
    SceneSample scene = synth_scene(17, 4, 64);
    Array big = upsample_poly(scene.gt, 2);  // a smooth natural-statistics plane
    Array reduced = mtf_downsample_gains(big, {0.3, 0.3, 0.3, 0.3}, 4, 41);
    for (int64_t c = 0; c < 4; ++c) {
        double m1 = 0.0, m2 = 0.0;
        for (int64_t p = 0; p < big.size() / 4; ++p) m1 += big[c * (big.size() / 4) + p];
        for (int64_t p = 0; p < reduced.size() / 4; ++p)
            m2 += reduced[c * (reduced.size() / 4) + p];
        m1 /= static_cast<double>(big.size() / 4);
        m2 /= static_cast<double>(reduced.size() / 4);
        CHECK(std::abs(m1 - m2) / std::abs(m1) < 0.02);
    }

    CHECK_THROWS(mtf_downsample(Array({3, 63, 64}, 1.0), prof));  // indivisible
    CHECK_THROWS(mtf_downsample(Array({5, 64, 64}, 1.0), prof));  // gain count
}

TEST_CASE("upsample_poly: constants, shape, ramp reproduction, aligned decimation") {
    Array flat({2, 16, 16}, 0.77);
    Array up = upsample_poly(flat, 4);
    CHECK(up.shape() == std::vector<int64_t>{2, 64, 64});
    CHECK(max_abs_diff(up, Array({2, 64, 64}, 0.77)) < 1e-6);

    // a linear ramp comes back as a linear ramp in the interior
    Array ramp({1, 16, 16});
    for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 0; x < 16; ++x) ramp.at3(0, y, x) = 0.02 * static_cast<double>(x);
    Array upr = upsample_poly(ramp, 4);
    // the input sample (0, y, x) lands at fine position 4x + 2; the fine
    // ramp slope is 0.02/4 per pixel
    for (int64_t x = 16; x < 48; ++x) {
        double expect = 0.02 * (static_cast<double>(x) - 2.0) / 4.0;
        CHECK(std::abs(upr.at3(0, 32, x) - expect) < 1e-3);
    }

    // decimating at the aligned phase returns the original samples
    Rng rng(2);
    Array img = synth_scene(3, 4, 32).gt;
    Array up4 = upsample_poly(img, 4);
    double rmse = 0.0;
    for (int64_t c = 0; c < 4; ++c)
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x) {
                double d = up4.at3(c, 4 * y + 2, 4 * x + 2) - img.at3(c, y, x);
                rmse += d * d;
            }
    rmse = std::sqrt(rmse / static_cast<double>(img.size()));
    CHECK(rmse < 1e-2);

    CHECK_THROWS(upsample_poly(flat, 3));
}

TEST_CASE("make_reduced satisfies the Wald layout") {
    SceneSample full = synth_scene(5, 4, 32);
    // reuse the pristine outputs as a stand-in full-res pair
    Array pan_full = upsample_poly(full.pan, 4);
    Array ms_full = full.gt;
    SceneSample red = make_reduced(pan_full, ms_full, MtfProfile::generic(4));
    red.validate();
    CHECK(red.gt.shape() == std::vector<int64_t>{4, 32, 32});
    CHECK(red.pan.shape() == std::vector<int64_t>{1, 32, 32});
    CHECK(red.ms.shape() == std::vector<int64_t>{4, 8, 8});
    CHECK(same_shape(red.lms, red.gt));
    CHECK(min_value(red.lms) > -0.05);
    CHECK(max_value(red.lms) < 1.05);
    CHECK_THROWS(make_reduced(full.pan, ms_full, MtfProfile::generic(4)));  // wrong pan grid
}

TEST_CASE("synth_scene: reproducible, bounded, PAN correlates with band mean") {
    SceneSample a = synth_scene(42, 8, 64);
    SceneSample b = synth_scene(42, 8, 64);
    CHECK(max_abs_diff(a.gt, b.gt) == 0.0);
    CHECK(max_abs_diff(a.pan, b.pan) == 0.0);
    CHECK(max_abs_diff(a.lms, b.lms) == 0.0);
    a.validate();

    for (const Array* plane : {&a.gt, &a.pan, &a.ms, &a.lms}) {
        CHECK(all_finite(*plane));
        CHECK(min_value(*plane) >= -1e-9);
        CHECK(max_value(*plane) <= 1.0 + 1e-9);
    }

    // Pearson correlation between pan and the gt band mean across 20 seeds
    for (uint64_t seed = 0; seed < 20; ++seed) {
        SceneSample s = synth_scene(seed, 8, 32);
        int64_t hw = 32 * 32;
        Array mean({hw});
        for (int64_t p = 0; p < hw; ++p) {
            double m = 0.0;
            for (int64_t c = 0; c < 8; ++c) m += s.gt[c * hw + p];
            mean[p] = m / 8.0;
        }
        double mp = mean_value(s.pan), mm = mean_value(mean);
        double num = 0.0, dp = 0.0, dm = 0.0;
        for (int64_t p = 0; p < hw; ++p) {
            num += (s.pan[p] - mp) * (mean[p] - mm);
            dp += (s.pan[p] - mp) * (s.pan[p] - mp);
            dm += (mean[p] - mm) * (mean[p] - mm);
        }
        double r = num / std::sqrt(dp * dm);
        CAPTURE(seed);
        CHECK(r > 0.8);
    }

    CHECK_THROWS(synth_scene(0, 4, 30));  // not divisible by 4
}

TEST_CASE("dataset container round trip and error contract") {
    std::vector<SceneSample> scenes;
    for (int i = 0; i < 3; ++i) scenes.push_back(synth_scene(static_cast<uint64_t>(i), 4, 16));
    std::string path = "data_roundtrip_test.h5";
    save_dataset(path, scenes);

    std::vector<SceneSample> loaded = load_dataset(path);
    REQUIRE(loaded.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(max_abs_diff(loaded[static_cast<size_t>(i)].gt, scenes[static_cast<size_t>(i)].gt) ==
              0.0);
        CHECK(max_abs_diff(loaded[static_cast<size_t>(i)].ms, scenes[static_cast<size_t>(i)].ms) ==
              0.0);
    }

    // byte-identical re-synthesis under the same seed
    std::string path2 = "data_roundtrip_test2.h5";
    std::vector<SceneSample> again;
    for (int i = 0; i < 3; ++i) again.push_back(synth_scene(static_cast<uint64_t>(i), 4, 16));
    save_dataset(path2, again);
    std::vector<SceneSample> loaded2 = load_dataset(path2);
    for (int i = 0; i < 3; ++i)
        CHECK(max_abs_diff(loaded[static_cast<size_t>(i)].lms,
                           loaded2[static_cast<size_t>(i)].lms) == 0.0);

    // a container missing 'pan' fails with a keyed error, no partial sample
    {
        H5File f = H5File::create("data_missing_pan.h5");
        f.write("gt", Array({1, 4, 16, 16}, 0.5));
        f.write("lms", Array({1, 4, 16, 16}, 0.5));
        f.write("ms", Array({1, 4, 4, 4}, 0.5));
        f.write_attr("max_value", 1.0);
    }
    try {
        load_dataset("data_missing_pan.h5");
        FAIL("expected a missing-key error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("pan") != std::string::npos);
    }

    // normalization by the stored sensor maximum
    {
        H5File f = H5File::create("data_norm.h5");
        f.write("gt", Array({1, 4, 16, 16}, 1023.5));
        f.write("lms", Array({1, 4, 16, 16}, 1023.5));
        f.write("ms", Array({1, 4, 4, 4}, 1023.5));
        f.write("pan", Array({1, 1, 16, 16}, 1023.5));
    }
    std::vector<SceneSample> norm = load_dataset("data_norm.h5", 2047.0);
    CHECK(norm[0].gt[0] == doctest::Approx(0.5).epsilon(1e-9));

    std::remove(path.c_str());
    std::remove(path2.c_str());
    std::remove("data_missing_pan.h5");
    std::remove("data_norm.h5");
}
