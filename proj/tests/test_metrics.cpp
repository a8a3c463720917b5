#include <doctest.h>

#include <cmath>

#include "metric_oracles.hpp"
#include "ssdiff/data.hpp"
#include "ssdiff/metrics.hpp"
#include "ssdiff/random.hpp"

using namespace ssdiff;
using namespace ssdiff::oracles;

TEST_CASE("sam: trivial values and invariances") {
    Rng rng(1);
    Array gt = rng.uniform_array({4, 8, 8}, 0.1, 0.9);
    CHECK(sam_degrees(gt, gt) == doctest::Approx(0.0).epsilon(1e-9));

    // orthogonal two-band pixel pair
    Array a({2, 1, 1});
    Array b({2, 1, 1});
    a[0] = 1.0;
    b[1] = 1.0;
    CHECK(sam_degrees(a, b) == doctest::Approx(90.0));

    // scale invariance
    CHECK(sam_degrees(scaled(gt, 2.0), gt) == doctest::Approx(0.0).epsilon(1e-6));
    Array pred = rng.uniform_array({4, 8, 8}, 0.1, 0.9);
    CHECK(sam_degrees(scaled(pred, 3.0), gt) ==
          doctest::Approx(sam_degrees(pred, gt)).epsilon(1e-9));

    CHECK_THROWS(sam_degrees(Array({4, 8, 8}), Array({4, 8, 8})));
}

TEST_CASE("ergas: hand-evaluated single band and scaling") {
    // gt == 10 everywhere, pred == 11 -> (100/4) * (1/10) = 2.5
    Array gt({1, 4, 4}, 10.0);
    Array pred({1, 4, 4}, 11.0);
    CHECK(ergas(pred, gt, 4) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(ergas(gt, gt, 4) == 0.0);

    // linear in a uniform additive error on constant gt
    Array pred2({1, 4, 4}, 12.0);
    CHECK(ergas(pred2, gt, 4) == doctest::Approx(5.0).epsilon(1e-12));

    // joint positive rescaling leaves the value unchanged
    Rng rng(2);
    Array p = rng.uniform_array({3, 8, 8}, 0.2, 0.8);
    Array g = rng.uniform_array({3, 8, 8}, 0.2, 0.8);
    CHECK(ergas(scaled(p, 7.0), scaled(g, 7.0), 4) ==
          doctest::Approx(ergas(p, g, 4)).epsilon(1e-9));

    CHECK_THROWS(ergas(pred, Array({1, 4, 4}, 0.0), 4));
}

TEST_CASE("q2n: perfect score, noise separation, band-count contract") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        SceneSample s = synth_scene(seed, 8, 32);
        CHECK(q2n(s.gt, s.gt, 32) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(q2n(s.ms, s.ms, 8) == doctest::Approx(1.0).epsilon(1e-9));
    }
    // strong uncorrelated noise drives the index well below 0.5
    for (uint64_t seed = 0; seed < 10; ++seed) {
        SceneSample s = synth_scene(seed, 4, 32);
        Rng rng(seed + 77);
        Array noisy = s.gt;
        for (int64_t i = 0; i < noisy.size(); ++i) noisy[i] += 0.8 * rng.normal();
        CAPTURE(seed);
        CHECK(q2n(noisy, s.gt, 16) < 0.5);
    }
    Array three({3, 8, 8}, 0.5);
    CHECK_THROWS(q2n(three, three, 8));
    Array four({4, 8, 8}, 0.5);
    CHECK_THROWS(q2n(four, four, 16));  // block larger than the image
}

TEST_CASE("scc: trivial values and noise floor") {
    Rng rng(3);
    SceneSample s = synth_scene(11, 4, 32);
    CHECK(scc(s.gt, s.gt) == doctest::Approx(1.0).epsilon(1e-12));

    Array shifted = s.gt;
    for (int64_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.17;
    CHECK(scc(shifted, s.gt) == doctest::Approx(1.0).epsilon(1e-9));

    for (uint64_t seed = 0; seed < 20; ++seed) {
        SceneSample sc = synth_scene(seed, 4, 64);
        Rng nr(seed + 123);
        Array noise = nr.normal_array({4, 64, 64});
        CAPTURE(seed);
        CHECK(std::abs(scc(noise, sc.gt)) < 0.1);
    }
    CHECK_THROWS(scc(Array({2, 8, 8}, 1.0), Array({2, 8, 8}, 1.0)));  // zero variance
}

TEST_CASE("full-resolution indices: product formula and self-consistent triple") {
    CHECK(hqnr(0.1, 0.2) == doctest::Approx(0.72).epsilon(1e-12));
    CHECK(hqnr(0.0, 0.0) == 1.0);

    // self-consistent triple: every band equals the textured PAN plane and
    // ms is its MTF degradation under a uniform profile
    for (uint64_t seed = 0; seed < 5; ++seed) {
        SceneSample s = synth_scene(seed, 4, 32);
        MtfProfile uni = MtfProfile::uniform(4, 0.3);
        Array fused({4, 32, 32});
        for (int64_t c = 0; c < 4; ++c)
            for (int64_t p = 0; p < 32 * 32; ++p) fused[c * 32 * 32 + p] = s.pan[p];
        Array ms = mtf_downsample(fused, uni, 4);
        double dl_qnr = d_lambda(fused, ms);
        double dl_khan = d_lambda_khan(fused, ms, uni, 4, 8);
        double ds = d_s(fused, ms, s.pan, uni, 4);
        CAPTURE(seed);
        CHECK(std::abs(dl_qnr) < 1e-3);
        CHECK(std::abs(dl_khan) < 1e-3);
        CHECK(std::abs(ds) < 1e-3);
        CHECK(hqnr(dl_khan, ds) == doctest::Approx(1.0).epsilon(1e-3));
    }

    // blurry fused images leave spatial distortion on a textured scene
    for (uint64_t seed = 0; seed < 10; ++seed) {
        SceneSample s = synth_scene(seed, 4, 64);
        double ds = d_s(s.lms, s.ms, s.pan, MtfProfile::generic(4), 4);
        CAPTURE(seed);
        CHECK(ds > 0.005);
    }
}

TEST_CASE("oracle equivalence on 8x8 random images, 50 seeds") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        Array pred = rng.uniform_array({4, 8, 8}, 0.05, 0.95);
        Array gt = rng.uniform_array({4, 8, 8}, 0.05, 0.95);
        CAPTURE(seed);
        CHECK(sam_degrees(pred, gt) == doctest::Approx(sam_oracle(pred, gt)).epsilon(1e-6));
        CHECK(ergas(pred, gt, 4) == doctest::Approx(ergas_oracle(pred, gt, 4)).epsilon(1e-6));
        CHECK(q2n(pred, gt, 8) == doctest::Approx(q2n_oracle(pred, gt, 8)).epsilon(1e-6));
        CHECK(scc(pred, gt) == doctest::Approx(scc_oracle(pred, gt)).epsilon(1e-6));

        Array pan = rng.uniform_array({1, 8, 8}, 0.05, 0.95);
        Array ms = rng.uniform_array({4, 2, 2}, 0.05, 0.95);
        MtfProfile prof = MtfProfile::generic(4);
        CHECK(d_lambda(pred, ms) == doctest::Approx(d_lambda_oracle(pred, ms)).epsilon(1e-6));
        CHECK(d_s(pred, ms, pan, prof, 4) ==
              doctest::Approx(d_s_oracle(pred, ms, pan, prof, 4)).epsilon(1e-6));
        CHECK(uiqi(band_oracle(pred, 0), band_oracle(gt, 0)) ==
              doctest::Approx(uiqi_oracle(band_oracle(pred, 0), band_oracle(gt, 0)))
                  .epsilon(1e-9));
    }
}

TEST_CASE("octonion branch of the hypercomplex index matches its oracle") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 500);
        Array pred = rng.uniform_array({8, 8, 8}, 0.05, 0.95);
        Array gt = rng.uniform_array({8, 8, 8}, 0.05, 0.95);
        CHECK(q2n(pred, gt, 8) == doctest::Approx(q2n_oracle(pred, gt, 8)).epsilon(1e-6));
    }
}

TEST_CASE("report aggregation equals hand aggregation") {
    MetricsReport r;
    r.resolution_mode = "reduced";
    r.per_sample["SAM"] = {1.0, 2.0, 3.0};
    auto s = r.summary();
    CHECK(s["SAM"].first == doctest::Approx(2.0));
    CHECK(s["SAM"].second == doctest::Approx(std::sqrt(2.0 / 3.0)));

    std::vector<Array> preds, gts;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(seed);
        preds.push_back(rng.uniform_array({4, 8, 8}, 0.1, 0.9));
        gts.push_back(rng.uniform_array({4, 8, 8}, 0.1, 0.9));
    }
    MetricsReport rep = evaluate_reduced(preds, gts, 4, 8);
    CHECK(rep.per_sample.at("SAM").size() == 3);
    CHECK(rep.per_sample.at("ERGAS").size() == 3);
    CHECK(rep.per_sample.at("Q2n").size() == 3);
    CHECK(rep.per_sample.at("SCC").size() == 3);
    std::string text = rep.to_text();
    CHECK(text.find("mode: reduced") != std::string::npos);
    CHECK(text.find("SAM") != std::string::npos);

    // full mode carries exactly the no-reference triple
    SceneSample sc = synth_scene(1, 4, 32);
    MetricsReport full = evaluate_full({sc.lms}, {sc}, MtfProfile::generic(4), 4, 8, true);
    CHECK(full.per_sample.size() == 3);
    CHECK(full.per_sample.count("D_lambda") == 1);
    CHECK(full.per_sample.count("D_s") == 1);
    CHECK(full.per_sample.count("HQNR") == 1);
}
