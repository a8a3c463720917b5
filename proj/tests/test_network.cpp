#include <doctest.h>

#include <cmath>

#include "ssdiff/apfm.hpp"
#include "ssdiff/network.hpp"
#include "ssdiff/random.hpp"
#include "ssdiff/tensor.hpp"

using namespace ssdiff;

namespace {

NetworkConfig micro_config(int bands = 4, int variant = 5) {
    NetworkConfig cfg;
    cfg.bands = bands;
    cfg.base_channels = 8;
    cfg.time_embed_dim = 16;
    cfg.norm_groups = 4;
    cfg.variant = variant;
    return cfg;
}

DenoiseInput random_input(Rng& rng, int bands, int64_t n, int64_t hw, int64_t T = 50) {
    DenoiseInput in;
    in.pan = rng.normal_array({n, 1, hw, hw});
    in.lms = rng.normal_array({n, bands, hw, hw});
    in.x_t = rng.normal_array({n, bands, hw, hw});
    for (int64_t i = 0; i < n; ++i) in.t.push_back(1 + rng.uniform_int(0, T - 1));
    return in;
}

}  // namespace

TEST_CASE("time embedding basics") {
    Array e0 = time_embed(0, 16);
    for (int64_t i = 0; i < 8; ++i) {
        CHECK(e0[i] == 0.0);      // sin half
        CHECK(e0[8 + i] == 1.0);  // cos half
    }
    CHECK(max_abs_diff(time_embed(17, 32), time_embed(17, 32)) == 0.0);
    // consecutive steps differ in every frequency band
    Array a = time_embed(41, 32), b = time_embed(42, 32);
    for (int64_t i = 0; i < 16; ++i) {
        double da = std::abs(a[i] - b[i]) + std::abs(a[16 + i] - b[16 + i]);
        CHECK(da > 1e-8);
    }
    CHECK_THROWS(time_embed(3, 15));
}

TEST_CASE("parameter budget matches the published table within 5%") {
    Rng rng(1);
    NetworkConfig v5;  // defaults: 8 bands, width 32, variant 5
    SsdiffNet net5(v5, rng);
    double p5 = static_cast<double>(net5.param_count());
    CHECK(std::abs(p5 - 1420e3) / 1420e3 < 0.05);

    NetworkConfig v2 = v5;
    v2.variant = 2;
    SsdiffNet net2(v2, rng);
    double p2 = static_cast<double>(net2.param_count());
    CHECK(std::abs(p2 - 654e3) / 654e3 < 0.05);

    // V4 drops exactly the attention projections
    NetworkConfig v4 = v5;
    v4.variant = 4;
    SsdiffNet net4(v4, rng);
    CHECK(net4.param_count() < net5.param_count());
}

TEST_CASE("forward shape contract and error paths") {
    Rng rng(2);
    SsdiffNet net(micro_config(), rng);
    DenoiseInput in = random_input(rng, 4, 2, 16);
    Array out = net.denoise(in);
    CHECK(out.shape() == std::vector<int64_t>{2, 4, 16, 16});

    DenoiseInput bad = in;
    bad.pan = rng.normal_array({2, 1, 18, 18});
    CHECK_THROWS(net.denoise(bad));  // not divisible by 4 & mismatched

    DenoiseInput bad2 = in;
    bad2.lms = rng.normal_array({2, 3, 16, 16});
    CHECK_THROWS(net.denoise(bad2));  // band mismatch

    DenoiseInput bad3 = in;
    bad3.t = {5};
    CHECK_THROWS(net.denoise(bad3));
}

TEST_CASE("zero-initialized head predicts a zero residual") {
    Rng rng(3);
    SsdiffNet net(micro_config(), rng);
    DenoiseInput in = random_input(rng, 4, 1, 16);
    Array out = net.denoise(in);
    CHECK(max_abs(out) == 0.0);
}

TEST_CASE("forward is deterministic and batch-independent") {
    Rng rng(4);
    SsdiffNet net(micro_config(), rng);
    Rng pr(5);
    net.randomize_all(pr);
    DenoiseInput in = random_input(rng, 4, 3, 16);
    Array a = net.denoise(in);
    Array b = net.denoise(in);
    CHECK(max_abs_diff(a, b) == 0.0);

    // sample 0 alone equals sample 0 inside the batch
    DenoiseInput solo;
    solo.pan = Array({1, 1, 16, 16});
    solo.lms = Array({1, 4, 16, 16});
    solo.x_t = Array({1, 4, 16, 16});
    std::copy(in.pan.data(), in.pan.data() + solo.pan.size(), solo.pan.data());
    std::copy(in.lms.data(), in.lms.data() + solo.lms.size(), solo.lms.data());
    std::copy(in.x_t.data(), in.x_t.data() + solo.x_t.size(), solo.x_t.data());
    solo.t = {in.t[0]};
    Array alone = net.denoise(solo);
    double diff = 0.0;
    for (int64_t i = 0; i < alone.size(); ++i) diff = std::max(diff, std::abs(alone[i] - a[i]));
    CHECK(diff < 1e-5);
}

TEST_CASE("network attention layer matches the plain projection ops") {
    Rng rng(6);
    NetworkConfig cfg = micro_config();
    SsdiffNet net(cfg, rng);
    ParamRegistry& reg = net.params();

    int64_t s = 8, h = 4, w = 4;
    Rng fr(7);
    Array f_spa = fr.normal_array({1, s, h, w});
    Array f_spe = fr.normal_array({1, s, h, w});

    // pull the site-0 projection weights out of the registry
    auto get = [&](const std::string& name) { return reg.find(name)->tensor.value(); };
    ProjectionParams pp;
    pp.wa = get("apfm.0.a.w").reshaped({s, s});
    pp.ba = get("apfm.0.a.b");
    pp.wb = get("apfm.0.b.w").reshaped({s, s});
    pp.bb = get("apfm.0.b.b");
    pp.wc = get("apfm.0.c.w").reshaped({s, s});
    pp.bc = get("apfm.0.c.b");
    pp.wd = get("apfm.0.d.w").reshaped({s, s});
    pp.bd = get("apfm.0.d.b");

    BranchFeatures feats{f_spa.reshaped({s, h, w}), f_spe.reshaped({s, h, w}), 0};
    ProjectionSet ps = make_projections(feats, s, pp);
    Array fused = fuse(project_spatial(ps), project_spectral(ps, h * w));
    Array fused_chw = fused_to_chw(fused, h, w);

    // network layer: out = f_spe + out_proj(fused); out_proj is zero-init,
    // so compare the raw fused map against out after removing the residual
    // by randomizing out_proj to identity-free weights and re-deriving:
    // simplest cross-check is out == f_spe with the fresh zero out_proj.
    detail::ApfmLayer layer;
    {
        ParamRegistry tmp;
        Rng lr(8);
        layer = detail::ApfmLayer(tmp, "x", lr, static_cast<int>(s), static_cast<int>(s));
        layer.proj_a.w.value() = pp.wa.reshaped({s, s, 1, 1});
        layer.proj_a.b.value() = pp.ba;
        layer.proj_b.w.value() = pp.wb.reshaped({s, s, 1, 1});
        layer.proj_b.b.value() = pp.bb;
        layer.proj_c.w.value() = pp.wc.reshaped({s, s, 1, 1});
        layer.proj_c.b.value() = pp.bc;
        layer.proj_d.w.value() = pp.wd.reshaped({s, s, 1, 1});
        layer.proj_d.b.value() = pp.bd;
        // identity-like out_proj: 1x1 conv with identity matrix, zero bias
        Array wi({s, s, 1, 1});
        for (int64_t i = 0; i < s; ++i) wi[i * s + i] = 1.0;
        layer.out_proj.w.value() = wi;
    }
    NoGradGuard ng;
    Tensor out = layer.forward(constant(f_spa), constant(f_spe), {});
    // out = f_spe + fused  (identity out_proj)
    for (int64_t i = 0; i < fused_chw.size(); ++i)
        CHECK(out.value()[i] ==
              doctest::Approx(f_spe[i] + fused_chw[i]).epsilon(1e-10));
}

TEST_CASE("detach masks zero exactly the frozen generators inside apfm") {
    int64_t s = 6, h = 4, w = 4;
    ParamRegistry reg;
    Rng rng(9);
    detail::ApfmLayer layer(reg, "ap", rng, static_cast<int>(s), static_cast<int>(s));
    // re-randomize the zero-init out_proj so gradients flow through it
    layer.out_proj.w.value() = rng.normal_array({s, s, 1, 1}, 0.2);

    Rng fr(10);
    Array f_spa = fr.normal_array({2, s, h, w});
    Array f_spe = fr.normal_array({2, s, h, w});

    auto run = [&](DetachMask mask) {
        reg.zero_grads();
        Tensor out = layer.forward(constant(f_spa), constant(f_spe), mask);
        Array target = out.value();
        for (int64_t i = 0; i < target.size(); ++i) target[i] -= 100.0;
        backward(l1_loss(out, constant(target)));
    };
    auto grad_linf = [&](const std::string& name) {
        const auto* e = reg.find(name);
        REQUIRE(e != nullptr);
        return e->tensor.has_grad() ? max_abs(e->tensor.grad()) : 0.0;
    };

    run({});  // clear mask: all four generators receive gradient
    CHECK(grad_linf("ap.a.w") > 0.0);
    CHECK(grad_linf("ap.b.w") > 0.0);
    CHECK(grad_linf("ap.c.w") > 0.0);
    CHECK(grad_linf("ap.d.w") > 0.0);

    run({true, false});  // spatial detached -> a and b exactly zero
    CHECK(grad_linf("ap.a.w") == 0.0);
    CHECK(grad_linf("ap.b.w") == 0.0);
    CHECK(grad_linf("ap.a.b") == 0.0);
    CHECK(grad_linf("ap.b.b") == 0.0);
    CHECK(grad_linf("ap.c.w") > 0.0);
    CHECK(grad_linf("ap.d.w") > 0.0);

    run({false, true});  // spectral detached -> c and d exactly zero
    CHECK(grad_linf("ap.c.w") == 0.0);
    CHECK(grad_linf("ap.d.w") == 0.0);
    CHECK(grad_linf("ap.c.b") == 0.0);
    CHECK(grad_linf("ap.d.b") == 0.0);
    CHECK(grad_linf("ap.a.w") > 0.0);
    CHECK(grad_linf("ap.b.w") > 0.0);

    CHECK_THROWS(layer.forward(constant(f_spa), constant(f_spe), {true, true}));
}

TEST_CASE("branch-tagged freezing zeroes whole-branch gradients end to end") {
    Rng rng(11);
    SsdiffNet net(micro_config(), rng);
    Rng pr(12);
    net.randomize_all(pr);
    ParamRegistry& reg = net.params();

    auto run = [&](DetachMask mask) {
        reg.set_all_trainable(true);
        if (mask.detach_spatial_output) reg.set_branch_trainable(Branch::spatial, false);
        if (mask.detach_spectral_output) reg.set_branch_trainable(Branch::spectral, false);
        reg.zero_grads();
        Rng br(13);
        DenoiseInput in = random_input(br, 4, 2, 16);
        Tensor out = net.forward(in, mask);
        Array target = out.value();
        for (int64_t i = 0; i < target.size(); ++i) target[i] -= 100.0;
        backward(l1_loss(out, constant(target)));
    };
    auto branch_grad = [&](Branch b) {
        double mx = 0.0;
        for (const auto& e : reg.entries())
            if (e.branch == b && e.tensor.has_grad()) mx = std::max(mx, max_abs(e.tensor.grad()));
        return mx;
    };

    run({true, false});  // fine-tune spectral: spatial frozen
    CHECK(branch_grad(Branch::spatial) == 0.0);
    CHECK(branch_grad(Branch::spectral) > 0.0);

    run({false, true});  // fine-tune spatial: spectral frozen
    CHECK(branch_grad(Branch::spectral) == 0.0);
    CHECK(branch_grad(Branch::spatial) > 0.0);

    run({});
    CHECK(branch_grad(Branch::spatial) > 0.0);
    CHECK(branch_grad(Branch::spectral) > 0.0);
}

TEST_CASE("ablation variants run and differ structurally") {
    Rng rng(14);
    for (int variant : {1, 2, 3, 4, 5}) {
        SsdiffNet net(micro_config(4, variant), rng);
        Rng pr(15);
        net.randomize_all(pr);
        Rng br(16);
        DenoiseInput in = random_input(br, 4, 1, 16);
        Array out = net.denoise(in);
        CHECK(out.shape() == std::vector<int64_t>{1, 4, 16, 16});
        CHECK(all_finite(out));
    }
    // V4 has no attention parameters at all
    SsdiffNet v4(micro_config(4, 4), rng);
    for (const auto& e : v4.params().entries()) CHECK(e.name.find("apfm") == std::string::npos);
}

TEST_CASE("V3 output concatenates independent branches (information flow)") {
    Rng rng(17);
    SsdiffNet net(micro_config(4, 3), rng);
    Rng pr(18);
    net.randomize_all(pr);
    Rng br(19);
    DenoiseInput in = random_input(br, 4, 1, 16);
    Array base = net.denoise(in);
    // zeroing the pan input must change the output (spatial branch counts)
    DenoiseInput no_pan = in;
    no_pan.pan = Array({1, 1, 16, 16});
    CHECK(max_abs_diff(net.denoise(no_pan), base) > 0.0);
}

TEST_CASE("end-to-end finite-difference gradient check on a micro model") {
    Rng rng(20);
    NetworkConfig cfg = micro_config();
    cfg.norm_groups = 4;
    SsdiffNet net(cfg, rng);
    Rng pr(21);
    net.randomize_all(pr, 0.1);
    Rng br(22);
    DenoiseInput in = random_input(br, 4, 1, 8);
    Array gt = br.normal_array({1, 4, 8, 8});

    auto loss_value = [&]() {
        NoGradGuard ng;
        Tensor out = net.forward(in, {});
        return l1_loss(out, constant(gt)).value()[0];
    };

    net.params().set_all_trainable(true);
    net.params().zero_grads();
    Tensor loss = l1_loss(net.forward(in, {}), constant(gt));
    backward(loss);

    Rng pick(23);
    int checked = 0;
    auto& entries = net.params().entries();
    while (checked < 24) {
        auto& e = entries[static_cast<size_t>(pick.uniform_int(
            0, static_cast<int64_t>(entries.size()) - 1))];
        int64_t idx = pick.uniform_int(0, e.tensor.value().size() - 1);
        double an = e.tensor.has_grad() ? e.tensor.grad()[idx] : 0.0;
        double h = 3e-6;
        double orig = e.tensor.value()[idx];
        e.tensor.value()[idx] = orig + h;
        double up = loss_value();
        e.tensor.value()[idx] = orig - h;
        double dn = loss_value();
        e.tensor.value()[idx] = orig;
        double fd = (up - dn) / (2.0 * h);
        CAPTURE(e.name);
        CAPTURE(idx);
        CHECK(std::abs(fd - an) <= 1e-3 * std::max({1.0, std::abs(fd), std::abs(an)}));
        checked += 1;
    }
}
