#include "ssdiff/network.hpp"

#include <cmath>
#include <stdexcept>

namespace ssdiff {

void NetworkConfig::validate() const {
    if (bands < 1) throw std::invalid_argument("network.bands: must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("network.base_channels: must be >= 1");
    if (level_multipliers.size() != 3)
        throw std::invalid_argument("network.level_multipliers: expects 3 entries");
    if (blocks_per_level < 1)
        throw std::invalid_argument("network.blocks_per_level: must be >= 1");
    if (time_embed_dim < 4 || time_embed_dim % 2 != 0)
        throw std::invalid_argument("network.time_embed_dim: must be even and >= 4");
    if (variant < 1 || variant > 5) throw std::invalid_argument("network.variant: must be 1..5");
    for (int l = 0; l < 3; ++l)
        if (width(l) % norm_groups != 0)
            throw std::invalid_argument("network.norm_groups: must divide every level width");
}

Tensor ParamRegistry::add(const std::string& name, Branch branch, Array init) {
    Tensor t(std::move(init), true);
    entries_.push_back({name, branch, t});
    return t;
}

const ParamRegistry::Entry* ParamRegistry::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

int64_t ParamRegistry::param_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.value().size();
    return n;
}

int64_t ParamRegistry::param_count(Branch b) const {
    int64_t n = 0;
    for (const auto& e : entries_)
        if (e.branch == b) n += e.tensor.value().size();
    return n;
}

void ParamRegistry::set_branch_trainable(Branch b, bool trainable) {
    for (auto& e : entries_)
        if (e.branch == b) e.tensor.set_requires_grad(trainable);
}

void ParamRegistry::set_all_trainable(bool trainable) {
    for (auto& e : entries_) e.tensor.set_requires_grad(trainable);
}

void ParamRegistry::zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

Array time_embed(int64_t t, int64_t dim) {
    if (t < 0) throw std::invalid_argument("time_embed: t must be >= 0");
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embed: dim must be even");
    int64_t half = dim / 2;
    Array out({dim});
    for (int64_t i = 0; i < half; ++i) {
        double freq = half > 1
                          ? std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half - 1))
                          : 1.0;
        double arg = static_cast<double>(t) * freq;
        out[i] = std::sin(arg);
        out[half + i] = std::cos(arg);
    }
    return out;
}

Array time_embed_batch(const std::vector<int64_t>& ts, int64_t dim) {
    Array out({static_cast<int64_t>(ts.size()), dim});
    for (size_t n = 0; n < ts.size(); ++n) {
        Array e = time_embed(ts[n], dim);
        std::copy(e.data(), e.data() + dim, out.data() + static_cast<int64_t>(n) * dim);
    }
    return out;
}

namespace detail {

Conv2dLayer::Conv2dLayer(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng,
                         int cin, int cout, int k, int stride_, int pad_, bool zero_init)
    : stride(stride_), pad(pad_) {
    double std = zero_init ? 0.0 : std::sqrt(1.0 / (static_cast<double>(cin) * k * k));
    w = reg.add(prefix + ".w", br, rng.normal_array({cout, cin, k, k}, std));
    b = reg.add(prefix + ".b", br, Array({cout}));
}

Tensor Conv2dLayer::forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }

GroupNormLayer::GroupNormLayer(ParamRegistry& reg, const std::string& prefix, Branch br,
                               int channels, int groups_)
    : groups(groups_) {
    gamma = reg.add(prefix + ".gamma", br, Array({channels}, 1.0));
    beta = reg.add(prefix + ".beta", br, Array({channels}));
}

Tensor GroupNormLayer::forward(const Tensor& x) const {
    return group_norm(x, gamma, beta, groups);
}

LinearLayer::LinearLayer(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng,
                         int in, int out, bool zero_init) {
    double std = zero_init ? 0.0 : std::sqrt(1.0 / static_cast<double>(in));
    w = reg.add(prefix + ".w", br, rng.normal_array({out, in}, std));
    b = reg.add(prefix + ".b", br, Array({out}));
}

Tensor LinearLayer::forward(const Tensor& x) const { return linear(x, w, b); }

ResBlock::ResBlock(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng,
                   int channels, int temb_dim, int groups) {
    gn1 = GroupNormLayer(reg, prefix + ".gn1", br, channels, groups);
    conv1 = Conv2dLayer(reg, prefix + ".conv1", br, rng, channels, channels, 3, 1, 1);
    temb_proj = LinearLayer(reg, prefix + ".temb", br, rng, temb_dim, channels);
    gn2 = GroupNormLayer(reg, prefix + ".gn2", br, channels, groups);
    // the second conv starts at zero so a fresh block is the identity
    conv2 = Conv2dLayer(reg, prefix + ".conv2", br, rng, channels, channels, 3, 1, 1, true);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb) const {
    Tensor h = conv1.forward(silu(gn1.forward(x)));
    h = add_channel_vec(h, temb_proj.forward(silu(temb)));
    h = conv2.forward(silu(gn2.forward(h)));
    return add(x, h);
}

ApfmLayer::ApfmLayer(ParamRegistry& reg, const std::string& prefix, Rng& rng, int channels,
                     int s_prime_)
    : s_prime(s_prime_) {
    proj_a = Conv2dLayer(reg, prefix + ".a", Branch::spatial, rng, channels, s_prime_, 1, 1, 0);
    proj_b = Conv2dLayer(reg, prefix + ".b", Branch::spatial, rng, channels, s_prime_, 1, 1, 0);
    proj_c = Conv2dLayer(reg, prefix + ".c", Branch::spectral, rng, channels, s_prime_, 1, 1, 0);
    proj_d = Conv2dLayer(reg, prefix + ".d", Branch::spectral, rng, channels, s_prime_, 1, 1, 0);
    // the similarity logits scale with HW; a cool start keeps the softmax
    // out of saturation while the generators find their range
    for (Conv2dLayer* l : {&proj_a, &proj_b, &proj_c, &proj_d}) {
        Array& w = l->w.value();
        for (int64_t i = 0; i < w.size(); ++i) w[i] *= 0.1;
    }
    out_proj =
        Conv2dLayer(reg, prefix + ".out", Branch::spectral, rng, s_prime_, channels, 1, 1, 0, true);
}

Tensor ApfmLayer::forward(const Tensor& f_spa, const Tensor& f_spe,
                          const DetachMask& mask) const {
    if (mask.detach_spatial_output && mask.detach_spectral_output)
        throw std::invalid_argument("apfm: both detach flags set");
    int64_t h = f_spa.dim(2), w = f_spa.dim(3), hw = h * w;
    int64_t nb = f_spa.dim(0);
    double sp = static_cast<double>(s_prime);

    Tensor ta_map = proj_a.forward(f_spa);  // (N,S',H,W)
    Tensor tb_map = proj_b.forward(f_spa);
    Tensor tc_map = proj_c.forward(f_spe);
    Tensor td_map = proj_d.forward(f_spe);

    Tensor ta_pix = chw_to_pixmat(ta_map);                    // T_a      (N,HW,S')
    Tensor tb_pix = chw_to_pixmat(tb_map);                    // T_b      (N,HW,S')
    Tensor tc_flat = reshape(tc_map, {nb, s_prime, hw});      // T_c      (N,S',HW)
    Tensor td_pix = chw_to_pixmat(td_map);                    // T_d^T    (N,HW,S')
    Tensor tc_pix = chw_to_pixmat(tc_map);                    // T_c^T    (N,HW,S')
    Tensor ta_flat = reshape(ta_map, {nb, s_prime, hw});      // T_a^T    (N,S',HW)

    // Fine-tuning one branch blocks the other branch's leak into the live
    // projection: T_c^T inside T^spa, T_a^T inside T^spe.
    Tensor tc_for_spa = mask.detach_spectral_output ? detach(tc_pix) : tc_pix;
    Tensor ta_for_spe = mask.detach_spatial_output ? detach(ta_flat) : ta_flat;

    Tensor spa_logits = matmul_scaled(ta_pix, transpose_last2(tb_pix), 1.0 / std::sqrt(sp));
    Tensor t_spa = matmul(softmax_rows(spa_logits), tc_for_spa);  // (N,HW,S')

    double spe_scale = static_cast<double>(hw) / std::sqrt(sp * sp * sp);
    Tensor spe_logits = matmul_scaled(tc_flat, td_pix, spe_scale);
    Tensor t_spe = matmul(softmax_rows(spe_logits), ta_for_spe);  // (N,S',HW)

    if (mask.detach_spatial_output) t_spa = detach(t_spa);
    if (mask.detach_spectral_output) t_spe = detach(t_spe);

    Tensor fused = mul(t_spa, transpose_last2(t_spe));  // (N,HW,S')
    Tensor fmap = pixmat_to_chw(fused, h, w);
    return add(f_spe, out_proj.forward(fmap));
}

BranchTrunk::BranchTrunk(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng,
                         const NetworkConfig& cfg, int in_channels) {
    int w0 = cfg.width(0), w1 = cfg.width(1), w2 = cfg.width(2);
    in_conv = Conv2dLayer(reg, prefix + ".in", br, rng, in_channels, w0, 3, 1, 1);
    for (int i = 0; i < cfg.blocks_per_level; ++i) {
        enc1.emplace_back(reg, prefix + ".enc1." + std::to_string(i), br, rng, w0,
                          cfg.time_embed_dim, cfg.norm_groups);
        enc2.emplace_back(reg, prefix + ".enc2." + std::to_string(i), br, rng, w1,
                          cfg.time_embed_dim, cfg.norm_groups);
        dec2.emplace_back(reg, prefix + ".dec2." + std::to_string(i), br, rng, w1,
                          cfg.time_embed_dim, cfg.norm_groups);
        dec1.emplace_back(reg, prefix + ".dec1." + std::to_string(i), br, rng, w0,
                          cfg.time_embed_dim, cfg.norm_groups);
    }
    down1 = Conv2dLayer(reg, prefix + ".down1", br, rng, w0, w1, 3, 2, 1);
    down2 = Conv2dLayer(reg, prefix + ".down2", br, rng, w1, w2, 3, 2, 1);
    up2 = Conv2dLayer(reg, prefix + ".up2", br, rng, w2, w1, 3, 1, 1);
    up1 = Conv2dLayer(reg, prefix + ".up1", br, rng, w1, w0, 3, 1, 1);
}

}  // namespace detail

SsdiffNet::SsdiffNet(NetworkConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int b = cfg_.bands;
    int w0 = cfg_.width(0);
    temb_l1_ = detail::LinearLayer(reg_, "temb.l1", Branch::shared, rng, cfg_.time_embed_dim,
                                   cfg_.time_embed_dim);
    temb_l2_ = detail::LinearLayer(reg_, "temb.l2", Branch::shared, rng, cfg_.time_embed_dim,
                                   cfg_.time_embed_dim);

    int coupled_in = 1 + 2 * b;
    switch (cfg_.variant) {
        case 1:
            spatial_ = std::make_unique<detail::BranchTrunk>(reg_, "spa", Branch::spatial, rng,
                                                             cfg_, coupled_in);
            break;
        case 2:
            spectral_ = std::make_unique<detail::BranchTrunk>(reg_, "spe", Branch::spectral, rng,
                                                              cfg_, coupled_in);
            break;
        default:
            spatial_ = std::make_unique<detail::BranchTrunk>(reg_, "spa", Branch::spatial, rng,
                                                             cfg_, 1 + b);
            spectral_ = std::make_unique<detail::BranchTrunk>(reg_, "spe", Branch::spectral, rng,
                                                              cfg_, b + b);
            break;
    }

    site_levels_ = {0, 1, 2, 1, 0};
    if (cfg_.variant == 5) {
        for (size_t s = 0; s < site_levels_.size(); ++s) {
            int width = cfg_.width(site_levels_[s]);
            int sp = width;
            apfm_.emplace_back(reg_, "apfm." + std::to_string(s), rng, width, sp);
        }
    }

    int head_in = cfg_.variant == 3 ? 2 * w0 : w0;
    head1_ = detail::Conv2dLayer(reg_, "head.l1", Branch::shared, rng, head_in, w0, 1, 1, 0);
    head2_ = detail::Conv2dLayer(reg_, "head.l2", Branch::shared, rng, w0, b, 1, 1, 0, true);
}

Tensor SsdiffNet::run_trunk_collect(const detail::BranchTrunk& trunk, const Tensor& input,
                                    const Tensor& temb, std::vector<Tensor>* junctions) const {
    Tensor s = trunk.in_conv.forward(input);
    for (const auto& blk : trunk.enc1) s = blk.forward(s, temb);
    Tensor s1 = s;
    s = trunk.down1.forward(s);
    for (const auto& blk : trunk.enc2) s = blk.forward(s, temb);
    Tensor s2 = s;
    s = trunk.down2.forward(s);
    Tensor smid = s;
    s = add(trunk.up2.forward(upsample_nearest2(s)), s2);
    for (const auto& blk : trunk.dec2) s = blk.forward(s, temb);
    Tensor sd2 = s;
    s = add(trunk.up1.forward(upsample_nearest2(s)), s1);
    for (const auto& blk : trunk.dec1) s = blk.forward(s, temb);
    if (junctions) *junctions = {s1, s2, smid, sd2, s};
    return s;
}

Tensor SsdiffNet::fuse_site(size_t site, const Tensor& f_spa, const Tensor& z,
                            const DetachMask& mask) const {
    int level = site_levels_[site];
    FourierMask fm = FourierMask::radial(f_spa.dim(2), f_spa.dim(3), cfg_.fmim_threshold_radius,
                                         cfg_.fmim_low_gain);
    Tensor h = add(scale_channels_t(z, cfg_.fmim_scales, level), fourier_highpass(f_spa, fm));
    if (cfg_.variant == 4) return add(h, f_spa);
    return apfm_[site].forward(f_spa, h, mask);
}

Tensor SsdiffNet::run_spectral_fused(const Tensor& input, const Tensor& temb,
                                     const std::vector<Tensor>& spa, const DetachMask& mask) const {
    const auto& trunk = *spectral_;
    Tensor z = trunk.in_conv.forward(input);
    z = fuse_site(0, spa[0], z, mask);
    for (const auto& blk : trunk.enc1) z = blk.forward(z, temb);
    Tensor z1 = z;
    z = trunk.down1.forward(z);
    z = fuse_site(1, spa[1], z, mask);
    for (const auto& blk : trunk.enc2) z = blk.forward(z, temb);
    Tensor z2 = z;
    z = trunk.down2.forward(z);
    z = fuse_site(2, spa[2], z, mask);
    z = add(trunk.up2.forward(upsample_nearest2(z)), z2);
    z = fuse_site(3, spa[3], z, mask);
    for (const auto& blk : trunk.dec2) z = blk.forward(z, temb);
    z = add(trunk.up1.forward(upsample_nearest2(z)), z1);
    z = fuse_site(4, spa[4], z, mask);
    for (const auto& blk : trunk.dec1) z = blk.forward(z, temb);
    return z;
}

Tensor SsdiffNet::forward(const DenoiseInput& in, const DetachMask& mask) const {
    if (mask.detach_spatial_output && mask.detach_spectral_output)
        throw std::invalid_argument("denoise: both detach flags set");
    if (in.pan.rank() != 4 || in.lms.rank() != 4 || in.x_t.rank() != 4)
        throw std::invalid_argument("denoise: inputs must be (N,C,H,W)");
    int64_t n = in.pan.dim(0), h = in.pan.dim(2), w = in.pan.dim(3);
    if (in.pan.dim(1) != 1) throw std::invalid_argument("denoise: pan must have one band");
    if (in.lms.dim(1) != cfg_.bands || in.x_t.dim(1) != cfg_.bands)
        throw std::invalid_argument("denoise: band count does not match config");
    if (in.lms.dim(0) != n || in.x_t.dim(0) != n || in.lms.dim(2) != h || in.x_t.dim(2) != h ||
        in.lms.dim(3) != w || in.x_t.dim(3) != w)
        throw std::invalid_argument("denoise: condition shapes disagree");
    if (h % 4 != 0 || w % 4 != 0)
        throw std::invalid_argument("denoise: spatial size not divisible by downsampling factor 4");
    if (static_cast<int64_t>(in.t.size()) != n)
        throw std::invalid_argument("denoise: timestep count does not match batch");

    Tensor temb_base = constant(time_embed_batch(in.t, cfg_.time_embed_dim));
    Tensor temb = temb_l2_.forward(silu(temb_l1_.forward(temb_base)));

    Tensor pan = constant(in.pan);
    Tensor lms = constant(in.lms);
    Tensor x_t = constant(in.x_t);

    Tensor out_features;
    switch (cfg_.variant) {
        case 1: {
            Tensor input = concat_channels(pan, concat_channels(lms, x_t));
            out_features = run_trunk_collect(*spatial_, input, temb, nullptr);
            break;
        }
        case 2: {
            Tensor input = concat_channels(pan, concat_channels(lms, x_t));
            out_features = run_trunk_collect(*spectral_, input, temb, nullptr);
            break;
        }
        case 3: {
            Tensor sd = run_trunk_collect(*spatial_, concat_channels(pan, x_t), temb, nullptr);
            Tensor zd = run_trunk_collect(*spectral_, concat_channels(lms, x_t), temb, nullptr);
            out_features = concat_channels(sd, zd);
            break;
        }
        default: {
            std::vector<Tensor> junctions;
            run_trunk_collect(*spatial_, concat_channels(pan, x_t), temb, &junctions);
            out_features = run_spectral_fused(concat_channels(lms, x_t), temb, junctions, mask);
            break;
        }
    }
    return head2_.forward(silu(head1_.forward(out_features)));
}

Array SsdiffNet::denoise(const DenoiseInput& in) const {
    NoGradGuard ng;
    return forward(in).value();
}

void SsdiffNet::randomize_all(Rng& rng, double stddev) {
    for (auto& e : reg_.entries()) {
        Array& v = e.tensor.value();
        bool is_gamma = e.name.size() >= 6 && e.name.rfind(".gamma") == e.name.size() - 6;
        for (int64_t i = 0; i < v.size(); ++i)
            v[i] = (is_gamma ? 1.0 : 0.0) + stddev * rng.normal();
    }
}

}  // namespace ssdiff
