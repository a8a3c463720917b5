#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ssdiff/apfm.hpp"
#include "ssdiff/array.hpp"
#include "ssdiff/fmim.hpp"
#include "ssdiff/random.hpp"
#include "ssdiff/tensor.hpp"

namespace ssdiff {

enum class Branch { shared, spatial, spectral };

struct NetworkConfig {
    int bands = 8;
    int base_channels = 32;
    std::vector<int> level_multipliers{1, 2, 4};  // widths for level 1, level 2, bottleneck
    int blocks_per_level = 2;
    int time_embed_dim = 128;
    int norm_groups = 8;
    int variant = 5;  // ablation id V1..V5
    double fmim_threshold_radius = 0.25;
    double fmim_low_gain = 0.0;
    ChannelScale fmim_scales{};

    int width(int level) const { return base_channels * level_multipliers[static_cast<size_t>(level)]; }
    void validate() const;
};

/// Named trainable leaves, tagged with the branch they belong to so the
/// fine-tuning schedule can freeze one side wholesale.
class ParamRegistry {
public:
    struct Entry {
        std::string name;
        Branch branch;
        Tensor tensor;
    };

    Tensor add(const std::string& name, Branch branch, Array init);
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    const Entry* find(const std::string& name) const;
    int64_t param_count() const;
    int64_t param_count(Branch b) const;
    void set_branch_trainable(Branch b, bool trainable);
    void set_all_trainable(bool trainable);
    void zero_grads();

private:
    std::vector<Entry> entries_;
};

/// Deterministic sinusoidal embedding of a timestep; dim must be even.
Array time_embed(int64_t t, int64_t dim);
Array time_embed_batch(const std::vector<int64_t>& ts, int64_t dim);

struct DenoiseInput {
    Array pan;   // (N,1,H,W)
    Array lms;   // (N,B,H,W), already upsampled x4
    Array x_t;   // (N,B,H,W)
    std::vector<int64_t> t;  // per-sample timesteps
};

namespace detail {

struct Conv2dLayer {
    Tensor w, b;
    int stride = 1, pad = 0;
    Conv2dLayer() = default;
    Conv2dLayer(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng, int cin,
                int cout, int k, int stride, int pad, bool zero_init = false);
    Tensor forward(const Tensor& x) const;
};

struct GroupNormLayer {
    Tensor gamma, beta;
    int groups = 8;
    GroupNormLayer() = default;
    GroupNormLayer(ParamRegistry& reg, const std::string& prefix, Branch br, int channels,
                   int groups);
    Tensor forward(const Tensor& x) const;
};

struct LinearLayer {
    Tensor w, b;
    LinearLayer() = default;
    LinearLayer(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng, int in,
                int out, bool zero_init = false);
    Tensor forward(const Tensor& x) const;
};

struct ResBlock {
    GroupNormLayer gn1, gn2;
    Conv2dLayer conv1, conv2;
    LinearLayer temb_proj;
    ResBlock() = default;
    ResBlock(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng, int channels,
             int temb_dim, int groups);
    Tensor forward(const Tensor& x, const Tensor& temb) const;
};

/// Cross-domain attention fusion between the two branch features.
struct ApfmLayer {
    Conv2dLayer proj_a, proj_b;  // spatial-side generators (1x1)
    Conv2dLayer proj_c, proj_d;  // spectral-side generators (1x1)
    Conv2dLayer out_proj;        // fused S' -> S, zero-init
    int64_t s_prime = 0;
    ApfmLayer() = default;
    ApfmLayer(ParamRegistry& reg, const std::string& prefix, Rng& rng, int channels, int s_prime);
    Tensor forward(const Tensor& f_spa, const Tensor& f_spe, const DetachMask& mask) const;
};

struct BranchTrunk {
    Conv2dLayer in_conv;
    std::vector<ResBlock> enc1, enc2, dec2, dec1;
    Conv2dLayer down1, down2, up2, up1;
    BranchTrunk() = default;
    BranchTrunk(ParamRegistry& reg, const std::string& prefix, Branch br, Rng& rng,
                const NetworkConfig& cfg, int in_channels);
};

}  // namespace detail

/// Dual-branch conditional denoiser predicting the clean residual.
class SsdiffNet {
public:
    SsdiffNet(NetworkConfig cfg, Rng& rng);

    const NetworkConfig& config() const { return cfg_; }
    ParamRegistry& params() { return reg_; }
    const ParamRegistry& params() const { return reg_; }
    int64_t param_count() const { return reg_.param_count(); }

    /// Full forward pass; output is the predicted residual (N,B,H,W).
    Tensor forward(const DenoiseInput& in, const DetachMask& mask = {}) const;

    /// Inference convenience: forward without building a graph.
    Array denoise(const DenoiseInput& in) const;

    /// Re-initializes every parameter (including normally zero-initialized
    /// output layers) with small random values; for tests and grad checks.
    void randomize_all(Rng& rng, double stddev = 0.05);

private:
    Tensor run_trunk_collect(const detail::BranchTrunk& trunk, const Tensor& input,
                             const Tensor& temb, std::vector<Tensor>* junctions) const;
    Tensor run_spectral_fused(const Tensor& input, const Tensor& temb,
                              const std::vector<Tensor>& spa_junctions,
                              const DetachMask& mask) const;
    Tensor fuse_site(size_t site, const Tensor& f_spa, const Tensor& z,
                     const DetachMask& mask) const;

    NetworkConfig cfg_;
    ParamRegistry reg_;
    detail::LinearLayer temb_l1_, temb_l2_;
    std::unique_ptr<detail::BranchTrunk> spatial_;
    std::unique_ptr<detail::BranchTrunk> spectral_;
    std::vector<detail::ApfmLayer> apfm_;  // 5 fusion sites for V5
    detail::Conv2dLayer head1_, head2_;
    std::vector<int> site_levels_;  // FMIM constant index per fusion site
};

}  // namespace ssdiff
