#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssdiff/array.hpp"
#include "ssdiff/random.hpp"

namespace ssdiff {

/// One training/evaluation scene. pan and lms share the full grid (H,W);
/// ms is the factor-4 reduced grid; gt is absent for full-resolution data.
struct SceneSample {
    Array gt;   // (B,H,W) or empty
    Array pan;  // (1,H,W)
    Array ms;   // (B,H/4,W/4)
    Array lms;  // (B,H,W)
    void validate() const;
};

/// Sensor MTF description: per-band Gaussian gain at the Nyquist frequency
/// of the decimated grid, plus the PAN gain.
struct MtfProfile {
    std::vector<double> nyquist_gains;
    double pan_gain = 0.15;
    int kernel_size = 41;

    static MtfProfile wv3();
    static MtfProfile qb();
    static MtfProfile gf2();
    static MtfProfile generic(int bands, double gain = 0.32, double pan = 0.15);
    /// Equal gains for bands and PAN; degradations of identical planes match.
    static MtfProfile uniform(int bands, double gain = 0.32);
};

/// Sampled Gaussian whose frequency response at 0.5/factor cycles/sample is
/// `nyquist_gain`; normalized to unit DC gain.
Array gaussian_mtf_kernel(double nyquist_gain, int factor, int size);

/// Per-band MTF Gaussian filtering (symmetric padding) followed by
/// decimation. Single-band images use profile.pan_gain.
Array mtf_downsample(const Array& img, const MtfProfile& profile, int factor = 4);
Array mtf_downsample_gains(const Array& img, const std::vector<double>& gains, int factor,
                           int kernel_size);

/// Separable 23-tap polynomial-kernel interpolation, one dyadic stage per
/// power of two in `factor` (supports 2 and 4).
Array upsample_poly(const Array& img, int factor = 4);

/// Wald's protocol: gt <- ms_full, pan <- downsampled pan_full,
/// ms <- downsampled ms_full, lms <- interpolated ms.
SceneSample make_reduced(const Array& pan_full, const Array& ms_full, const MtfProfile& profile,
                         int factor = 4);

/// Seeded synthetic scene: piecewise-smooth multiband content, PAN from a
/// nonnegative band mix plus fine texture, reduced per Wald's protocol.
SceneSample synth_scene(uint64_t seed, int bands, int size);

/// Reads a gt/lms/ms/pan container, scaling by the stored max_value
/// attribute when present or `default_max_value` otherwise.
std::vector<SceneSample> load_dataset(const std::string& path, double default_max_value = 2047.0);

/// Writes samples in the same container layout (max_value = 1).
void save_dataset(const std::string& path, const std::vector<SceneSample>& samples);

/// Gaussian blur helper used by the synthesizer (symmetric padding).
Array gaussian_blur(const Array& plane, double sigma);

}  // namespace ssdiff
