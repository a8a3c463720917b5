#pragma once

#include <array>

#include "ssdiff/array.hpp"
#include "ssdiff/tensor.hpp"

namespace ssdiff {

/// Per-frequency gain grid for the inter-branch Fourier filter.
/// `alpha` is stored in FFT-native bin order (DC at index 0); the radial
/// geometry is defined on the centered spectrum. Gain is `low_gain` for
/// normalized radius below `threshold_radius` and 1 outside.
struct FourierMask {
    Array alpha;  // (H,W)
    double threshold_radius = 0.25;
    double low_gain = 0.0;

    static FourierMask radial(int64_t h, int64_t w, double threshold_radius = 0.25,
                              double low_gain = 0.0);
};

/// The three constants applied to the first half of the spectral-branch
/// channels at the three channel widths, narrowest first.
struct ChannelScale {
    std::array<double, 3> scale_by_level{1.2, 1.4, 1.6};
};

/// IFFT(FFT(x) * alpha) per channel, imaginary residue discarded.
/// Accepts (C,H,W) or (N,C,H,W); the mask must match the spatial size.
Array high_pass(const Array& x_spa, const FourierMask& mask);

/// First floor(C/2) channels multiplied by the level constant, rest untouched.
Array scale_channels(const Array& x_spe, const ChannelScale& cfg, int level);

/// Feature delivered into the spectral branch: scale_channels(x_spe) + high_pass(x_spa).
Array fmim_transfer(const Array& x_spa, const Array& x_spe, const FourierMask& mask,
                    const ChannelScale& cfg, int level);

// Differentiable versions for use inside the denoiser. The Fourier filter is
// linear and self-adjoint for a real mask, so its backward pass reapplies it.
Tensor fourier_highpass(const Tensor& x, const FourierMask& mask);
Tensor scale_channels_t(const Tensor& x, const ChannelScale& cfg, int level);

}  // namespace ssdiff
