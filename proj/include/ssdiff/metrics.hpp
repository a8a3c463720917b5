#pragma once

#include <map>
#include <string>
#include <vector>

#include "ssdiff/array.hpp"
#include "ssdiff/data.hpp"

namespace ssdiff {

/// Mean spectral angle in degrees; zero-norm pixels are skipped.
double sam_degrees(const Array& pred, const Array& gt);

/// (100/ratio) sqrt(mean_b (RMSE_b / mean(gt_b))^2).
double ergas(const Array& pred, const Array& gt, int ratio = 4);

/// Hypercomplex universal quality index over non-overlapping blocks.
/// Bands must be 4 or 8; block must not exceed the image size.
double q2n(const Array& pred, const Array& gt, int64_t block = 32);

/// Mean per-band Pearson correlation of Laplacian-filtered images.
double scc(const Array& pred, const Array& gt);

/// Global universal image quality index of two planes, stabilizing
/// constants zero; 0 when either moment denominator vanishes.
double uiqi(const Array& a, const Array& b);

/// QNR-style spectral distortion: mean inter-band Q difference (p = 1).
double d_lambda(const Array& fused, const Array& ms);

/// HQNR-style spectral distortion: 1 - Q2n(MTF-degraded fused, ms).
double d_lambda_khan(const Array& fused, const Array& ms, const MtfProfile& profile,
                     int ratio = 4, int64_t q2n_block = 32);

/// Spatial distortion: mean |Q(fused_b, pan) - Q(ms_b, pan_degraded)| (q = 1).
double d_s(const Array& fused, const Array& ms, const Array& pan, const MtfProfile& profile,
           int ratio = 4);

/// (1 - d_lambda) * (1 - d_s).
double hqnr(double dl, double ds);

struct MetricsReport {
    std::string resolution_mode;  // "reduced" | "full"
    std::map<std::string, std::vector<double>> per_sample;

    /// metric -> (mean, population std), recomputed from per_sample.
    std::map<std::string, std::pair<double, double>> summary() const;
    std::string to_text() const;
};

MetricsReport evaluate_reduced(const std::vector<Array>& preds, const std::vector<Array>& gts,
                               int ratio = 4, int64_t q2n_block = 32);

/// refs supply ms and pan; use_khan selects the HQNR D_lambda variant.
MetricsReport evaluate_full(const std::vector<Array>& fused, const std::vector<SceneSample>& refs,
                            const MtfProfile& profile, int ratio = 4, int64_t q2n_block = 32,
                            bool use_khan = true);

}  // namespace ssdiff
