#pragma once

#include "ssdiff/array.hpp"

namespace ssdiff {

/// Per-level feature pair from the two branches, (S,H,W) each.
struct BranchFeatures {
    Array f_spa;
    Array f_spe;
    int level = 0;
};

/// The four projection tensors of the alternating projection fusion.
/// t_a, t_b are HW x S' (spatial domain); t_c, t_d are S' x HW (spectral).
struct ProjectionSet {
    Array t_a;
    Array t_b;
    Array t_c;
    Array t_d;
    int64_t s_prime = 0;
};

/// Weights of the learned per-pixel linear maps that generate the
/// projections (1x1 convolutions): w* is S' x S, b* is S'.
struct ProjectionParams {
    Array wa, ba;
    Array wb, bb;
    Array wc, bc;
    Array wd, bd;
};

/// Gradient-blocking flags for branch-wise alternating fine-tuning.
/// At most one flag may be set.
struct DetachMask {
    bool detach_spatial_output = false;
    bool detach_spectral_output = false;
};

/// t_a, t_b from f_spa only; t_c, t_d from f_spe only.
ProjectionSet make_projections(const BranchFeatures& feats, int64_t s_prime,
                               const ProjectionParams& params);

/// Softmax(T_a T_b^T / sqrt(S')) T_c^T, row-wise softmax; HW x S'.
Array project_spatial(const ProjectionSet& p);

/// Softmax(T_c T_d^T * HW / sqrt(S'^3)) T_a^T; S' x HW.
Array project_spectral(const ProjectionSet& p, int64_t hw);

/// Element-wise fusion t_spa ⊙ t_spe^T; HW x S'.
Array fuse(const Array& t_spa, const Array& t_spe);

/// Reshape an HW x S' fused matrix back to (S',H,W) for downstream layers.
Array fused_to_chw(const Array& fused, int64_t h, int64_t w);

}  // namespace ssdiff
