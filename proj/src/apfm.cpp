#include "ssdiff/apfm.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

namespace ssdiff {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

void softmax_rows_inplace(RowMat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double mx = m.row(r).maxCoeff();
        if (!std::isfinite(mx)) throw std::invalid_argument("projection: non-finite input");
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
}
}  // namespace

ProjectionSet make_projections(const BranchFeatures& feats, int64_t s_prime,
                               const ProjectionParams& params) {
    if (s_prime <= 0) throw std::invalid_argument("make_projections: s_prime must be positive");
    check_same_shape(feats.f_spa, feats.f_spe, "make_projections");
    if (feats.f_spa.rank() != 3) throw std::invalid_argument("make_projections: expects (S,H,W)");
    int64_t s = feats.f_spa.dim(0), hw = feats.f_spa.dim(1) * feats.f_spa.dim(2);

    auto apply = [&](const Array& f, const Array& w, const Array& b, bool pixels_major) {
        if (w.rank() != 2 || w.dim(0) != s_prime || w.dim(1) != s || b.dim(0) != s_prime)
            throw std::invalid_argument("make_projections: projection weight shape mismatch");
        // f is (S,HW) channel-major; w*f is (S',HW)
        CMatMap mf(f.data(), s, hw);
        CMatMap mw(w.data(), s_prime, s);
        RowMat r = mw * mf;
        for (Eigen::Index i = 0; i < r.rows(); ++i) r.row(i).array() += b[i];
        Array out = pixels_major ? Array({hw, s_prime}) : Array({s_prime, hw});
        if (pixels_major) {
            MatMap mo(out.data(), hw, s_prime);
            mo = r.transpose();
        } else {
            MatMap mo(out.data(), s_prime, hw);
            mo = r;
        }
        return out;
    };

    ProjectionSet p;
    p.s_prime = s_prime;
    p.t_a = apply(feats.f_spa, params.wa, params.ba, true);
    p.t_b = apply(feats.f_spa, params.wb, params.bb, true);
    p.t_c = apply(feats.f_spe, params.wc, params.bc, false);
    p.t_d = apply(feats.f_spe, params.wd, params.bd, false);
    return p;
}

Array project_spatial(const ProjectionSet& p) {
    int64_t hw = p.t_a.dim(0), sp = p.t_a.dim(1);
    if (p.t_b.dim(0) != hw || p.t_b.dim(1) != sp || p.t_c.dim(0) != sp || p.t_c.dim(1) != hw)
        throw std::invalid_argument("project_spatial: inconsistent projection shapes");
    CMatMap ta(p.t_a.data(), hw, sp);
    CMatMap tb(p.t_b.data(), hw, sp);
    CMatMap tc(p.t_c.data(), sp, hw);
    RowMat logits = ta * tb.transpose() / std::sqrt(static_cast<double>(sp));
    softmax_rows_inplace(logits);
    Array out({hw, sp});
    MatMap mo(out.data(), hw, sp);
    mo.noalias() = logits * tc.transpose();
    return out;
}

Array project_spectral(const ProjectionSet& p, int64_t hw) {
    int64_t sp = p.t_c.dim(0);
    if (p.t_c.dim(1) != hw || p.t_d.dim(0) != sp || p.t_d.dim(1) != hw || p.t_a.dim(0) != hw)
        throw std::invalid_argument("project_spectral: inconsistent projection shapes");
    CMatMap tc(p.t_c.data(), sp, hw);
    CMatMap td(p.t_d.data(), sp, hw);
    CMatMap ta(p.t_a.data(), hw, sp);
    double scale = static_cast<double>(hw) / std::sqrt(std::pow(static_cast<double>(sp), 3.0));
    RowMat logits = tc * td.transpose() * scale;
    softmax_rows_inplace(logits);
    Array out({sp, hw});
    MatMap mo(out.data(), sp, hw);
    mo.noalias() = logits * ta.transpose();
    return out;
}

Array fuse(const Array& t_spa, const Array& t_spe) {
    int64_t hw = t_spa.dim(0), sp = t_spa.dim(1);
    if (t_spe.rank() != 2 || t_spe.dim(0) != sp || t_spe.dim(1) != hw)
        throw std::invalid_argument("fuse: incompatible shapes after transposition");
    Array out({hw, sp});
    for (int64_t i = 0; i < hw; ++i)
        for (int64_t j = 0; j < sp; ++j) out[i * sp + j] = t_spa[i * sp + j] * t_spe[j * hw + i];
    return out;
}

Array fused_to_chw(const Array& fused, int64_t h, int64_t w) {
    int64_t hw = fused.dim(0), sp = fused.dim(1);
    if (hw != h * w) throw std::invalid_argument("fused_to_chw: pixel count mismatch");
    Array out({sp, h, w});
    for (int64_t i = 0; i < hw; ++i)
        for (int64_t j = 0; j < sp; ++j) out[j * hw + i] = fused[i * sp + j];
    return out;
}

}  // namespace ssdiff
