#include "ssdiff/metrics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ssdiff {

double sam_degrees(const Array& pred, const Array& gt) {
    check_same_shape(pred, gt, "sam");
    if (pred.rank() != 3 || pred.dim(0) < 2)
        throw std::invalid_argument("sam: expects (B,H,W) with at least 2 bands");
    int64_t b = pred.dim(0), hw = pred.dim(1) * pred.dim(2);
    double sum = 0.0;
    int64_t valid = 0;
    for (int64_t p = 0; p < hw; ++p) {
        double dot = 0.0, np = 0.0, ng = 0.0;
        for (int64_t c = 0; c < b; ++c) {
            double vp = pred[c * hw + p], vg = gt[c * hw + p];
            dot += vp * vg;
            np += vp * vp;
            ng += vg * vg;
        }
        if (np == 0.0 || ng == 0.0) continue;
        double cosv = std::clamp(dot / std::sqrt(np * ng), -1.0, 1.0);
        sum += std::acos(cosv);
        valid += 1;
    }
    if (valid == 0) throw std::invalid_argument("sam: all-zero image");
    return sum / static_cast<double>(valid) * 180.0 / std::numbers::pi;
}

double ergas(const Array& pred, const Array& gt, int ratio) {
    check_same_shape(pred, gt, "ergas");
    if (pred.rank() != 3) throw std::invalid_argument("ergas: expects (B,H,W)");
    int64_t b = pred.dim(0), hw = pred.dim(1) * pred.dim(2);
    double acc = 0.0;
    for (int64_t c = 0; c < b; ++c) {
        double mse = 0.0, mean = 0.0;
        for (int64_t p = 0; p < hw; ++p) {
            double d = pred[c * hw + p] - gt[c * hw + p];
            mse += d * d;
            mean += gt[c * hw + p];
        }
        mse /= static_cast<double>(hw);
        mean /= static_cast<double>(hw);
        if (mean == 0.0) throw std::invalid_argument("ergas: zero band mean");
        acc += mse / (mean * mean);
    }
    return 100.0 / static_cast<double>(ratio) * std::sqrt(acc / static_cast<double>(b));
}

namespace {

// Cayley-Dickson algebra on length-n (power of two) coefficient vectors:
// (a,b)(c,d) = (ac - d*b, da + bc*), conj (a,b)* = (a*, -b).
void cd_conj(const double* a, double* out, int64_t n) {
    out[0] = a[0];
    for (int64_t i = 1; i < n; ++i) out[i] = -a[i];
}

void cd_mult(const double* a, const double* b, double* out, int64_t n) {
    if (n == 1) {
        out[0] = a[0] * b[0];
        return;
    }
    int64_t h = n / 2;
    std::vector<double> t1(static_cast<size_t>(h)), t2(static_cast<size_t>(h)),
        cj(static_cast<size_t>(h));
    // out1 = a1 c1 - conj(d) b1  with a=(a1,b1), b=(c1,d)
    cd_mult(a, b, t1.data(), h);
    cd_conj(b + h, cj.data(), h);
    cd_mult(cj.data(), a + h, t2.data(), h);
    for (int64_t i = 0; i < h; ++i) out[i] = t1[static_cast<size_t>(i)] - t2[static_cast<size_t>(i)];
    // out2 = d a1 + b1 conj(c1)
    cd_mult(b + h, a, t1.data(), h);
    cd_conj(b, cj.data(), h);
    cd_mult(a + h, cj.data(), t2.data(), h);
    for (int64_t i = 0; i < h; ++i)
        out[h + i] = t1[static_cast<size_t>(i)] + t2[static_cast<size_t>(i)];
}

double cd_norm2(const double* a, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

// Q2^n of a single block; returns false when the block is degenerate
bool q2n_block_value(const Array& pred, const Array& gt, int64_t y0, int64_t x0, int64_t block,
                     double* out) {
    int64_t b = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    int64_t npix = block * block;
    std::vector<double> m1(static_cast<size_t>(b), 0.0), m2(static_cast<size_t>(b), 0.0);
    for (int64_t y = 0; y < block; ++y)
        for (int64_t x = 0; x < block; ++x)
            for (int64_t c = 0; c < b; ++c) {
                m1[static_cast<size_t>(c)] += pred[(c * h + y0 + y) * w + x0 + x];
                m2[static_cast<size_t>(c)] += gt[(c * h + y0 + y) * w + x0 + x];
            }
    for (int64_t c = 0; c < b; ++c) {
        m1[static_cast<size_t>(c)] /= static_cast<double>(npix);
        m2[static_cast<size_t>(c)] /= static_cast<double>(npix);
    }
    double e1 = 0.0, e2 = 0.0;  // second moments of |z|
    std::vector<double> cross(static_cast<size_t>(b), 0.0);
    std::vector<double> z1(static_cast<size_t>(b)), z2c(static_cast<size_t>(b)),
        prod(static_cast<size_t>(b));
    for (int64_t y = 0; y < block; ++y)
        for (int64_t x = 0; x < block; ++x) {
            for (int64_t c = 0; c < b; ++c) {
                z1[static_cast<size_t>(c)] = pred[(c * h + y0 + y) * w + x0 + x];
                z2c[static_cast<size_t>(c)] = gt[(c * h + y0 + y) * w + x0 + x];
            }
            e1 += cd_norm2(z1.data(), b);
            e2 += cd_norm2(z2c.data(), b);
            cd_conj(z2c.data(), z2c.data(), b);
            cd_mult(z1.data(), z2c.data(), prod.data(), b);
            for (int64_t c = 0; c < b; ++c) cross[static_cast<size_t>(c)] += prod[static_cast<size_t>(c)];
        }
    e1 /= static_cast<double>(npix);
    e2 /= static_cast<double>(npix);
    for (int64_t c = 0; c < b; ++c) cross[static_cast<size_t>(c)] /= static_cast<double>(npix);

    double nm1 = cd_norm2(m1.data(), b), nm2 = cd_norm2(m2.data(), b);
    double var1 = e1 - nm1, var2 = e2 - nm2;
    std::vector<double> mprod(static_cast<size_t>(b));
    cd_conj(m2.data(), z2c.data(), b);
    cd_mult(m1.data(), z2c.data(), mprod.data(), b);
    for (int64_t c = 0; c < b; ++c) cross[static_cast<size_t>(c)] -= mprod[static_cast<size_t>(c)];

    if (var1 <= 0.0 || var2 <= 0.0 || nm1 == 0.0 || nm2 == 0.0) return false;
    double s1 = std::sqrt(var1), s2 = std::sqrt(var2);
    double q = std::sqrt(cd_norm2(cross.data(), b)) / (s1 * s2);
    q *= 2.0 * s1 * s2 / (var1 + var2);
    q *= 2.0 * std::sqrt(nm1 * nm2) / (nm1 + nm2);
    *out = q;
    return true;
}

}  // namespace

double q2n(const Array& pred, const Array& gt, int64_t block) {
    check_same_shape(pred, gt, "q2n");
    if (pred.rank() != 3) throw std::invalid_argument("q2n: expects (B,H,W)");
    int64_t b = pred.dim(0);
    if (b != 4 && b != 8) throw std::invalid_argument("q2n: unsupported band count (needs 4 or 8)");
    int64_t h = pred.dim(1), w = pred.dim(2);
    if (block < 2 || block > h || block > w)
        throw std::invalid_argument("q2n: block must satisfy 2 <= block <= min(H,W)");
    double sum = 0.0;
    int64_t kept = 0;
    for (int64_t y0 = 0; y0 + block <= h; y0 += block)
        for (int64_t x0 = 0; x0 + block <= w; x0 += block) {
            double q;
            if (q2n_block_value(pred, gt, y0, x0, block, &q)) {
                sum += q;
                kept += 1;
            }
        }
    if (kept == 0) throw std::invalid_argument("q2n: every block is degenerate");
    return sum / static_cast<double>(kept);
}

namespace {

Array laplacian_filter(const Array& plane) {
    // 3x3 [-1,-1,-1; -1,8,-1; -1,-1,-1] with symmetric padding
    int64_t h = plane.dim(0), w = plane.dim(1);
    Array out({h, w});
    auto ref = [&](int64_t y, int64_t x) {
        if (y < 0) y = -y - 1;
        if (y >= h) y = 2 * h - 1 - y;
        if (x < 0) x = -x - 1;
        if (x >= w) x = 2 * w - 1 - x;
        return plane[y * w + x];
    };
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double s = 8.0 * ref(y, x);
            for (int64_t dy = -1; dy <= 1; ++dy)
                for (int64_t dx = -1; dx <= 1; ++dx)
                    if (dy != 0 || dx != 0) s -= ref(y + dy, x + dx);
            out[y * w + x] = s;
        }
    return out;
}

double pearson(const Array& a, const Array& b) {
    double ma = mean_value(a), mb = mean_value(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::invalid_argument("scc: zero-variance high-pass signal");
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

double scc(const Array& pred, const Array& gt) {
    check_same_shape(pred, gt, "scc");
    if (pred.rank() != 3) throw std::invalid_argument("scc: expects (B,H,W)");
    int64_t b = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    double sum = 0.0;
    for (int64_t c = 0; c < b; ++c) {
        Array pp({h, w}), gg({h, w});
        std::copy(pred.data() + c * h * w, pred.data() + (c + 1) * h * w, pp.data());
        std::copy(gt.data() + c * h * w, gt.data() + (c + 1) * h * w, gg.data());
        sum += pearson(laplacian_filter(pp), laplacian_filter(gg));
    }
    return sum / static_cast<double>(b);
}

double uiqi(const Array& a, const Array& b) {
    check_same_shape(a, b, "uiqi");
    double ma = mean_value(a), mb = mean_value(b);
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    double n = static_cast<double>(a.size());
    va /= n;
    vb /= n;
    cov /= n;
    double denom = (va + vb) * (ma * ma + mb * mb);
    if (denom == 0.0) return 0.0;
    return 4.0 * cov * ma * mb / denom;
}

namespace {
Array band(const Array& img, int64_t c) {
    int64_t h = img.dim(1), w = img.dim(2);
    Array out({h, w});
    std::copy(img.data() + c * h * w, img.data() + (c + 1) * h * w, out.data());
    return out;
}
}  // namespace

double d_lambda(const Array& fused, const Array& ms) {
    if (fused.rank() != 3 || ms.rank() != 3 || fused.dim(0) != ms.dim(0))
        throw std::invalid_argument("d_lambda: band counts disagree");
    int64_t b = fused.dim(0);
    if (b < 2) throw std::invalid_argument("d_lambda: needs at least 2 bands");
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < b; ++j) {
            if (i == j) continue;
            acc += std::abs(uiqi(band(fused, i), band(fused, j)) - uiqi(band(ms, i), band(ms, j)));
            count += 1;
        }
    return acc / static_cast<double>(count);
}

double d_lambda_khan(const Array& fused, const Array& ms, const MtfProfile& profile, int ratio,
                     int64_t q2n_block) {
    Array degraded = mtf_downsample(fused, profile, ratio);
    check_same_shape(degraded, ms, "d_lambda_khan");
    int64_t block = std::min<int64_t>(q2n_block, std::min(ms.dim(1), ms.dim(2)));
    return 1.0 - q2n(degraded, ms, block);
}

double d_s(const Array& fused, const Array& ms, const Array& pan, const MtfProfile& profile,
           int ratio) {
    if (pan.rank() != 3 || pan.dim(0) != 1) throw std::invalid_argument("d_s: pan must be (1,H,W)");
    if (fused.dim(1) != pan.dim(1) || fused.dim(2) != pan.dim(2))
        throw std::invalid_argument("d_s: fused and pan scales disagree");
    if (fused.dim(0) != ms.dim(0) || fused.dim(1) != ratio * ms.dim(1))
        throw std::invalid_argument("d_s: ms must be the reduced grid of fused");
    Array pan_low = mtf_downsample(pan, profile, ratio);
    Array pan_plane = band(pan, 0);
    Array pan_low_plane = band(pan_low, 0);
    int64_t b = fused.dim(0);
    double acc = 0.0;
    for (int64_t c = 0; c < b; ++c)
        acc += std::abs(uiqi(band(fused, c), pan_plane) - uiqi(band(ms, c), pan_low_plane));
    return acc / static_cast<double>(b);
}

double hqnr(double dl, double ds) { return (1.0 - dl) * (1.0 - ds); }

std::map<std::string, std::pair<double, double>> MetricsReport::summary() const {
    std::map<std::string, std::pair<double, double>> out;
    for (const auto& [name, values] : per_sample) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        out[name] = {mean, std::sqrt(var)};
    }
    return out;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os.precision(10);
    os << "# ssdiff metrics report\n# mode: " << resolution_mode << "\n";
    os << "# per-sample records: metric sample value\n";
    for (const auto& [name, values] : per_sample)
        for (size_t i = 0; i < values.size(); ++i)
            os << name << " " << i << " " << values[i] << "\n";
    os << "# summary: metric mean std\n";
    for (const auto& [name, ms] : summary())
        os << name << " " << ms.first << " " << ms.second << "\n";
    return os.str();
}

MetricsReport evaluate_reduced(const std::vector<Array>& preds, const std::vector<Array>& gts,
                               int ratio, int64_t q2n_block) {
    if (preds.size() != gts.size())
        throw std::invalid_argument("evaluate_reduced: sample counts disagree");
    MetricsReport r;
    r.resolution_mode = "reduced";
    for (size_t i = 0; i < preds.size(); ++i) {
        int64_t block = std::min<int64_t>(q2n_block, std::min(gts[i].dim(1), gts[i].dim(2)));
        r.per_sample["SAM"].push_back(sam_degrees(preds[i], gts[i]));
        r.per_sample["ERGAS"].push_back(ergas(preds[i], gts[i], ratio));
        r.per_sample["Q2n"].push_back(q2n(preds[i], gts[i], block));
        r.per_sample["SCC"].push_back(scc(preds[i], gts[i]));
    }
    return r;
}

MetricsReport evaluate_full(const std::vector<Array>& fused, const std::vector<SceneSample>& refs,
                            const MtfProfile& profile, int ratio, int64_t q2n_block,
                            bool use_khan) {
    if (fused.size() != refs.size())
        throw std::invalid_argument("evaluate_full: sample counts disagree");
    MetricsReport r;
    r.resolution_mode = "full";
    for (size_t i = 0; i < fused.size(); ++i) {
        double dl = use_khan ? d_lambda_khan(fused[i], refs[i].ms, profile, ratio, q2n_block)
                             : d_lambda(fused[i], refs[i].ms);
        double ds = d_s(fused[i], refs[i].ms, refs[i].pan, profile, ratio);
        r.per_sample["D_lambda"].push_back(dl);
        r.per_sample["D_s"].push_back(ds);
        r.per_sample["HQNR"].push_back(hqnr(dl, ds));
    }
    return r;
}

}  // namespace ssdiff
