#pragma once

// Test-only metric oracles: direct, loop-by-loop transcriptions of each
// formula, kept independent of the library implementations they check.

#include <cmath>
#include <numbers>
#include <vector>

#include "ssdiff/array.hpp"
#include "ssdiff/data.hpp"

namespace ssdiff::oracles {

inline double sam_oracle(const Array& pred, const Array& gt) {
    int64_t b = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    double total = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double dot = 0.0, n1 = 0.0, n2 = 0.0;
            for (int64_t c = 0; c < b; ++c) {
                double p = pred.at3(c, y, x);
                double g = gt.at3(c, y, x);
                dot += p * g;
                n1 += p * p;
                n2 += g * g;
            }
            if (n1 == 0.0 || n2 == 0.0) continue;
            double cv = dot / (std::sqrt(n1) * std::sqrt(n2));
            if (cv > 1.0) cv = 1.0;
            if (cv < -1.0) cv = -1.0;
            total += std::acos(cv);
            count += 1;
        }
    }
    return total / static_cast<double>(count) * (180.0 / std::numbers::pi);
}

inline double ergas_oracle(const Array& pred, const Array& gt, int ratio) {
    int64_t b = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    double acc = 0.0;
    for (int64_t c = 0; c < b; ++c) {
        double se = 0.0, mean = 0.0;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double d = pred.at3(c, y, x) - gt.at3(c, y, x);
                se += d * d;
                mean += gt.at3(c, y, x);
            }
        double rmse = std::sqrt(se / static_cast<double>(h * w));
        mean /= static_cast<double>(h * w);
        acc += (rmse / mean) * (rmse / mean);
    }
    return (100.0 / ratio) * std::sqrt(acc / static_cast<double>(b));
}

// hypercomplex product by the Cayley-Dickson doubling rule, transcribed
// directly from the definition (a,b)(c,d) = (ac - d*b, da + bc*)
inline std::vector<double> cd_conj_oracle(const std::vector<double>& a) {
    std::vector<double> r(a.size());
    r[0] = a[0];
    for (size_t i = 1; i < a.size(); ++i) r[i] = -a[i];
    return r;
}

inline std::vector<double> cd_mult_oracle(const std::vector<double>& x,
                                          const std::vector<double>& y) {
    size_t n = x.size();
    if (n == 1) return {x[0] * y[0]};
    size_t h = n / 2;
    std::vector<double> a(x.begin(), x.begin() + static_cast<long>(h));
    std::vector<double> b(x.begin() + static_cast<long>(h), x.end());
    std::vector<double> c(y.begin(), y.begin() + static_cast<long>(h));
    std::vector<double> d(y.begin() + static_cast<long>(h), y.end());
    std::vector<double> first = cd_mult_oracle(a, c);
    std::vector<double> t = cd_mult_oracle(cd_conj_oracle(d), b);
    for (size_t i = 0; i < h; ++i) first[i] -= t[i];
    std::vector<double> second = cd_mult_oracle(d, a);
    std::vector<double> u = cd_mult_oracle(b, cd_conj_oracle(c));
    std::vector<double> out(n);
    for (size_t i = 0; i < h; ++i) {
        out[i] = first[i];
        out[h + i] = second[i] + u[i];
    }
    return out;
}

inline double q2n_oracle(const Array& pred, const Array& gt, int64_t block) {
    int64_t b = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    double total = 0.0;
    int64_t kept = 0;
    for (int64_t y0 = 0; y0 + block <= h; y0 += block) {
        for (int64_t x0 = 0; x0 + block <= w; x0 += block) {
            int64_t npix = block * block;
            std::vector<double> m1(static_cast<size_t>(b), 0.0), m2(static_cast<size_t>(b), 0.0);
            for (int64_t y = y0; y < y0 + block; ++y)
                for (int64_t x = x0; x < x0 + block; ++x)
                    for (int64_t c = 0; c < b; ++c) {
                        m1[static_cast<size_t>(c)] += pred.at3(c, y, x) / static_cast<double>(npix);
                        m2[static_cast<size_t>(c)] += gt.at3(c, y, x) / static_cast<double>(npix);
                    }
            double e1 = 0.0, e2 = 0.0;
            std::vector<double> cov(static_cast<size_t>(b), 0.0);
            for (int64_t y = y0; y < y0 + block; ++y)
                for (int64_t x = x0; x < x0 + block; ++x) {
                    std::vector<double> z1(static_cast<size_t>(b)), z2(static_cast<size_t>(b));
                    for (int64_t c = 0; c < b; ++c) {
                        z1[static_cast<size_t>(c)] = pred.at3(c, y, x);
                        z2[static_cast<size_t>(c)] = gt.at3(c, y, x);
                        e1 += z1[static_cast<size_t>(c)] * z1[static_cast<size_t>(c)] /
                              static_cast<double>(npix);
                        e2 += z2[static_cast<size_t>(c)] * z2[static_cast<size_t>(c)] /
                              static_cast<double>(npix);
                    }
                    std::vector<double> prod = cd_mult_oracle(z1, cd_conj_oracle(z2));
                    for (int64_t c = 0; c < b; ++c)
                        cov[static_cast<size_t>(c)] += prod[static_cast<size_t>(c)] /
                                                       static_cast<double>(npix);
                }
            std::vector<double> mm = cd_mult_oracle(m1, cd_conj_oracle(m2));
            for (int64_t c = 0; c < b; ++c) cov[static_cast<size_t>(c)] -= mm[static_cast<size_t>(c)];
            double nm1 = 0.0, nm2 = 0.0, ncov = 0.0;
            for (int64_t c = 0; c < b; ++c) {
                nm1 += m1[static_cast<size_t>(c)] * m1[static_cast<size_t>(c)];
                nm2 += m2[static_cast<size_t>(c)] * m2[static_cast<size_t>(c)];
                ncov += cov[static_cast<size_t>(c)] * cov[static_cast<size_t>(c)];
            }
            double var1 = e1 - nm1, var2 = e2 - nm2;
            if (var1 <= 0.0 || var2 <= 0.0 || nm1 == 0.0 || nm2 == 0.0) continue;
            double q = std::sqrt(ncov) / (std::sqrt(var1) * std::sqrt(var2));
            q *= 2.0 * std::sqrt(var1) * std::sqrt(var2) / (var1 + var2);
            q *= 2.0 * std::sqrt(nm1) * std::sqrt(nm2) / (nm1 + nm2);
            total += q;
            kept += 1;
        }
    }
    return total / static_cast<double>(kept);
}

inline double uiqi_oracle(const Array& a, const Array& b) {
    double ma = 0.0, mb = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(b.size());
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    va /= static_cast<double>(a.size());
    vb /= static_cast<double>(a.size());
    cov /= static_cast<double>(a.size());
    double denom = (va + vb) * (ma * ma + mb * mb);
    if (denom == 0.0) return 0.0;
    return 4.0 * cov * ma * mb / denom;
}

inline double scc_oracle(const Array& pred, const Array& gt) {
    int64_t b = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    auto hp = [&](const Array& img, int64_t c, int64_t y, int64_t x) {
        auto at = [&](int64_t yy, int64_t xx) {
            if (yy < 0) yy = -yy - 1;
            if (yy >= h) yy = 2 * h - 1 - yy;
            if (xx < 0) xx = -xx - 1;
            if (xx >= w) xx = 2 * w - 1 - xx;
            return img.at3(c, yy, xx);
        };
        double s = 8.0 * at(y, x);
        for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dx = -1; dx <= 1; ++dx)
                if (dy != 0 || dx != 0) s -= at(y + dy, x + dx);
        return s;
    };
    double sum = 0.0;
    for (int64_t c = 0; c < b; ++c) {
        double mp = 0.0, mg = 0.0;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                mp += hp(pred, c, y, x);
                mg += hp(gt, c, y, x);
            }
        mp /= static_cast<double>(h * w);
        mg /= static_cast<double>(h * w);
        double num = 0.0, dp = 0.0, dg = 0.0;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double a = hp(pred, c, y, x) - mp;
                double g = hp(gt, c, y, x) - mg;
                num += a * g;
                dp += a * a;
                dg += g * g;
            }
        sum += num / std::sqrt(dp * dg);
    }
    return sum / static_cast<double>(b);
}

inline Array band_oracle(const Array& img, int64_t c) {
    Array out({img.dim(1), img.dim(2)});
    for (int64_t i = 0; i < out.size(); ++i) out[i] = img[c * out.size() + i];
    return out;
}

inline double d_lambda_oracle(const Array& fused, const Array& ms) {
    int64_t b = fused.dim(0);
    double acc = 0.0;
    int64_t cnt = 0;
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < b; ++j) {
            if (i == j) continue;
            acc += std::abs(uiqi_oracle(band_oracle(fused, i), band_oracle(fused, j)) -
                            uiqi_oracle(band_oracle(ms, i), band_oracle(ms, j)));
            cnt += 1;
        }
    return acc / static_cast<double>(cnt);
}

inline double d_s_oracle(const Array& fused, const Array& ms, const Array& pan,
                         const MtfProfile& profile, int ratio) {
    Array pan_low = mtf_downsample(pan, profile, ratio);
    int64_t b = fused.dim(0);
    double acc = 0.0;
    for (int64_t c = 0; c < b; ++c)
        acc += std::abs(uiqi_oracle(band_oracle(fused, c), band_oracle(pan, 0)) -
                        uiqi_oracle(band_oracle(ms, c), band_oracle(pan_low, 0)));
    return acc / static_cast<double>(b);
}

}  // namespace ssdiff::oracles
