#include "ssdiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ssdiff/hdf5_io.hpp"

namespace ssdiff {

void SceneSample::validate() const {
    if (pan.rank() != 3 || pan.dim(0) != 1) throw std::invalid_argument("sample: pan must be (1,H,W)");
    int64_t h = pan.dim(1), w = pan.dim(2);
    if (h % 4 != 0 || w % 4 != 0)
        throw std::invalid_argument("sample: H and W must be divisible by 4");
    if (lms.rank() != 3 || lms.dim(1) != h || lms.dim(2) != w)
        throw std::invalid_argument("sample: lms must share the pan grid");
    if (ms.rank() != 3 || ms.dim(0) != lms.dim(0) || ms.dim(1) != h / 4 || ms.dim(2) != w / 4)
        throw std::invalid_argument("sample: ms must be the factor-4 grid");
    if (!gt.empty() && !same_shape(gt, lms))
        throw std::invalid_argument("sample: gt must share the lms shape");
}

MtfProfile MtfProfile::wv3() {
    return MtfProfile{{0.325, 0.345, 0.350, 0.340, 0.350, 0.350, 0.330, 0.315}, 0.15, 41};
}
MtfProfile MtfProfile::qb() { return MtfProfile{{0.34, 0.32, 0.30, 0.22}, 0.15, 41}; }
MtfProfile MtfProfile::gf2() { return MtfProfile{{0.16, 0.17, 0.18, 0.18}, 0.15, 41}; }
MtfProfile MtfProfile::generic(int bands, double gain, double pan) {
    return MtfProfile{std::vector<double>(static_cast<size_t>(bands), gain), pan, 41};
}
MtfProfile MtfProfile::uniform(int bands, double gain) {
    return MtfProfile{std::vector<double>(static_cast<size_t>(bands), gain), gain, 41};
}

Array gaussian_mtf_kernel(double nyquist_gain, int factor, int size) {
    if (!(nyquist_gain > 0.0 && nyquist_gain < 1.0))
        throw std::invalid_argument("mtf: Nyquist gain must be in (0,1)");
    if (size % 2 == 0) throw std::invalid_argument("mtf: kernel size must be odd");
    double pi = std::numbers::pi;
    double sigma = std::sqrt(-2.0 * std::log(nyquist_gain) / (pi * pi)) * factor;
    Array k({size});
    int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        double x = static_cast<double>(i - half);
        k[i] = std::exp(-0.5 * x * x / (sigma * sigma));
        sum += k[i];
    }
    for (int i = 0; i < size; ++i) k[i] /= sum;
    return k;
}

namespace {

enum class Pad { symmetric, circular };

int64_t pad_index(int64_t i, int64_t n, Pad mode) {
    if (mode == Pad::circular) {
        i %= n;
        return i < 0 ? i + n : i;
    }
    // symmetric: a b c | c b a
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// separable filtering of one (H,W) plane
void filter_plane(const double* src, int64_t h, int64_t w, const Array& kernel, double* dst,
                  std::vector<double>& tmp, Pad mode = Pad::symmetric) {
    int64_t ks = kernel.size();
    int64_t half = ks / 2;
    tmp.resize(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y) {  // rows
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int64_t k = 0; k < ks; ++k)
                s += kernel[k] * src[y * w + pad_index(x + k - half, w, mode)];
            tmp[static_cast<size_t>(y * w + x)] = s;
        }
    }
    for (int64_t y = 0; y < h; ++y) {  // columns
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int64_t k = 0; k < ks; ++k)
                s += kernel[k] * tmp[static_cast<size_t>(pad_index(y + k - half, h, mode) * w + x)];
            dst[y * w + x] = s;
        }
    }
}

// CDF 23-tap interpolation coefficients (gain 2, half-band)
Array interp23_kernel() {
    static const double base[12] = {0.5,
                                    0.305334091185,
                                    0.0,
                                    -0.072698593239,
                                    0.0,
                                    0.021809577942,
                                    0.0,
                                    -0.005192756653,
                                    0.0,
                                    0.000807762146,
                                    0.0,
                                    -0.000060081482};
    Array k({23});
    for (int i = 0; i < 12; ++i) {
        k[11 + i] = 2.0 * base[i];
        k[11 - i] = 2.0 * base[i];
    }
    return k;
}

// one dyadic zero-stuff + filter pass; `offset` is where input samples land.
// Circular padding keeps the stuffing parity intact at the borders.
Array dyadic_upsample(const Array& img, int64_t offset, const Array& kernel) {
    int64_t b = img.dim(0), h = img.dim(1), w = img.dim(2);
    Array out({b, 2 * h, 2 * w});
    std::vector<double> tmp;
    Array stuffed({2 * h, 2 * w});
    for (int64_t c = 0; c < b; ++c) {
        stuffed.fill(0.0);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                stuffed[(2 * y + offset) * 2 * w + 2 * x + offset] = img.at3(c, y, x);
        filter_plane(stuffed.data(), 2 * h, 2 * w, kernel, out.data() + c * 4 * h * w, tmp,
                     Pad::circular);
    }
    return out;
}

}  // namespace

Array mtf_downsample_gains(const Array& img, const std::vector<double>& gains, int factor,
                           int kernel_size) {
    if (img.rank() != 3) throw std::invalid_argument("mtf_downsample: expects (C,H,W)");
    int64_t b = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (static_cast<int64_t>(gains.size()) != b)
        throw std::invalid_argument("mtf_downsample: gain count does not match bands");
    if (h % factor != 0 || w % factor != 0)
        throw std::invalid_argument("mtf_downsample: dimensions not divisible by factor");
    Array filtered({h, w});
    Array out({b, h / factor, w / factor});
    std::vector<double> tmp;
    for (int64_t c = 0; c < b; ++c) {
        Array kernel = gaussian_mtf_kernel(gains[static_cast<size_t>(c)], factor, kernel_size);
        filter_plane(img.data() + c * h * w, h, w, kernel, filtered.data(), tmp);
        for (int64_t y = 0; y < h / factor; ++y)
            for (int64_t x = 0; x < w / factor; ++x)
                out.at3(c, y, x) = filtered[(y * factor) * w + x * factor];
    }
    return out;
}

Array mtf_downsample(const Array& img, const MtfProfile& profile, int factor) {
    if (img.rank() != 3) throw std::invalid_argument("mtf_downsample: expects (C,H,W)");
    std::vector<double> gains;
    if (img.dim(0) == 1)
        gains.push_back(profile.pan_gain);
    else if (img.dim(0) == static_cast<int64_t>(profile.nyquist_gains.size()))
        gains = profile.nyquist_gains;
    else
        throw std::invalid_argument("mtf_downsample: profile does not cover this band count");
    return mtf_downsample_gains(img, gains, factor, profile.kernel_size);
}

Array upsample_poly(const Array& img, int factor) {
    if (img.rank() != 3) throw std::invalid_argument("upsample_poly: expects (C,H,W)");
    if (factor != 2 && factor != 4)
        throw std::invalid_argument("upsample_poly: factor must be 2 or 4");
    Array kernel = interp23_kernel();
    Array out = dyadic_upsample(img, 1, kernel);
    if (factor == 4) out = dyadic_upsample(out, 0, kernel);
    return out;
}

SceneSample make_reduced(const Array& pan_full, const Array& ms_full, const MtfProfile& profile,
                         int factor) {
    if (pan_full.rank() != 3 || pan_full.dim(0) != 1)
        throw std::invalid_argument("make_reduced: pan_full must be (1,H,W)");
    if (ms_full.rank() != 3) throw std::invalid_argument("make_reduced: ms_full must be (B,H,W)");
    if (pan_full.dim(1) != factor * ms_full.dim(1) || pan_full.dim(2) != factor * ms_full.dim(2))
        throw std::invalid_argument("make_reduced: pan grid must be factor x the ms grid");
    SceneSample s;
    s.gt = ms_full;
    s.pan = mtf_downsample(pan_full, profile, factor);
    s.ms = mtf_downsample(ms_full, profile, factor);
    s.lms = upsample_poly(s.ms, factor);
    // interpolation ringing may overshoot the reflectance range slightly
    for (Array* plane : {&s.gt, &s.pan, &s.ms, &s.lms})
        for (int64_t i = 0; i < plane->size(); ++i)
            (*plane)[i] = std::clamp((*plane)[i], 0.0, 1.0);
    s.validate();
    return s;
}

Array gaussian_blur(const Array& plane, double sigma) {
    if (plane.rank() != 2) throw std::invalid_argument("gaussian_blur: expects (H,W)");
    int size = std::max(3, 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1);
    Array k({size});
    int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        double x = static_cast<double>(i - half);
        k[i] = std::exp(-0.5 * x * x / (sigma * sigma));
        sum += k[i];
    }
    for (int i = 0; i < size; ++i) k[i] /= sum;
    Array out({plane.dim(0), plane.dim(1)});
    std::vector<double> tmp;
    filter_plane(plane.data(), plane.dim(0), plane.dim(1), k, out.data(), tmp);
    return out;
}

SceneSample synth_scene(uint64_t seed, int bands, int size) {
    if (size % 4 != 0) throw std::invalid_argument("synth_scene: size must be divisible by 4");
    if (bands < 1) throw std::invalid_argument("synth_scene: bands must be >= 1");
    Rng rng(seed);
    int64_t hs = 4LL * size;  // pristine grid

    auto blob_field = [&](int count) {
        Array f({hs, hs});
        for (int k = 0; k < count; ++k) {
            double cy = rng.uniform() * static_cast<double>(hs);
            double cx = rng.uniform() * static_cast<double>(hs);
            double sy = (0.04 + 0.22 * rng.uniform()) * static_cast<double>(hs);
            double sx = (0.04 + 0.22 * rng.uniform()) * static_cast<double>(hs);
            double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.3 + 0.7 * rng.uniform());
            for (int64_t y = 0; y < hs; ++y) {
                double dy = (static_cast<double>(y) - cy) / sy;
                double ey = std::exp(-0.5 * dy * dy);
                if (ey < 1e-6) continue;
                for (int64_t x = 0; x < hs; ++x) {
                    double dx = (static_cast<double>(x) - cx) / sx;
                    double e = dx * dx;
                    if (e > 16.0) continue;
                    f[y * hs + x] += amp * ey * std::exp(-0.5 * e);
                }
            }
        }
        return f;
    };

    Array g1 = blob_field(18);
    Array g2 = blob_field(14);
    // step edges carved out of the second field
    Array edges({hs, hs});
    for (int64_t i = 0; i < edges.size(); ++i)
        edges[i] = 0.5 * (1.0 + std::tanh((g2[i] - 0.15) / 0.02));

    // fine texture for the PAN channel
    Array noise({hs, hs});
    for (int64_t i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
    Array texture = gaussian_blur(noise, 1.0);

    auto clip01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

    // band-correlated mixing of the structure fields
    Array pristine({bands, hs, hs});
    for (int b = 0; b < bands; ++b) {
        double base = 0.35 + 0.25 * rng.uniform();
        double c1 = 0.25 + 0.20 * rng.uniform();
        double c2 = 0.10 + 0.20 * rng.uniform();
        double c3 = 0.05 + 0.10 * (rng.uniform() - 0.5);
        for (int64_t i = 0; i < hs * hs; ++i)
            pristine[b * hs * hs + i] = clip01(base + c1 * g1[i] + c2 * (edges[i] - 0.5) + c3 * g2[i]);
    }

    Array pan0({1, hs, hs});
    std::vector<double> wsum(static_cast<size_t>(bands));
    double wtot = 0.0;
    for (int b = 0; b < bands; ++b) {
        wsum[static_cast<size_t>(b)] = 0.2 + rng.uniform();
        wtot += wsum[static_cast<size_t>(b)];
    }
    for (int64_t i = 0; i < hs * hs; ++i) {
        double s = 0.0;
        for (int b = 0; b < bands; ++b) s += wsum[static_cast<size_t>(b)] * pristine[b * hs * hs + i];
        pan0[i] = clip01(s / wtot + 0.06 * texture[i]);
    }

    Array ms0 = mtf_downsample(pristine, MtfProfile::generic(bands), 4);
    for (int64_t i = 0; i < ms0.size(); ++i) ms0[i] = clip01(ms0[i]);

    return make_reduced(pan0, ms0, MtfProfile::generic(bands), 4);
}

std::vector<SceneSample> load_dataset(const std::string& path, double default_max_value) {
    H5File f = H5File::open_readonly(path);
    for (const char* key : {"lms", "ms", "pan"})
        if (!f.exists(key))
            throw std::runtime_error("dataset '" + path + "': missing required key '" + key + "'");
    double max_value = f.has_attr("max_value") ? f.read_attr_double("max_value") : default_max_value;
    if (!(max_value > 0.0)) throw std::runtime_error("dataset: max_value must be positive");

    Array lms = f.read("lms");
    Array ms = f.read("ms");
    Array pan = f.read("pan");
    Array gt = f.exists("gt") ? f.read("gt") : Array();

    auto check4 = [&](const Array& a, const char* key) {
        if (a.rank() != 4)
            throw std::runtime_error("dataset key '" + std::string(key) + "': expects (N,C,H,W)");
    };
    check4(lms, "lms");
    check4(ms, "ms");
    check4(pan, "pan");
    int64_t n = lms.dim(0);
    if (ms.dim(0) != n || pan.dim(0) != n || (!gt.empty() && gt.dim(0) != n))
        throw std::runtime_error("dataset: sample counts disagree across keys");

    auto slice = [&](const Array& a, int64_t i) {
        Array out({a.dim(1), a.dim(2), a.dim(3)});
        int64_t sz = out.size();
        const double* src = a.data() + i * sz;
        for (int64_t j = 0; j < sz; ++j) out[j] = src[j] / max_value;
        return out;
    };

    std::vector<SceneSample> samples;
    samples.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        SceneSample s;
        s.lms = slice(lms, i);
        s.ms = slice(ms, i);
        s.pan = slice(pan, i);
        if (!gt.empty()) s.gt = slice(gt, i);
        try {
            s.validate();
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset sample " + std::to_string(i) + ": " + e.what());
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_dataset(const std::string& path, const std::vector<SceneSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("save_dataset: no samples");
    int64_t n = static_cast<int64_t>(samples.size());
    auto stack = [&](auto getter) {
        const Array& first = getter(samples[0]);
        Array out({n, first.dim(0), first.dim(1), first.dim(2)});
        for (int64_t i = 0; i < n; ++i) {
            const Array& a = getter(samples[static_cast<size_t>(i)]);
            check_same_shape(a, first, "save_dataset");
            std::copy(a.data(), a.data() + a.size(), out.data() + i * a.size());
        }
        return out;
    };
    H5File f = H5File::create(path);
    bool has_gt = !samples[0].gt.empty();
    if (has_gt) f.write("gt", stack([](const SceneSample& s) -> const Array& { return s.gt; }));
    f.write("lms", stack([](const SceneSample& s) -> const Array& { return s.lms; }));
    f.write("ms", stack([](const SceneSample& s) -> const Array& { return s.ms; }));
    f.write("pan", stack([](const SceneSample& s) -> const Array& { return s.pan; }));
    f.write_attr("max_value", 1.0);
}

}  // namespace ssdiff
