#include "ssdiff/fmim.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <stdexcept>

namespace ssdiff {

namespace {
std::mutex g_fftw_mutex;  // FFTW plan creation is not thread-safe

struct FftBuffers {
    fftw_complex* in;
    fftw_complex* out;
    fftw_plan fwd;
    fftw_plan inv;
    int64_t h, w;

    FftBuffers(int64_t h_, int64_t w_) : h(h_), w(w_) {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        in = fftw_alloc_complex(static_cast<size_t>(h * w));
        out = fftw_alloc_complex(static_cast<size_t>(h * w));
        fwd = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in, out, FFTW_FORWARD,
                               FFTW_ESTIMATE);
        inv = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), out, in, FFTW_BACKWARD,
                               FFTW_ESTIMATE);
    }
    ~FftBuffers() {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
        fftw_free(in);
        fftw_free(out);
    }

    // one masked round trip on a single (h,w) map
    void filter(const double* src, const double* alpha, double* dst) {
        int64_t hw = h * w;
        for (int64_t i = 0; i < hw; ++i) {
            in[i][0] = src[i];
            in[i][1] = 0.0;
        }
        fftw_execute(fwd);
        for (int64_t i = 0; i < hw; ++i) {
            out[i][0] *= alpha[i];
            out[i][1] *= alpha[i];
        }
        fftw_execute(inv);
        double norm = 1.0 / static_cast<double>(hw);
        for (int64_t i = 0; i < hw; ++i) dst[i] = in[i][0] * norm;
    }
};
}  // namespace

FourierMask FourierMask::radial(int64_t h, int64_t w, double threshold_radius, double low_gain) {
    FourierMask m;
    m.threshold_radius = threshold_radius;
    m.low_gain = low_gain;
    m.alpha = Array({h, w});
    double ny = std::max<double>(static_cast<double>(h) / 2.0, 1.0);
    double nx = std::max<double>(static_cast<double>(w) / 2.0, 1.0);
    for (int64_t ky = 0; ky < h; ++ky) {
        double fy = ky <= h / 2 ? static_cast<double>(ky) : static_cast<double>(ky - h);
        for (int64_t kx = 0; kx < w; ++kx) {
            double fx = kx <= w / 2 ? static_cast<double>(kx) : static_cast<double>(kx - w);
            double r = std::sqrt((fy / ny) * (fy / ny) + (fx / nx) * (fx / nx));
            m.alpha[ky * w + kx] = r < threshold_radius ? low_gain : 1.0;
        }
    }
    return m;
}

Array high_pass(const Array& x_spa, const FourierMask& mask) {
    if (x_spa.rank() != 3 && x_spa.rank() != 4)
        throw std::invalid_argument("high_pass: expects (C,H,W) or (N,C,H,W)");
    int64_t h = x_spa.dim(x_spa.rank() - 2), w = x_spa.dim(x_spa.rank() - 1);
    if (mask.alpha.rank() != 2 || mask.alpha.dim(0) != h || mask.alpha.dim(1) != w)
        throw std::invalid_argument("high_pass: mask shape mismatch");
    int64_t maps = x_spa.size() / (h * w);
    Array out = Array::uninit_like(x_spa);
    FftBuffers fft(h, w);
    for (int64_t m = 0; m < maps; ++m)
        fft.filter(x_spa.data() + m * h * w, mask.alpha.data(), out.data() + m * h * w);
    return out;
}

Array scale_channels(const Array& x_spe, const ChannelScale& cfg, int level) {
    if (x_spe.rank() != 3 && x_spe.rank() != 4)
        throw std::invalid_argument("scale_channels: expects (C,H,W) or (N,C,H,W)");
    if (level < 0 || level >= static_cast<int>(cfg.scale_by_level.size()))
        throw std::invalid_argument("scale_channels: unknown level");
    int64_t c = x_spe.dim(x_spe.rank() - 3);
    if (c < 2) throw std::invalid_argument("scale_channels: needs at least 2 channels");
    int64_t n = x_spe.rank() == 4 ? x_spe.dim(0) : 1;
    int64_t hw = x_spe.dim(x_spe.rank() - 2) * x_spe.dim(x_spe.rank() - 1);
    double s = cfg.scale_by_level[static_cast<size_t>(level)];
    int64_t half = c / 2;
    Array out = x_spe;
    for (int64_t i = 0; i < n; ++i) {
        double* base = out.data() + i * c * hw;
        for (int64_t j = 0; j < half * hw; ++j) base[j] *= s;
    }
    return out;
}

Array fmim_transfer(const Array& x_spa, const Array& x_spe, const FourierMask& mask,
                    const ChannelScale& cfg, int level) {
    check_same_shape(x_spa, x_spe, "fmim_transfer");
    return add(scale_channels(x_spe, cfg, level), high_pass(x_spa, mask));
}

Tensor fourier_highpass(const Tensor& x, const FourierMask& mask) {
    Array alpha = mask.alpha;  // keep a copy alive for the backward pass
    Array y = high_pass(x.value(), mask);
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(y);
    if (grad_enabled() && x.requires_grad()) {
        n->requires_grad = true;
        n->parents.push_back(x.node());
        n->backprop = [alpha](TensorNode& node) {
            if (!node.parents[0]->requires_grad) return;
            FourierMask m;
            m.alpha = alpha;
            node.parents[0]->add_grad(high_pass(node.grad, m));
        };
    }
    return Tensor::from_node(std::move(n));
}

Tensor scale_channels_t(const Tensor& x, const ChannelScale& cfg, int level) {
    Array y = scale_channels(x.value(), cfg, level);
    double s = cfg.scale_by_level[static_cast<size_t>(level)];
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(y);
    if (grad_enabled() && x.requires_grad()) {
        n->requires_grad = true;
        n->parents.push_back(x.node());
        n->backprop = [s](TensorNode& node) {
            if (!node.parents[0]->requires_grad) return;
            const Array& g = node.grad;
            Array& gx = node.parents[0]->grad_buffer();
            int rk = g.rank();
            int64_t c = g.dim(rk - 3);
            int64_t nb = rk == 4 ? g.dim(0) : 1;
            int64_t hw = g.dim(rk - 2) * g.dim(rk - 1);
            int64_t half = c / 2;
            for (int64_t i = 0; i < nb; ++i) {
                const double* gs = g.data() + i * c * hw;
                double* gd = gx.data() + i * c * hw;
                for (int64_t j = 0; j < c * hw; ++j) gd[j] += (j < half * hw ? s : 1.0) * gs[j];
            }
        };
    }
    return Tensor::from_node(std::move(n));
}

}  // namespace ssdiff
