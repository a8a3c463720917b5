#include "ssdiff/tensor.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ssdiff {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

Tensor make_op(Array value, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backprop) {
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p.requires_grad();
        if (rg) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (const auto& p : parents) n->parents.push_back(p.node());
            n->backprop = std::move(backprop);
        }
    }
    return Tensor::from_node(std::move(n));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void TensorNode::add_grad(const Array& g) {
    if (grad.empty())
        grad = g;
    else
        axpy(grad, 1.0, g);
}

void TensorNode::add_grad_scaled(const Array& g, double s) {
    if (grad.empty()) grad = Array(value.shape());
    axpy(grad, s, g);
}

Array& TensorNode::grad_buffer() {
    if (grad.empty()) grad = Array(value.shape());
    return grad;
}

Tensor::Tensor(Array v, bool requires_grad) {
    n_ = std::make_shared<TensorNode>();
    n_->value = std::move(v);
    n_->requires_grad = requires_grad;
}

Tensor Tensor::from_node(NodePtr n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
}

void backward(const Tensor& root) {
    TensorNode* r = root.node().get();
    if (!r || !r->requires_grad)
        throw std::logic_error("backward: root does not require grad");
    if (r->value.size() != 1) throw std::logic_error("backward: root must be a scalar");

    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* n;
        size_t i;
    };
    std::vector<Frame> stack;
    stack.push_back({r, 0});
    visited.insert(r);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.i < f.n->parents.size()) {
            TensorNode* p = f.n->parents[f.i++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    r->grad = Array(r->value.shape(), 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

Tensor constant(Array v) { return Tensor(std::move(v), false); }

Tensor add(const Tensor& a, const Tensor& b) {
    return make_op(add(a.value(), b.value()), {a, b}, [](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->add_grad(n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return make_op(sub(a.value(), b.value()), {a, b}, [](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->add_grad_scaled(n.grad, -1.0);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return make_op(mul(a.value(), b.value()), {a, b}, [](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(mul(n.grad, n.parents[1]->value));
        if (n.parents[1]->requires_grad) n.parents[1]->add_grad(mul(n.grad, n.parents[0]->value));
    });
}

Tensor scale(const Tensor& a, double s) {
    return make_op(scaled(a.value(), s), {a}, [s](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad_scaled(n.grad, s);
    });
}

Tensor silu(const Tensor& a) {
    using CArrMap = Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, 1>>;
    using ArrMap = Eigen::Map<Eigen::Array<double, Eigen::Dynamic, 1>>;
    const Array& x = a.value();
    Array y = Array::uninit_like(x);
    {
        CArrMap xm(x.data(), x.size());
        ArrMap ym(y.data(), y.size());
        ym = xm / (1.0 + (-xm).exp());
    }
    return make_op(std::move(y), {a}, [](TensorNode& n) {
        if (!n.parents[0]->requires_grad) return;
        const Array& x = n.parents[0]->value;
        Array& gx = n.parents[0]->grad_buffer();
        CArrMap xm(x.data(), x.size());
        CArrMap gm(n.grad.data(), n.grad.size());
        ArrMap go(gx.data(), gx.size());
        auto s = 1.0 / (1.0 + (-xm).exp());
        go += gm * s * (1.0 + xm * (1.0 - s));
    });
}

Tensor detach(const Tensor& a) { return Tensor(a.value(), false); }

Tensor matmul_scaled(const Tensor& a, const Tensor& b, double alpha) {
    const Array& av = a.value();
    const Array& bv = b.value();
    int64_t nb, ar, k, bc;
    if (av.rank() == 2 && bv.rank() == 2) {
        nb = 1, ar = av.dim(0), k = av.dim(1), bc = bv.dim(1);
        if (bv.dim(0) != k) throw std::invalid_argument("matmul: inner dim mismatch");
    } else if (av.rank() == 3 && bv.rank() == 3) {
        nb = av.dim(0), ar = av.dim(1), k = av.dim(2), bc = bv.dim(2);
        if (bv.dim(0) != nb || bv.dim(1) != k)
            throw std::invalid_argument("matmul: batched shape mismatch");
    } else {
        throw std::invalid_argument("matmul: expects rank 2 or rank 3 pairs");
    }
    std::vector<int64_t> out_shape =
        av.rank() == 2 ? std::vector<int64_t>{ar, bc} : std::vector<int64_t>{nb, ar, bc};
    Array out = Array::uninit(out_shape);
    // split rows so a single large product still uses every thread
    int64_t chunks = std::max<int64_t>(1, omp_get_max_threads() / nb);
    int64_t rows_per = (ar + chunks - 1) / chunks;
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t i = 0; i < nb; ++i) {
        for (int64_t ch = 0; ch < chunks; ++ch) {
            int64_t r0 = ch * rows_per;
            if (r0 >= ar) continue;
            int64_t rn = std::min(rows_per, ar - r0);
            CMatMap ma(av.data() + i * ar * k + r0 * k, rn, k);
            CMatMap mb(bv.data() + i * k * bc, k, bc);
            MatMap mo(out.data() + i * ar * bc + r0 * bc, rn, bc);
            if (alpha == 1.0)
                mo.noalias() = ma * mb;
            else
                mo.noalias() = alpha * (ma * mb);
        }
    }
    return make_op(std::move(out), {a, b}, [nb, ar, k, bc, alpha](TensorNode& n) {
        const Array& av = n.parents[0]->value;
        const Array& bv = n.parents[1]->value;
        bool need_a = n.parents[0]->requires_grad;
        bool need_b = n.parents[1]->requires_grad;
        if (need_a) n.parents[0]->grad_buffer();
        if (need_b) n.parents[1]->grad_buffer();
        int64_t chunks = std::max<int64_t>(1, omp_get_max_threads() / nb);
        int64_t rows_per = (ar + chunks - 1) / chunks;
        int64_t kcols_per = (k + chunks - 1) / chunks;
#pragma omp parallel for schedule(static) collapse(2)
        for (int64_t i = 0; i < nb; ++i) {
            for (int64_t ch = 0; ch < chunks; ++ch) {
                CMatMap mg(n.grad.data() + i * ar * bc, ar, bc);
                if (need_a) {
                    int64_t r0 = ch * rows_per;
                    if (r0 < ar) {
                        int64_t rn = std::min(rows_per, ar - r0);
                        CMatMap mb(bv.data() + i * k * bc, k, bc);
                        MatMap ga(n.parents[0]->grad.data() + i * ar * k + r0 * k, rn, k);
                        ga.noalias() += alpha * (mg.middleRows(r0, rn) * mb.transpose());
                    }
                }
                if (need_b) {
                    // split dB by its rows (the contraction's k dimension)
                    int64_t k0 = ch * kcols_per;
                    if (k0 < k) {
                        int64_t kn = std::min(kcols_per, k - k0);
                        CMatMap ma(av.data() + i * ar * k, ar, k);
                        MatMap gb(n.parents[1]->grad.data() + i * k * bc + k0 * bc, kn, bc);
                        gb.noalias() += alpha * (ma.middleCols(k0, kn).transpose() * mg);
                    }
                }
            }
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_scaled(a, b, 1.0); }

Tensor softmax_rows(const Tensor& a) {
    const Array& x = a.value();
    if (x.rank() < 1) throw std::invalid_argument("softmax_rows: rank must be >= 1");
    int64_t cols = x.dim(x.rank() - 1);
    int64_t rows = x.size() / cols;
    Array y = Array::uninit_like(x);
    bool finite = true;
    using VecMap = Eigen::Map<Eigen::Array<double, Eigen::Dynamic, 1>>;
    using CVecMap = Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, 1>>;
#pragma omp parallel for schedule(static) reduction(&& : finite)
    for (int64_t r = 0; r < rows; ++r) {
        CVecMap xi(x.data() + r * cols, cols);
        VecMap yi(y.data() + r * cols, cols);
        double m = xi.maxCoeff();
        if (!std::isfinite(m)) {
            finite = false;
            m = 0.0;
        }
        yi = (xi - m).exp();
        yi /= yi.sum();
    }
    if (!finite) throw std::invalid_argument("softmax_rows: non-finite input");
    return make_op(std::move(y), {a}, [rows, cols](TensorNode& n) {
        if (!n.parents[0]->requires_grad) return;
        const Array& y = n.value;
        Array& gx = n.parents[0]->grad_buffer();
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r) {
            const double* yi = y.data() + r * cols;
            const double* gi = n.grad.data() + r * cols;
            double* go = gx.data() + r * cols;
            double s = 0.0;
            for (int64_t c = 0; c < cols; ++c) s += gi[c] * yi[c];
            for (int64_t c = 0; c < cols; ++c) go[c] += yi[c] * (gi[c] - s);
        }
    });
}

namespace {
Array transpose_last2_arr(const Array& x) {
    int rk = x.rank();
    int64_t a = x.dim(rk - 2), b = x.dim(rk - 1);
    int64_t nb = x.size() / (a * b);
    std::vector<int64_t> shape = x.shape();
    std::swap(shape[static_cast<size_t>(rk - 2)], shape[static_cast<size_t>(rk - 1)]);
    Array out = Array::uninit(shape);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < nb; ++i) {
        const double* src = x.data() + i * a * b;
        double* dst = out.data() + i * a * b;
        for (int64_t r = 0; r < a; ++r)
            for (int64_t c = 0; c < b; ++c) dst[c * a + r] = src[r * b + c];
    }
    return out;
}
}  // namespace

Tensor transpose_last2(const Tensor& a) {
    if (a.value().rank() < 2) throw std::invalid_argument("transpose_last2: rank must be >= 2");
    return make_op(transpose_last2_arr(a.value()), {a}, [](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(transpose_last2_arr(n.grad));
    });
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
    return make_op(a.value().reshaped(std::move(shape)), {a}, [](TensorNode& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->add_grad(n.grad.reshaped(n.parents[0]->value.shape()));
    });
}

Tensor chw_to_pixmat(const Tensor& a) {
    const Array& x = a.value();
    if (x.rank() != 4) throw std::invalid_argument("chw_to_pixmat: expects (N,C,H,W)");
    int64_t nb = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Array out = Array::uninit({nb, hw, c});
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < nb; ++n) {
        const double* src = x.data() + n * c * hw;
        double* dst = out.data() + n * c * hw;
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < hw; ++p) dst[p * c + ch] = src[ch * hw + p];
    }
    return make_op(std::move(out), {a}, [nb, c, hw](TensorNode& n) {
        if (!n.parents[0]->requires_grad) return;
        Array& gx = n.parents[0]->grad_buffer();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < nb; ++i) {
            const double* g = n.grad.data() + i * c * hw;
            double* go = gx.data() + i * c * hw;
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t p = 0; p < hw; ++p) go[ch * hw + p] += g[p * c + ch];
        }
    });
}

Tensor pixmat_to_chw(const Tensor& a, int64_t h, int64_t w) {
    const Array& x = a.value();
    if (x.rank() != 3 || x.dim(1) != h * w)
        throw std::invalid_argument("pixmat_to_chw: expects (N,HW,C)");
    int64_t nb = x.dim(0), c = x.dim(2), hw = h * w;
    Array out = Array::uninit({nb, c, h, w});
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < nb; ++n) {
        const double* src = x.data() + n * c * hw;
        double* dst = out.data() + n * c * hw;
        for (int64_t p = 0; p < hw; ++p)
            for (int64_t ch = 0; ch < c; ++ch) dst[ch * hw + p] = src[p * c + ch];
    }
    return make_op(std::move(out), {a}, [nb, c, hw](TensorNode& n) {
        if (!n.parents[0]->requires_grad) return;
        Array& gx = n.parents[0]->grad_buffer();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < nb; ++i) {
            const double* g = n.grad.data() + i * c * hw;
            double* go = gx.data() + i * c * hw;
            for (int64_t p = 0; p < hw; ++p)
                for (int64_t ch = 0; ch < c; ++ch) go[p * c + ch] += g[ch * hw + p];
        }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Array& xa = a.value();
    const Array& xb = b.value();
    if (xa.rank() != 4 || xb.rank() != 4 || xa.dim(0) != xb.dim(0) || xa.dim(2) != xb.dim(2) ||
        xa.dim(3) != xb.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes");
    int64_t nb = xa.dim(0), ca = xa.dim(1), cb = xb.dim(1), hw = xa.dim(2) * xa.dim(3);
    Array out = Array::uninit({nb, ca + cb, xa.dim(2), xa.dim(3)});
    for (int64_t n = 0; n < nb; ++n) {
        std::copy(xa.data() + n * ca * hw, xa.data() + (n + 1) * ca * hw,
                  out.data() + n * (ca + cb) * hw);
        std::copy(xb.data() + n * cb * hw, xb.data() + (n + 1) * cb * hw,
                  out.data() + (n * (ca + cb) + ca) * hw);
    }
    return make_op(std::move(out), {a, b}, [nb, ca, cb, hw](TensorNode& n) {
        for (int64_t i = 0; i < nb; ++i) {
            const double* g = n.grad.data() + i * (ca + cb) * hw;
            if (n.parents[0]->requires_grad) {
                Array& ga = n.parents[0]->grad_buffer();
                double* p = ga.data() + i * ca * hw;
                for (int64_t j = 0; j < ca * hw; ++j) p[j] += g[j];
            }
            if (n.parents[1]->requires_grad) {
                Array& gb = n.parents[1]->grad_buffer();
                double* p = gb.data() + i * cb * hw;
                for (int64_t j = 0; j < cb * hw; ++j) p[j] += g[j + ca * hw];
            }
        }
    });
}

namespace {

struct ConvDims {
    int64_t n, cin, h, w, cout, kh, kw, oh, ow;
    int stride, pad;
};

ConvDims conv_dims(const Array& x, const Array& w, int stride, int pad) {
    if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: rank mismatch");
    if (x.dim(1) != w.dim(1))
        throw std::invalid_argument("conv2d: input channels do not match weight");
    ConvDims d;
    d.n = x.dim(0), d.cin = x.dim(1), d.h = x.dim(2), d.w = x.dim(3);
    d.cout = w.dim(0), d.kh = w.dim(2), d.kw = w.dim(3);
    d.stride = stride, d.pad = pad;
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0) throw std::invalid_argument("conv2d: empty output");
    return d;
}

// col: (cin*kh*kw) x npix, covering output pixels [p0, p0+npix)
void im2col(const double* x, const ConvDims& d, int64_t p0, int64_t npix, double* col) {
    for (int64_t c = 0; c < d.cin; ++c) {
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj) {
                double* row = col + ((c * d.kh + ki) * d.kw + kj) * npix;
                for (int64_t p = 0; p < npix; ++p) {
                    int64_t oy = (p0 + p) / d.ow, ox = (p0 + p) % d.ow;
                    int64_t iy = oy * d.stride - d.pad + ki;
                    int64_t ix = ox * d.stride - d.pad + kj;
                    row[p] = (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                 ? x[(c * d.h + iy) * d.w + ix]
                                 : 0.0;
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvDims& d, double* x) {
    int64_t opix = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin; ++c) {
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj) {
                const double* row = col + ((c * d.kh + ki) * d.kw + kj) * opix;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    int64_t iy = oy * d.stride - d.pad + ki;
                    if (iy < 0 || iy >= d.h) continue;
                    double* dst = x + (c * d.h + iy) * d.w;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        int64_t ix = ox * d.stride - d.pad + kj;
                        if (ix >= 0 && ix < d.w) dst[ix] += row[oy * d.ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    ConvDims d = conv_dims(x.value(), w.value(), stride, pad);
    if (b.value().rank() != 1 || b.value().dim(0) != d.cout)
        throw std::invalid_argument("conv2d: bias shape mismatch");
    int64_t ck = d.cin * d.kh * d.kw;
    int64_t opix = d.oh * d.ow;
    Array out = Array::uninit({d.n, d.cout, d.oh, d.ow});
    const Array& xv = x.value();
    const Array& wv = w.value();
    const Array& bv = b.value();
    // tile output pixels so small batches still use every thread
    int64_t tiles = std::max<int64_t>(1, omp_get_max_threads() / d.n);
    int64_t tile_pix = (opix + tiles - 1) / tiles;
#pragma omp parallel
    {
        Array col = Array::uninit({ck, std::min(tile_pix, opix)});
        Array tile_out = Array::uninit({d.cout, std::min(tile_pix, opix)});
#pragma omp for schedule(static) collapse(2)
        for (int64_t i = 0; i < d.n; ++i) {
            for (int64_t tl = 0; tl < tiles; ++tl) {
                int64_t p0 = tl * tile_pix;
                if (p0 >= opix) continue;
                int64_t npix = std::min(tile_pix, opix - p0);
                im2col(xv.data() + i * d.cin * d.h * d.w, d, p0, npix, col.data());
                CMatMap mw(wv.data(), d.cout, ck);
                CMatMap mc(col.data(), ck, npix);
                MatMap mt(tile_out.data(), d.cout, npix);
                mt.noalias() = mw * mc;
                for (int64_t c = 0; c < d.cout; ++c) {
                    double* row = out.data() + (i * d.cout + c) * opix + p0;
                    const double* src = tile_out.data() + c * npix;
                    for (int64_t p = 0; p < npix; ++p) row[p] = src[p] + bv[c];
                }
            }
        }
    }
    return make_op(std::move(out), {x, w, b}, [d, ck, opix](TensorNode& n) {
        const Array& xv = n.parents[0]->value;
        const Array& wv = n.parents[1]->value;
        bool need_x = n.parents[0]->requires_grad;
        bool need_w = n.parents[1]->requires_grad;
        bool need_b = n.parents[2]->requires_grad;
        if (need_x) n.parents[0]->grad_buffer();
        if (need_w) n.parents[1]->grad_buffer();
        if (need_b) n.parents[2]->grad_buffer();
#pragma omp parallel
        {
            Array col = Array::uninit({ck, opix});
            Array dw_local = need_w ? Array({d.cout, ck}) : Array();
            Array db_local = need_b ? Array({d.cout}) : Array();
#pragma omp for schedule(static)
            for (int64_t i = 0; i < d.n; ++i) {
                const double* gy = n.grad.data() + i * d.cout * opix;
                CMatMap mg(gy, d.cout, opix);
                if (need_w) {
                    im2col(xv.data() + i * d.cin * d.h * d.w, d, 0, opix, col.data());
                    MatMap mdw(dw_local.data(), d.cout, ck);
                    CMatMap mc(col.data(), ck, opix);
                    mdw.noalias() += mg * mc.transpose();
                }
                if (need_b) {
                    for (int64_t c = 0; c < d.cout; ++c) {
                        double s = 0.0;
                        for (int64_t p = 0; p < opix; ++p) s += gy[c * opix + p];
                        db_local[c] += s;
                    }
                }
                if (need_x) {
                    CMatMap mw(wv.data(), d.cout, ck);
                    MatMap mc(col.data(), ck, opix);
                    mc.noalias() = mw.transpose() * mg;
                    col2im_add(col.data(), d, n.parents[0]->grad.data() + i * d.cin * d.h * d.w);
                }
            }
#pragma omp critical
            {
                if (need_w) axpy(n.parents[1]->grad, 1.0, dw_local.reshaped(wv.shape()));
                if (need_b) axpy(n.parents[2]->grad, 1.0, db_local);
            }
        }
    });
}

Tensor upsample_nearest2(const Tensor& x) {
    const Array& xv = x.value();
    if (xv.rank() != 4) throw std::invalid_argument("upsample_nearest2: expects (N,C,H,W)");
    int64_t nb = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Array out = Array::uninit({nb, c, 2 * h, 2 * w});
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < nb * c; ++i) {
        const double* src = xv.data() + i * h * w;
        double* dst = out.data() + i * 4 * h * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                double v = src[y * w + xx];
                dst[(2 * y) * 2 * w + 2 * xx] = v;
                dst[(2 * y) * 2 * w + 2 * xx + 1] = v;
                dst[(2 * y + 1) * 2 * w + 2 * xx] = v;
                dst[(2 * y + 1) * 2 * w + 2 * xx + 1] = v;
            }
    }
    return make_op(std::move(out), {x}, [nb, c, h, w](TensorNode& n) {
        if (!n.parents[0]->requires_grad) return;
        Array& gx = n.parents[0]->grad_buffer();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < nb * c; ++i) {
            const double* g = n.grad.data() + i * 4 * h * w;
            double* go = gx.data() + i * h * w;
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xx = 0; xx < w; ++xx)
                    go[y * w + xx] += g[(2 * y) * 2 * w + 2 * xx] +
                                      g[(2 * y) * 2 * w + 2 * xx + 1] +
                                      g[(2 * y + 1) * 2 * w + 2 * xx] +
                                      g[(2 * y + 1) * 2 * w + 2 * xx + 1];
        }
    });
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  double eps) {
    const Array& xv = x.value();
    if (xv.rank() != 4) throw std::invalid_argument("group_norm: expects (N,C,H,W)");
    int64_t nb = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    if (c % groups != 0) throw std::invalid_argument("group_norm: channels not divisible");
    int64_t gc = c / groups;  // channels per group
    int64_t gs = gc * hw;     // elements per group
    auto mu = std::make_shared<Array>(Array({nb, static_cast<int64_t>(groups)}));
    auto istd = std::make_shared<Array>(Array({nb, static_cast<int64_t>(groups)}));
    Array out = Array::uninit_like(xv);
    const Array& gv = gamma.value();
    const Array& bv = beta.value();
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t i = 0; i < nb; ++i) {
        for (int64_t g = 0; g < groups; ++g) {
            const double* src = xv.data() + (i * c + g * gc) * hw;
            double m = 0.0;
            for (int64_t j = 0; j < gs; ++j) m += src[j];
            m /= static_cast<double>(gs);
            double v = 0.0;
            for (int64_t j = 0; j < gs; ++j) {
                double dd = src[j] - m;
                v += dd * dd;
            }
            v /= static_cast<double>(gs);
            double is = 1.0 / std::sqrt(v + eps);
            (*mu)[i * groups + g] = m;
            (*istd)[i * groups + g] = is;
            double* dst = out.data() + (i * c + g * gc) * hw;
            for (int64_t ch = 0; ch < gc; ++ch) {
                double ga = gv[g * gc + ch], be = bv[g * gc + ch];
                for (int64_t j = 0; j < hw; ++j)
                    dst[ch * hw + j] = ga * (src[ch * hw + j] - m) * is + be;
            }
        }
    }
    int64_t groups64 = groups;
    return make_op(std::move(out), {x, gamma, beta}, [=](TensorNode& n) {
        const Array& xv = n.parents[0]->value;
        const Array& gv = n.parents[1]->value;
        bool need_x = n.parents[0]->requires_grad;
        bool need_g = n.parents[1]->requires_grad;
        bool need_b = n.parents[2]->requires_grad;
        if (need_x) n.parents[0]->grad_buffer();
        if (need_g) n.parents[1]->grad_buffer();
        if (need_b) n.parents[2]->grad_buffer();
        Array dgamma({c});
        Array dbeta({c});
#pragma omp parallel for schedule(static) collapse(2)
        for (int64_t i = 0; i < nb; ++i) {
            for (int64_t g = 0; g < groups64; ++g) {
                const double* src = xv.data() + (i * c + g * gc) * hw;
                const double* gy = n.grad.data() + (i * c + g * gc) * hw;
                double m = (*mu)[i * groups64 + g];
                double is = (*istd)[i * groups64 + g];
                double s1 = 0.0, s2 = 0.0;
                for (int64_t ch = 0; ch < gc; ++ch) {
                    double ga = gv[g * gc + ch];
                    for (int64_t j = 0; j < hw; ++j) {
                        double xh = (src[ch * hw + j] - m) * is;
                        double dxh = gy[ch * hw + j] * ga;
                        s1 += dxh;
                        s2 += dxh * xh;
                    }
                }
                s1 /= static_cast<double>(gs);
                s2 /= static_cast<double>(gs);
                if (need_x) {
                    double* gx = n.parents[0]->grad.data() + (i * c + g * gc) * hw;
                    for (int64_t ch = 0; ch < gc; ++ch) {
                        double ga = gv[g * gc + ch];
                        for (int64_t j = 0; j < hw; ++j) {
                            double xh = (src[ch * hw + j] - m) * is;
                            double dxh = gy[ch * hw + j] * ga;
                            gx[ch * hw + j] += is * (dxh - s1 - xh * s2);
                        }
                    }
                }
            }
        }
        if (need_g || need_b) {
            for (int64_t i = 0; i < nb; ++i) {
                for (int64_t g = 0; g < groups64; ++g) {
                    const double* src = xv.data() + (i * c + g * gc) * hw;
                    const double* gy = n.grad.data() + (i * c + g * gc) * hw;
                    double m = (*mu)[i * groups64 + g];
                    double is = (*istd)[i * groups64 + g];
                    for (int64_t ch = 0; ch < gc; ++ch) {
                        double sg = 0.0, sb = 0.0;
                        for (int64_t j = 0; j < hw; ++j) {
                            sg += gy[ch * hw + j] * (src[ch * hw + j] - m) * is;
                            sb += gy[ch * hw + j];
                        }
                        dgamma[g * gc + ch] += sg;
                        dbeta[g * gc + ch] += sb;
                    }
                }
            }
            if (need_g) axpy(n.parents[1]->grad, 1.0, dgamma);
            if (need_b) axpy(n.parents[2]->grad, 1.0, dbeta);
        }
    });
}

Tensor add_channel_vec(const Tensor& x, const Tensor& v) {
    const Array& xv = x.value();
    const Array& vv = v.value();
    if (xv.rank() != 4 || vv.rank() != 2 || xv.dim(0) != vv.dim(0) || xv.dim(1) != vv.dim(1))
        throw std::invalid_argument("add_channel_vec: shape mismatch");
    int64_t nb = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Array out = Array::uninit_like(xv);
    for (int64_t i = 0; i < nb * c; ++i) {
        const double* src = xv.data() + i * hw;
        double* dst = out.data() + i * hw;
        double b = vv[i];
        for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] + b;
    }
    return make_op(std::move(out), {x, v}, [nb, c, hw](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(n.grad);
        if (n.parents[1]->requires_grad) {
            Array& gv = n.parents[1]->grad_buffer();
            for (int64_t i = 0; i < nb * c; ++i) {
                const double* g = n.grad.data() + i * hw;
                double s = 0.0;
                for (int64_t j = 0; j < hw; ++j) s += g[j];
                gv[i] += s;
            }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const Array& xv = x.value();
    const Array& wv = w.value();
    const Array& bv = b.value();
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
        throw std::invalid_argument("linear: shape mismatch");
    int64_t nb = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
    if (bv.rank() != 1 || bv.dim(0) != out_dim) throw std::invalid_argument("linear: bias mismatch");
    Array out = Array::uninit({nb, out_dim});
    {
        CMatMap mx(xv.data(), nb, in);
        CMatMap mw(wv.data(), out_dim, in);
        MatMap mo(out.data(), nb, out_dim);
        mo.noalias() = mx * mw.transpose();
        for (int64_t i = 0; i < nb; ++i)
            for (int64_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += bv[j];
    }
    return make_op(std::move(out), {x, w, b}, [nb, in, out_dim](TensorNode& n) {
        CMatMap mg(n.grad.data(), nb, out_dim);
        if (n.parents[0]->requires_grad) {
            CMatMap mw(n.parents[1]->value.data(), out_dim, in);
            MatMap gx(n.parents[0]->grad_buffer().data(), nb, in);
            gx.noalias() += mg * mw;
        }
        if (n.parents[1]->requires_grad) {
            CMatMap mx(n.parents[0]->value.data(), nb, in);
            MatMap gw(n.parents[1]->grad_buffer().data(), out_dim, in);
            gw.noalias() += mg.transpose() * mx;
        }
        if (n.parents[2]->requires_grad) {
            Array& gb = n.parents[2]->grad_buffer();
            for (int64_t i = 0; i < nb; ++i)
                for (int64_t j = 0; j < out_dim; ++j) gb[j] += n.grad[i * out_dim + j];
        }
    });
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a.value(), b.value(), "l1_loss");
    const Array& av = a.value();
    const Array& bv = b.value();
    double s = 0.0;
    for (int64_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
    double inv = 1.0 / static_cast<double>(av.size());
    Array out({1});
    out[0] = s * inv;
    return make_op(std::move(out), {a, b}, [inv](TensorNode& n) {
        const Array& av = n.parents[0]->value;
        const Array& bv = n.parents[1]->value;
        double g = n.grad[0] * inv;
        bool need_a = n.parents[0]->requires_grad;
        bool need_b = n.parents[1]->requires_grad;
        if (need_a) n.parents[0]->grad_buffer();
        if (need_b) n.parents[1]->grad_buffer();
        for (int64_t i = 0; i < av.size(); ++i) {
            double sg = av[i] > bv[i] ? g : (av[i] < bv[i] ? -g : 0.0);
            if (need_a) n.parents[0]->grad[i] += sg;
            if (need_b) n.parents[1]->grad[i] -= sg;
        }
    });
}

}  // namespace ssdiff
