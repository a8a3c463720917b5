#include "ssdiff/array.hpp"

#include <malloc.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ssdiff {

namespace {

// Large tensor buffers churn every operation; keep them in the main arena
// instead of mmap/munmap round trips (page-fault storms on first touch).
const bool g_malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
}();

int64_t shape_size(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("negative array dimension");
        n *= d;
    }
    return n;
}

}  // namespace

Array::Buffer::Buffer(size_t count, bool zero) : n(count) {
    if (count == 0) return;
    size_t bytes = ((count * sizeof(double) + 63) / 64) * 64;
    p = static_cast<double*>(std::aligned_alloc(64, bytes));
    if (!p) throw std::bad_alloc();
    if (zero) std::memset(p, 0, count * sizeof(double));
}

Array::Buffer::Buffer(const Buffer& o) : Buffer(o.n, false) {
    if (o.n) std::memcpy(p, o.p, o.n * sizeof(double));
}

Array::Array(std::vector<int64_t> shape)
    : shape_(std::move(shape)), buf_(static_cast<size_t>(shape_size(shape_)), true) {}

Array::Array(std::vector<int64_t> shape, double fill)
    : shape_(std::move(shape)), buf_(static_cast<size_t>(shape_size(shape_)), false) {
    this->fill(fill);
}

Array::Array(std::vector<int64_t> shape, const std::vector<double>& values)
    : shape_(std::move(shape)), buf_(values.size(), false) {
    if (static_cast<int64_t>(values.size()) != shape_size(shape_))
        throw std::invalid_argument("value count does not match shape");
    if (!values.empty()) std::memcpy(buf_.p, values.data(), values.size() * sizeof(double));
}

Array Array::uninit(std::vector<int64_t> shape) {
    Array a;
    a.shape_ = std::move(shape);
    a.buf_ = Buffer(static_cast<size_t>(shape_size(a.shape_)), false);
    return a;
}

Array Array::reshaped(std::vector<int64_t> shape) const {
    if (shape_size(shape) != size())
        throw std::invalid_argument("reshape size mismatch");
    Array out = *this;
    out.shape_ = std::move(shape);
    return out;
}

void Array::fill(double v) {
    for (size_t i = 0; i < buf_.n; ++i) buf_.p[i] = v;
}

std::string Array::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
}

bool same_shape(const Array& a, const Array& b) { return a.shape() == b.shape(); }

void check_same_shape(const Array& a, const Array& b, const char* what) {
    if (!same_shape(a, b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

Array add(const Array& a, const Array& b) {
    check_same_shape(a, b, "add");
    Array out = Array::uninit_like(a);
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Array sub(const Array& a, const Array& b) {
    check_same_shape(a, b, "sub");
    Array out = Array::uninit_like(a);
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Array mul(const Array& a, const Array& b) {
    check_same_shape(a, b, "mul");
    Array out = Array::uninit_like(a);
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Array scaled(const Array& a, double s) {
    Array out = Array::uninit_like(a);
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

void axpy(Array& y, double a, const Array& x) {
    check_same_shape(y, x, "axpy");
    for (int64_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double min_value(const Array& a) {
    double m = a[0];
    for (int64_t i = 1; i < a.size(); ++i) m = std::min(m, a[i]);
    return m;
}

double max_value(const Array& a) {
    double m = a[0];
    for (int64_t i = 1; i < a.size(); ++i) m = std::max(m, a[i]);
    return m;
}

double mean_value(const Array& a) {
    if (a.size() == 0) return 0.0;
    return sum_value(a) / static_cast<double>(a.size());
}

double max_abs(const Array& a) {
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

double max_abs_diff(const Array& a, const Array& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double dot(const Array& a, const Array& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sum_value(const Array& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

bool all_finite(const Array& a) {
    for (int64_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

}  // namespace ssdiff
