#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

namespace ssdiff {

/// Dense row-major double array. Used both as the image carrier
/// (bands x height x width) and as autodiff storage. Buffers are 64-byte
/// aligned; the fixed alignment keeps Eigen's vectorized kernel dispatch
/// identical across allocations, so repeated evaluations are bit-for-bit
/// reproducible.
class Array {
public:
    Array() = default;
    explicit Array(std::vector<int64_t> shape);
    Array(std::vector<int64_t> shape, double fill);
    Array(std::vector<int64_t> shape, const std::vector<double>& values);

    static Array zeros_like(const Array& a) { return Array(a.shape_); }
    /// Allocation without the zero-fill pass, for outputs that are fully
    /// overwritten immediately.
    static Array uninit(std::vector<int64_t> shape);
    static Array uninit_like(const Array& a) { return uninit(a.shape_); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(buf_.n); }
    bool empty() const { return buf_.n == 0; }

    double* data() { return buf_.p; }
    const double* data() const { return buf_.p; }
    double& operator[](int64_t i) { return buf_.p[i]; }
    double operator[](int64_t i) const { return buf_.p[i]; }

    // (c,y,x) into a rank-3 array
    double& at3(int64_t c, int64_t y, int64_t x) {
        return buf_.p[(c * shape_[1] + y) * shape_[2] + x];
    }
    double at3(int64_t c, int64_t y, int64_t x) const {
        return buf_.p[(c * shape_[1] + y) * shape_[2] + x];
    }
    // (n,c,y,x) into a rank-4 array
    double& at4(int64_t n, int64_t c, int64_t y, int64_t x) {
        return buf_.p[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    double at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
        return buf_.p[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    /// Same data, new shape (size must match).
    Array reshaped(std::vector<int64_t> shape) const;

    void fill(double v);
    std::string shape_str() const;

private:
    struct Buffer {
        double* p = nullptr;
        size_t n = 0;
        Buffer() = default;
        Buffer(size_t count, bool zero);
        Buffer(const Buffer& o);
        Buffer(Buffer&& o) noexcept : p(o.p), n(o.n) {
            o.p = nullptr;
            o.n = 0;
        }
        Buffer& operator=(Buffer o) noexcept {
            std::swap(p, o.p);
            std::swap(n, o.n);
            return *this;
        }
        ~Buffer() { std::free(p); }
    };

    std::vector<int64_t> shape_;
    Buffer buf_;
};

bool same_shape(const Array& a, const Array& b);
/// Throws std::invalid_argument naming `what` on mismatch.
void check_same_shape(const Array& a, const Array& b, const char* what);

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array scaled(const Array& a, double s);
/// y += a * x
void axpy(Array& y, double a, const Array& x);

double min_value(const Array& a);
double max_value(const Array& a);
double mean_value(const Array& a);
double max_abs(const Array& a);
double max_abs_diff(const Array& a, const Array& b);
double dot(const Array& a, const Array& b);
double sum_value(const Array& a);
bool all_finite(const Array& a);

}  // namespace ssdiff
