#pragma once

#include <string>
#include <vector>

#include "ssdiff/array.hpp"

namespace ssdiff {

/// Minimal RAII wrapper over the HDF5 C API. Datasets are written as
/// float64; reads convert whatever is stored (uint16, float32, ...) to
/// double. Intermediate groups in slash-separated names are created
/// automatically.
class H5File {
public:
    static H5File create(const std::string& path);
    static H5File open_readonly(const std::string& path);
    static H5File open_readwrite(const std::string& path);
    ~H5File();
    H5File(H5File&& other) noexcept;
    H5File& operator=(H5File&&) = delete;
    H5File(const H5File&) = delete;

    void write(const std::string& name, const Array& a);
    Array read(const std::string& name) const;
    bool exists(const std::string& name) const;

    void write_attr(const std::string& name, double v);
    void write_attr(const std::string& name, const std::string& v);
    double read_attr_double(const std::string& name) const;
    std::string read_attr_string(const std::string& name) const;
    bool has_attr(const std::string& name) const;

private:
    explicit H5File(int64_t h) : file_(h) {}
    int64_t file_ = -1;
};

}  // namespace ssdiff
