#include "ssdiff/hdf5_io.hpp"

#include <hdf5.h>

#include <stdexcept>

namespace ssdiff {

namespace {
void check(int64_t status, const std::string& what) {
    if (status < 0) throw std::runtime_error("hdf5: " + what + " failed");
}
}  // namespace

H5File H5File::create(const std::string& path) {
    hid_t f = H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT);
    check(f, "create " + path);
    return H5File(f);
}

H5File H5File::open_readonly(const std::string& path) {
    hid_t f = H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT);
    check(f, "open " + path);
    return H5File(f);
}

H5File H5File::open_readwrite(const std::string& path) {
    hid_t f = H5Fopen(path.c_str(), H5F_ACC_RDWR, H5P_DEFAULT);
    check(f, "open " + path);
    return H5File(f);
}

H5File::~H5File() {
    if (file_ >= 0) H5Fclose(static_cast<hid_t>(file_));
}

H5File::H5File(H5File&& other) noexcept : file_(other.file_) { other.file_ = -1; }

void H5File::write(const std::string& name, const Array& a) {
    std::vector<hsize_t> dims(a.shape().begin(), a.shape().end());
    if (dims.empty()) dims.push_back(1);
    hid_t space = H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr);
    check(space, "dataspace for " + name);
    hid_t lcpl = H5Pcreate(H5P_LINK_CREATE);
    H5Pset_create_intermediate_group(lcpl, 1);
    hid_t dset = H5Dcreate2(static_cast<hid_t>(file_), name.c_str(), H5T_IEEE_F64LE, space, lcpl,
                            H5P_DEFAULT, H5P_DEFAULT);
    check(dset, "create dataset " + name);
    check(H5Dwrite(dset, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, a.data()),
          "write " + name);
    H5Dclose(dset);
    H5Pclose(lcpl);
    H5Sclose(space);
}

Array H5File::read(const std::string& name) const {
    if (!exists(name)) throw std::runtime_error("hdf5: missing dataset '" + name + "'");
    hid_t dset = H5Dopen2(static_cast<hid_t>(file_), name.c_str(), H5P_DEFAULT);
    check(dset, "open dataset " + name);
    hid_t space = H5Dget_space(dset);
    int rank = H5Sget_simple_extent_ndims(space);
    std::vector<hsize_t> dims(static_cast<size_t>(rank));
    H5Sget_simple_extent_dims(space, dims.data(), nullptr);
    std::vector<int64_t> shape(dims.begin(), dims.end());
    Array out(shape);
    check(H5Dread(dset, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data()),
          "read " + name);
    H5Sclose(space);
    H5Dclose(dset);
    return out;
}

bool H5File::exists(const std::string& name) const {
    // walk intermediate groups so a missing parent reads as "absent"
    std::string partial;
    for (size_t i = 0; i < name.size(); ++i) {
        if (name[i] == '/') {
            if (!partial.empty() &&
                H5Lexists(static_cast<hid_t>(file_), partial.c_str(), H5P_DEFAULT) <= 0)
                return false;
        }
        partial.push_back(name[i]);
    }
    return H5Lexists(static_cast<hid_t>(file_), name.c_str(), H5P_DEFAULT) > 0;
}

void H5File::write_attr(const std::string& name, double v) {
    hid_t space = H5Screate(H5S_SCALAR);
    hid_t attr = H5Acreate2(static_cast<hid_t>(file_), name.c_str(), H5T_IEEE_F64LE, space,
                            H5P_DEFAULT, H5P_DEFAULT);
    check(attr, "create attr " + name);
    check(H5Awrite(attr, H5T_NATIVE_DOUBLE, &v), "write attr " + name);
    H5Aclose(attr);
    H5Sclose(space);
}

void H5File::write_attr(const std::string& name, const std::string& v) {
    hid_t type = H5Tcopy(H5T_C_S1);
    H5Tset_size(type, v.size() + 1);
    hid_t space = H5Screate(H5S_SCALAR);
    hid_t attr = H5Acreate2(static_cast<hid_t>(file_), name.c_str(), type, space, H5P_DEFAULT,
                            H5P_DEFAULT);
    check(attr, "create attr " + name);
    check(H5Awrite(attr, type, v.c_str()), "write attr " + name);
    H5Aclose(attr);
    H5Sclose(space);
    H5Tclose(type);
}

double H5File::read_attr_double(const std::string& name) const {
    hid_t attr = H5Aopen(static_cast<hid_t>(file_), name.c_str(), H5P_DEFAULT);
    check(attr, "open attr " + name);
    double v = 0.0;
    check(H5Aread(attr, H5T_NATIVE_DOUBLE, &v), "read attr " + name);
    H5Aclose(attr);
    return v;
}

std::string H5File::read_attr_string(const std::string& name) const {
    hid_t attr = H5Aopen(static_cast<hid_t>(file_), name.c_str(), H5P_DEFAULT);
    check(attr, "open attr " + name);
    hid_t type = H5Aget_type(attr);
    size_t len = H5Tget_size(type);
    std::string buf(len, '\0');
    hid_t mtype = H5Tcopy(H5T_C_S1);
    H5Tset_size(mtype, len);
    check(H5Aread(attr, mtype, buf.data()), "read attr " + name);
    buf.resize(buf.find_first_of('\0') == std::string::npos ? len : buf.find_first_of('\0'));
    H5Tclose(mtype);
    H5Tclose(type);
    H5Aclose(attr);
    return buf;
}

bool H5File::has_attr(const std::string& name) const {
    return H5Aexists(static_cast<hid_t>(file_), name.c_str()) > 0;
}

}  // namespace ssdiff
