#include "ssdiff/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace ssdiff {

void write_png_rgb(const std::string& path, const Array& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw std::invalid_argument("png: expects (3,H,W)");
    int64_t h = rgb.dim(1), w = rgb.dim(2);
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("png: cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("png: write failed for '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(3 * w));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(rgb[(c * h + y) * w + x], 0.0, 1.0);
                row[static_cast<size_t>(3 * x + c)] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Array rgb_preview(const Array& img) {
    if (img.rank() != 3) throw std::invalid_argument("rgb_preview: expects (B,H,W)");
    int64_t b = img.dim(0), h = img.dim(1), w = img.dim(2);
    int64_t tri[3];
    if (b >= 8) {
        tri[0] = 4, tri[1] = 2, tri[2] = 1;
    } else if (b >= 4) {
        tri[0] = 2, tri[1] = 1, tri[2] = 0;
    } else {
        tri[0] = tri[1] = tri[2] = 0;
    }
    Array out({3, h, w});
    for (int c = 0; c < 3; ++c)
        std::copy(img.data() + tri[c] * h * w, img.data() + (tri[c] + 1) * h * w,
                  out.data() + c * h * w);
    return out;
}

Array error_heatmap(const Array& pred, const Array& gt) {
    check_same_shape(pred, gt, "error_heatmap");
    int64_t b = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    Array err({h, w});
    for (int64_t p = 0; p < h * w; ++p) {
        double s = 0.0;
        for (int64_t c = 0; c < b; ++c) s += std::abs(pred[c * h * w + p] - gt[c * h * w + p]);
        err[p] = s / static_cast<double>(b);
    }
    double m = max_value(err);
    if (m <= 0.0) m = 1.0;
    Array out({3, h, w});
    for (int64_t p = 0; p < h * w; ++p) {
        double v = err[p] / m;  // black -> red -> yellow -> white ramp
        out[p] = std::min(1.0, 3.0 * v);
        out[h * w + p] = std::clamp(3.0 * v - 1.0, 0.0, 1.0);
        out[2 * h * w + p] = std::clamp(3.0 * v - 2.0, 0.0, 1.0);
    }
    return out;
}

}  // namespace ssdiff
