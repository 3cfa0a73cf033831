#include "fundusqa/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace fundusqa {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

RasterImage load_png_file(const std::string& path, std::FILE* f) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "libpng init failed");
    }

    std::vector<png_bytep> row_ptrs;
    std::vector<uint8_t> raw;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "PNG decode error");
    }

    png_init_io(png, f);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (w == 0 || h == 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "zero-sized image");
    }

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // PNG stores big-endian samples
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    raw.resize(stride * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = raw.data() + y * stride;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RasterImage img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.data.resize(static_cast<std::size_t>(w) * h * 3);
    if (out_depth == 8) {
        for (std::size_t p = 0; p < img.pixel_count() * 3; ++p) {
            img.data[p] = static_cast<float>(raw[p]) / 255.0f;
        }
    } else if (out_depth == 16) {
        const auto* samples = reinterpret_cast<const uint16_t*>(raw.data());
        for (std::size_t p = 0; p < img.pixel_count() * 3; ++p) {
            img.data[p] = static_cast<float>(samples[p]) / 65535.0f;
        }
    } else {
        fail(path, "unsupported PNG bit depth");
    }
    return img;
}

int ppm_token(std::FILE* f) {
    // Next integer token, skipping whitespace and '#' comments.
    int c = std::fgetc(f);
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = std::fgetc(f);
        } else if (std::isspace(c)) {
            c = std::fgetc(f);
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) return -1;
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 28) return -1;
        c = std::fgetc(f);
    }
    return v;
}

RasterImage load_ppm_file(const std::string& path, std::FILE* f) {
    char magic[2];
    if (std::fread(magic, 1, 2, f) != 2 || magic[0] != 'P' || magic[1] != '6') {
        fail(path, "not a binary PPM");
    }
    const int w = ppm_token(f);
    const int h = ppm_token(f);
    const int maxval = ppm_token(f);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) fail(path, "bad PPM header");

    RasterImage img;
    img.width = w;
    img.height = h;
    img.data.resize(static_cast<std::size_t>(w) * h * 3);
    const std::size_t n = img.data.size();
    if (maxval < 256) {
        std::vector<uint8_t> raw(n);
        if (std::fread(raw.data(), 1, n, f) != n) fail(path, "truncated PPM data");
        for (std::size_t p = 0; p < n; ++p) {
            img.data[p] = static_cast<float>(raw[p]) / static_cast<float>(maxval);
        }
    } else {
        std::vector<uint8_t> raw(n * 2);
        if (std::fread(raw.data(), 1, n * 2, f) != n * 2) fail(path, "truncated PPM data");
        for (std::size_t p = 0; p < n; ++p) {
            const int v = (raw[p * 2] << 8) | raw[p * 2 + 1];  // big-endian
            img.data[p] = static_cast<float>(v) / static_cast<float>(maxval);
        }
    }
    return img;
}

}  // namespace

RasterImage load_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(path, "cannot open file");
    unsigned char magic[8] = {};
    const std::size_t got = std::fread(magic, 1, 8, f.get());
    std::rewind(f.get());
    if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) {
        return load_png_file(path, f.get());
    }
    if (got >= 2 && magic[0] == 'P' && magic[1] == '6') {
        return load_ppm_file(path, f.get());
    }
    fail(path, "unsupported image format (PNG or binary PPM expected)");
}

void save_png(const RasterImage& img, const std::string& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw std::invalid_argument("save_png: bit depth must be 8 or 16");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(path, "cannot open file for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG encode error");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.width, img.height, bit_depth, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t n = img.pixel_count() * 3;
    if (bit_depth == 8) {
        std::vector<uint8_t> raw(n);
        for (std::size_t p = 0; p < n; ++p) {
            const float v = img.data[p];
            raw[p] = static_cast<uint8_t>(std::lround(std::fmin(std::fmax(v, 0.0f), 1.0f) * 255.0f));
        }
        for (int y = 0; y < img.height; ++y) {
            png_write_row(png, raw.data() + static_cast<std::size_t>(y) * img.width * 3);
        }
    } else {
        png_set_swap(png);
        std::vector<uint16_t> raw(n);
        for (std::size_t p = 0; p < n; ++p) {
            const float v = img.data[p];
            raw[p] = static_cast<uint16_t>(std::lround(std::fmin(std::fmax(v, 0.0f), 1.0f) * 65535.0f));
        }
        for (int y = 0; y < img.height; ++y) {
            png_write_row(png, reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * img.width * 3));
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_mask_png(const std::vector<uint8_t>& plane, int width, int height,
                   const std::string& path) {
    if (plane.size() != static_cast<std::size_t>(width) * height) {
        throw std::invalid_argument("save_mask_png: plane shape mismatch");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(path, "cannot open file for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG encode error");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, 1, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_packing(png);  // accept one byte per pixel, pack to 1 bit

    std::vector<uint8_t> row(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            row[x] = plane[static_cast<std::size_t>(y) * width + x] ? 1 : 0;
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> load_mask_png(const std::string& path, int& width, int& height) {
    const RasterImage img = load_image(path);
    width = img.width;
    height = img.height;
    std::vector<uint8_t> plane(img.pixel_count());
    for (std::size_t p = 0; p < plane.size(); ++p) {
        const float mean = (img.data[p * 3] + img.data[p * 3 + 1] + img.data[p * 3 + 2]) / 3.0f;
        plane[p] = mean >= 0.5f ? 1 : 0;
    }
    return plane;
}

}  // namespace fundusqa
