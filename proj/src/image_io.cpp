#include "plateinspect/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>

#include "plateinspect/common.hpp"

namespace plateinspect {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    return ext;
}

}  // namespace

GrayImage read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    const int color_type = png_get_color_type(png, info);
    if (color_type & PNG_COLOR_MASK_COLOR)
        png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1, -1);
    png_read_update_info(png, info);

    GrayImage img(static_cast<int>(png_get_image_width(png, info)),
                  static_cast<int>(png_get_image_height(png, info)));
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() + static_cast<size_t>(y) * img.width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const GrayImage& img, const std::string& path) {
    if (img.empty()) throw std::invalid_argument("write_png: empty image");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * img.width);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

GrayImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw IoError(path + ": not a P5 PGM");
    auto next_token = [&f, &path]() {
        // skip whitespace and '#' comment lines
        int c = f.peek();
        while (c == '#' || std::isspace(c)) {
            if (c == '#') f.ignore(4096, '\n');
            else f.get();
            c = f.peek();
        }
        long v = -1;
        f >> v;
        if (!f) throw IoError(path + ": malformed PGM header");
        return v;
    };
    const long w = next_token(), h = next_token(), maxval = next_token();
    if (w < 1 || h < 1 || maxval != 255) throw IoError(path + ": unsupported PGM geometry");
    f.get();  // single whitespace after maxval
    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.size()))
        throw IoError(path + ": truncated PGM payload");
    return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
    if (img.empty()) throw std::invalid_argument("write_pgm: empty image");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.size()));
    if (!f) throw IoError("failed writing " + path);
}

GrayImage read_image(const std::string& path) {
    const auto ext = lower_ext(path);
    if (ext == "png") return read_png(path);
    if (ext == "pgm") return read_pgm(path);
    throw IoError("unsupported image extension: " + path);
}

void write_image(const GrayImage& img, const std::string& path) {
    const auto ext = lower_ext(path);
    if (ext == "png") return write_png(img, path);
    if (ext == "pgm") return write_pgm(img, path);
    throw IoError("unsupported image extension: " + path);
}

}  // namespace plateinspect
