#pragma once

#include <string>

#include "plateinspect/image.hpp"

namespace plateinspect {

// 8-bit grayscale PNG. Color inputs are converted to luminance on read.
GrayImage read_png(const std::string& path);
void write_png(const GrayImage& img, const std::string& path);

// Binary PGM (P5), maxval 255.
GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);

// Dispatch on extension (.png / .pgm).
GrayImage read_image(const std::string& path);
void write_image(const GrayImage& img, const std::string& path);

}  // namespace plateinspect
