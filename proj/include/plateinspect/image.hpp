#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace plateinspect {

// 8-bit grayscale raster, row-major, (0,0) top-left.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    GrayImage() = default;
    GrayImage(int w, int h, uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_size(const GrayImage& o) const { return width == o.width && height == o.height; }
};

// Boolean raster stored as 0/1 bytes (vector<bool> is too slow to scan).
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    BinaryImage() = default;
    BinaryImage(int w, int h, bool fill = false)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

    uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    size_t count_true() const {
        size_t n = 0;
        for (uint8_t v : data) n += v != 0;
        return n;
    }
};

struct ComponentStats {
    int label = 0;        // 1..K, 0 is background
    long area = 0;        // pixel count
    int x = 0, y = 0;     // bbox top-left
    int w = 0, h = 0;     // bbox size
    double cx = 0.0;      // centroid
    double cy = 0.0;
};

enum class MorphOp { Erode, Dilate, Open, Close };
enum class ResizeMode { Nearest, Bilinear };

// Separable Gaussian blur with symmetric-reflect borders. The kernel is
// clipped to the largest odd size that fits the image, so the OCR path can
// request the nominal 149 on small crops. Kernel weights are normalized to
// sum 1; accumulation in double, output rounded half-away-from-zero.
GrayImage gaussian_blur(const GrayImage& img, int kernel, double sigma);

// Pixel true iff intensity > t (strict).
BinaryImage threshold_binary(const GrayImage& img, int t);

// Binary morphology with a square structuring element; pixels outside the
// image are background. Open = erode then dilate; close = dilate then erode.
BinaryImage morphology(const BinaryImage& img, MorphOp op, int structel);

// Scan-order connected component labeling. Labels are 1..K in first-
// encountered order; label_map (if non-null) receives one label per pixel.
std::vector<ComponentStats> connected_components(const BinaryImage& img, int connectivity,
                                                 std::vector<int>* label_map = nullptr);

GrayImage abs_diff(const GrayImage& a, const GrayImage& b);

// Nearest uses floor source sampling; bilinear is edge-clamped and exact
// at identity size.
GrayImage resize(const GrayImage& img, int w, int h, ResizeMode mode);

GrayImage invert(const GrayImage& img);

// Otsu's threshold over the intensity histogram (max between-class variance,
// lowest t on ties). Used by the OCR and region-profile binarization steps.
int otsu_threshold(const GrayImage& img);

}  // namespace plateinspect
