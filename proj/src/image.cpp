#include "plateinspect/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plateinspect {

namespace {

// Symmetric reflection: ...cba|abc...|cba (edge pixel duplicated).
inline int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

inline uint8_t round_to_u8(double v) {
    double r = std::round(v);  // half away from zero
    return static_cast<uint8_t>(std::clamp(r, 0.0, 255.0));
}

std::vector<double> gaussian_kernel(int k, double sigma) {
    std::vector<double> w(k);
    const int r = k / 2;
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const double d = i - r;
        w[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

}  // namespace

GrayImage gaussian_blur(const GrayImage& img, int kernel, double sigma) {
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("gaussian_blur: kernel must be odd and >= 1");
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");

    const int maxk = 2 * std::min(img.width, img.height) - 1;
    const int k = std::min(kernel, maxk % 2 == 1 ? maxk : maxk - 1);
    if (k <= 1) return img;

    const auto w = gaussian_kernel(k, sigma);
    const int r = k / 2;

    // horizontal pass into doubles, vertical pass back to u8
    std::vector<double> tmp(img.size());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += w[i + r] * img.at(reflect(x + i, img.width), y);
            tmp[static_cast<size_t>(y) * img.width + x] = acc;
        }
    }
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += w[i + r] * tmp[static_cast<size_t>(reflect(y + i, img.height)) * img.width + x];
            out.at(x, y) = round_to_u8(acc);
        }
    }
    return out;
}

BinaryImage threshold_binary(const GrayImage& img, int t) {
    if (t < 0 || t > 255) throw std::invalid_argument("threshold_binary: t must be in [0,255]");
    BinaryImage out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i) out.data[i] = img.data[i] > t ? 1 : 0;
    return out;
}

namespace {

BinaryImage erode_or_dilate(const BinaryImage& img, bool erode, int r) {
    // Separable min/max filter over a square window; outside = background.
    // For erode, out-of-bounds counts as false so edges erode away.
    const int W = img.width, H = img.height;
    BinaryImage tmp(W, H), out(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            uint8_t v = erode ? 1 : 0;
            for (int i = -r; i <= r; ++i) {
                const int xx = x + i;
                const uint8_t p = (xx < 0 || xx >= W) ? 0 : img.at(xx, y);
                if (erode) v = static_cast<uint8_t>(v & p);
                else v = static_cast<uint8_t>(v | p);
            }
            tmp.at(x, y) = v;
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            uint8_t v = erode ? 1 : 0;
            for (int i = -r; i <= r; ++i) {
                const int yy = y + i;
                const uint8_t p = (yy < 0 || yy >= H) ? 0 : tmp.at(x, yy);
                if (erode) v = static_cast<uint8_t>(v & p);
                else v = static_cast<uint8_t>(v | p);
            }
            out.at(x, y) = v;
        }
    }
    return out;
}

}  // namespace

BinaryImage morphology(const BinaryImage& img, MorphOp op, int structel) {
    if (structel < 1 || structel % 2 == 0)
        throw std::invalid_argument("morphology: structel must be odd and >= 1");
    if (structel == 1) return img;
    const int r = structel / 2;
    switch (op) {
        case MorphOp::Erode: return erode_or_dilate(img, true, r);
        case MorphOp::Dilate: return erode_or_dilate(img, false, r);
        case MorphOp::Open: return erode_or_dilate(erode_or_dilate(img, true, r), false, r);
        case MorphOp::Close: return erode_or_dilate(erode_or_dilate(img, false, r), true, r);
    }
    throw std::invalid_argument("morphology: bad op");
}

std::vector<ComponentStats> connected_components(const BinaryImage& img, int connectivity,
                                                 std::vector<int>* label_map) {
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
    const int W = img.width, H = img.height;
    std::vector<int> labels(img.size(), 0);
    std::vector<ComponentStats> stats;
    std::vector<int> stack;

    static const int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static const int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static const int dx4[] = {0, -1, 1, 0};
    static const int dy4[] = {-1, 0, 0, 1};
    const int* dx = connectivity == 8 ? dx8 : dx4;
    const int* dy = connectivity == 8 ? dy8 : dy4;
    const int nd = connectivity;

    int next_label = 0;
    for (int y0 = 0; y0 < H; ++y0) {
        for (int x0 = 0; x0 < W; ++x0) {
            const size_t idx0 = static_cast<size_t>(y0) * W + x0;
            if (!img.data[idx0] || labels[idx0]) continue;
            ++next_label;
            ComponentStats cs;
            cs.label = next_label;
            int minx = x0, maxx = x0, miny = y0, maxy = y0;
            double sx = 0.0, sy = 0.0;
            labels[idx0] = next_label;
            stack.clear();
            stack.push_back(static_cast<int>(idx0));
            while (!stack.empty()) {
                const int idx = stack.back();
                stack.pop_back();
                const int x = idx % W, y = idx / W;
                ++cs.area;
                sx += x;
                sy += y;
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
                for (int d = 0; d < nd; ++d) {
                    const int nx = x + dx[d], ny = y + dy[d];
                    if (nx < 0 || nx >= W || ny < 0 || ny >= H) continue;
                    const size_t nidx = static_cast<size_t>(ny) * W + nx;
                    if (img.data[nidx] && !labels[nidx]) {
                        labels[nidx] = next_label;
                        stack.push_back(static_cast<int>(nidx));
                    }
                }
            }
            cs.x = minx;
            cs.y = miny;
            cs.w = maxx - minx + 1;
            cs.h = maxy - miny + 1;
            cs.cx = sx / cs.area;
            cs.cy = sy / cs.area;
            stats.push_back(cs);
        }
    }
    if (label_map) *label_map = std::move(labels);
    return stats;
}

GrayImage abs_diff(const GrayImage& a, const GrayImage& b) {
    if (!a.same_size(b)) throw std::invalid_argument("abs_diff: dimension mismatch");
    GrayImage out(a.width, a.height);
    for (size_t i = 0; i < a.size(); ++i)
        out.data[i] = static_cast<uint8_t>(std::abs(int(a.data[i]) - int(b.data[i])));
    return out;
}

GrayImage resize(const GrayImage& img, int w, int h, ResizeMode mode) {
    if (w < 1 || h < 1) throw std::invalid_argument("resize: target dimensions must be >= 1");
    if (w == img.width && h == img.height) return img;
    GrayImage out(w, h);
    if (mode == ResizeMode::Nearest) {
        for (int y = 0; y < h; ++y) {
            const int sy = std::min(static_cast<int>(static_cast<int64_t>(y) * img.height / h),
                                    img.height - 1);
            for (int x = 0; x < w; ++x) {
                const int sx = std::min(static_cast<int>(static_cast<int64_t>(x) * img.width / w),
                                        img.width - 1);
                out.at(x, y) = img.at(sx, sy);
            }
        }
        return out;
    }
    // bilinear, pixel-center mapping, edge clamped
    const double scale_x = static_cast<double>(img.width) / w;
    const double scale_y = static_cast<double>(img.height) / h;
    for (int y = 0; y < h; ++y) {
        const double fy = (y + 0.5) * scale_y - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        const int ya = std::clamp(y0, 0, img.height - 1);
        const int yb = std::clamp(y0 + 1, 0, img.height - 1);
        for (int x = 0; x < w; ++x) {
            const double fx = (x + 0.5) * scale_x - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            const int xa = std::clamp(x0, 0, img.width - 1);
            const int xb = std::clamp(x0 + 1, 0, img.width - 1);
            const double v = (1 - wy) * ((1 - wx) * img.at(xa, ya) + wx * img.at(xb, ya)) +
                             wy * ((1 - wx) * img.at(xa, yb) + wx * img.at(xb, yb));
            out.at(x, y) = round_to_u8(v);
        }
    }
    return out;
}

GrayImage invert(const GrayImage& img) {
    GrayImage out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i)
        out.data[i] = static_cast<uint8_t>(255 - img.data[i]);
    return out;
}

int otsu_threshold(const GrayImage& img) {
    long hist[256] = {0};
    for (uint8_t v : img.data) ++hist[v];
    const double total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * hist[i];

    double sum_b = 0.0, w_b = 0.0;
    double best_var = -1.0;
    int best_t = 0;
    for (int t = 0; t < 256; ++t) {
        w_b += hist[t];
        if (w_b == 0) continue;
        const double w_f = total - w_b;
        if (w_f == 0) break;
        sum_b += static_cast<double>(t) * hist[t];
        const double m_b = sum_b / w_b;
        const double m_f = (sum_all - sum_b) / w_f;
        const double between = w_b * w_f * (m_b - m_f) * (m_b - m_f);
        if (between > best_var) {
            best_var = between;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace plateinspect
