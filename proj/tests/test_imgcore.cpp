#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "plateinspect/common.hpp"
#include "plateinspect/image.hpp"
#include "plateinspect/image_io.hpp"

using namespace plateinspect;

namespace {

GrayImage random_image(int w, int h, uint64_t seed) {
    Rng rng(seed);
    GrayImage img(w, h);
    for (auto& v : img.data) v = static_cast<uint8_t>(rng.uniform_int(256));
    return img;
}

BinaryImage random_mask(int w, int h, uint64_t seed, double density = 0.4) {
    Rng rng(seed);
    BinaryImage m(w, h);
    for (auto& v : m.data) v = rng.uniform() < density ? 1 : 0;
    return m;
}

// Direct O(n^2 k^2) convolution with the same reflect border, the blur oracle.
GrayImage blur_oracle(const GrayImage& img, int k, double sigma) {
    const int r = k / 2;
    std::vector<double> w1(k);
    double sum = 0;
    for (int i = 0; i < k; ++i) {
        const double d = i - r;
        w1[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += w1[i];
    }
    for (auto& v : w1) v /= sum;
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - i - 1;
        }
        return i;
    };
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    acc += w1[dy + r] * w1[dx + r] *
                           img.at(reflect(x + dx, img.width), reflect(y + dy, img.height));
            out.at(x, y) = static_cast<uint8_t>(std::clamp(std::round(acc), 0.0, 255.0));
        }
    return out;
}

// Recursive flood fill, the connected-components oracle.
void flood(const BinaryImage& img, int x, int y, int label, std::vector<int>& labels, int conn) {
    const int W = img.width, H = img.height;
    std::vector<std::pair<int, int>> stack{{x, y}};
    labels[y * W + x] = label;
    while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                if (conn == 4 && dx != 0 && dy != 0) continue;
                const int nx = cx + dx, ny = cy + dy;
                if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                if (img.at(nx, ny) && !labels[ny * W + nx]) {
                    labels[ny * W + nx] = label;
                    stack.emplace_back(nx, ny);
                }
            }
    }
}

}  // namespace

TEST_CASE("gaussian_blur keeps constant images constant") {
    GrayImage img(32, 20, 77);
    const GrayImage out = gaussian_blur(img, 5, 1.0);
    for (auto v : out.data) CHECK(v == 77);
}

TEST_CASE("gaussian_blur impulse response equals the normalized kernel") {
    GrayImage img(9, 9, 0);
    img.at(4, 4) = 255;
    const GrayImage out = gaussian_blur(img, 3, 0.8);
    // oracle: separable kernel outer product
    double w[3], sum = 0;
    for (int i = 0; i < 3; ++i) {
        const double d = i - 1;
        w[i] = std::exp(-0.5 * d * d / (0.8 * 0.8));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) {
            if (std::abs(x - 4) <= 1 && std::abs(y - 4) <= 1) {
                const int expect =
                    static_cast<int>(std::round(255.0 * w[x - 3] * w[y - 3]));
                CHECK(std::abs(int(out.at(x, y)) - expect) <= 1);
            } else {
                CHECK(out.at(x, y) == 0);
            }
        }
}

TEST_CASE("gaussian_blur matches the direct 2-D convolution oracle") {
    const GrayImage img = random_image(64, 64, 42);
    // kernel 149 is clipped to the image (127 here)
    const GrayImage fast = gaussian_blur(img, 149, 149 / 6.0);
    const GrayImage slow = blur_oracle(img, 127, 149 / 6.0);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(int(fast.data[i]) - int(slow.data[i])) <= 1);
}

TEST_CASE("gaussian_blur rejects bad kernels") {
    GrayImage img(8, 8, 0);
    CHECK_THROWS_AS(gaussian_blur(img, 4, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_blur(img, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_blur(img, 3, 0.0), std::invalid_argument);
}

TEST_CASE("gaussian_blur preserves mean within border tolerance") {
    const GrayImage img = random_image(48, 48, 7);
    const GrayImage out = gaussian_blur(img, 7, 1.2);
    double m_in = 0, m_out = 0;
    for (size_t i = 0; i < img.size(); ++i) {
        m_in += img.data[i];
        m_out += out.data[i];
    }
    CHECK(std::abs(m_in - m_out) / img.size() <= 1.0);
}

TEST_CASE("threshold_binary is a strict per-pixel comparison") {
    GrayImage zeros(5, 5, 0);
    CHECK(threshold_binary(zeros, 0).count_true() == 0);
    GrayImage full(5, 5, 255);
    CHECK(threshold_binary(full, 254).count_true() == 25);

    GrayImage cb(10, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) cb.at(x, y) = (x + y) % 2 ? 200 : 10;
    const BinaryImage mask = threshold_binary(cb, 100);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) CHECK(mask.at(x, y) == (cb.at(x, y) > 100 ? 1 : 0));

    CHECK_THROWS_AS(threshold_binary(cb, -1), std::invalid_argument);
    CHECK_THROWS_AS(threshold_binary(cb, 256), std::invalid_argument);
}

TEST_CASE("morphology structel 1 is the identity") {
    const BinaryImage m = random_mask(16, 16, 3);
    for (auto op : {MorphOp::Erode, MorphOp::Dilate, MorphOp::Open, MorphOp::Close})
        CHECK(morphology(m, op, 1).data == m.data);
    CHECK_THROWS_AS(morphology(m, MorphOp::Erode, 2), std::invalid_argument);
}

TEST_CASE("dilate of a single pixel is a clipped square") {
    BinaryImage m(8, 8);
    m.at(3, 3) = 1;
    const BinaryImage d = morphology(m, MorphOp::Dilate, 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            CHECK(d.at(x, y) == ((std::abs(x - 3) <= 1 && std::abs(y - 3) <= 1) ? 1 : 0));

    BinaryImage corner(8, 8);
    corner.at(0, 0) = 1;
    const BinaryImage dc = morphology(corner, MorphOp::Dilate, 3);
    CHECK(dc.count_true() == 4);  // clipped at the border
}

TEST_CASE("erode matches the sliding-window min oracle on random masks") {
    for (int trial = 0; trial < 100; ++trial) {
        const BinaryImage m = random_mask(16, 16, 100 + trial);
        const BinaryImage er = morphology(m, MorphOp::Erode, 3);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                uint8_t expect = 1;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        const uint8_t v =
                            (nx < 0 || ny < 0 || nx >= 16 || ny >= 16) ? 0 : m.at(nx, ny);
                        expect &= v;
                    }
                CHECK(er.at(x, y) == expect);
            }
    }
}

TEST_CASE("morphology duality away from borders") {
    // pad the mask so the border convention drops out
    BinaryImage m(24, 24);
    Rng rng(5);
    for (int y = 4; y < 20; ++y)
        for (int x = 4; x < 20; ++x) m.at(x, y) = rng.uniform() < 0.5 ? 1 : 0;
    BinaryImage comp(24, 24);
    for (size_t i = 0; i < m.size(); ++i) comp.data[i] = m.data[i] ? 0 : 1;
    const BinaryImage lhs = morphology(comp, MorphOp::Dilate, 3);
    const BinaryImage rhs = morphology(m, MorphOp::Erode, 3);
    for (int y = 2; y < 22; ++y)
        for (int x = 2; x < 22; ++x) CHECK(lhs.at(x, y) == (rhs.at(x, y) ? 0 : 1));
}

TEST_CASE("open and close are idempotent") {
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryImage m = random_mask(20, 20, 500 + trial);
        const BinaryImage o1 = morphology(m, MorphOp::Open, 3);
        CHECK(morphology(o1, MorphOp::Open, 3).data == o1.data);
        const BinaryImage c1 = morphology(m, MorphOp::Close, 3);
        CHECK(morphology(c1, MorphOp::Close, 3).data == c1.data);
    }
}

TEST_CASE("connected_components basic cases") {
    BinaryImage empty(8, 8);
    CHECK(connected_components(empty, 8).empty());

    BinaryImage two(8, 8);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            two.at(x, y) = 1;
            two.at(x + 5, y + 5) = 1;
        }
    const auto stats = connected_components(two, 8);
    REQUIRE(stats.size() == 2);
    CHECK(stats[0].area == 4);
    CHECK(stats[1].area == 4);
    CHECK(stats[0].label == 1);
    CHECK(stats[1].label == 2);
}

TEST_CASE("connected_components agrees with the flood-fill oracle") {
    for (int trial = 0; trial < 1000; ++trial) {
        const BinaryImage m = random_mask(32, 32, 9000 + trial, 0.35);
        const int conn = trial % 2 ? 8 : 4;
        std::vector<int> labels;
        const auto stats = connected_components(m, conn, &labels);

        std::vector<int> oracle(m.size(), 0);
        int next = 0;
        std::vector<long> areas;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                if (m.at(x, y) && !oracle[y * 32 + x]) {
                    flood(m, x, y, ++next, oracle, conn);
                }
        areas.assign(next, 0);
        for (size_t i = 0; i < m.size(); ++i)
            if (oracle[i]) ++areas[oracle[i] - 1];

        REQUIRE(static_cast<int>(stats.size()) == next);
        CHECK(labels == oracle);  // scan order makes labels identical
        long total_area = 0;
        for (int i = 0; i < next; ++i) {
            CHECK(stats[i].area == areas[i]);
            total_area += stats[i].area;
        }
        CHECK(total_area == static_cast<long>(m.count_true()));
    }
}

TEST_CASE("abs_diff basics and oracle") {
    const GrayImage a = random_image(16, 16, 1), b = random_image(16, 16, 2);
    const GrayImage z = abs_diff(a, a);
    for (auto v : z.data) CHECK(v == 0);

    GrayImage c(4, 4, 200), d(4, 4, 50);
    for (auto v : abs_diff(c, d).data) CHECK(v == 150);

    const GrayImage ab = abs_diff(a, b);
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(ab.data[i] == std::abs(int(a.data[i]) - int(b.data[i])));

    GrayImage e(5, 4);
    CHECK_THROWS_AS(abs_diff(a, e), std::invalid_argument);
}

TEST_CASE("resize identity and nearest column duplication") {
    const GrayImage img = random_image(64, 64, 10);
    CHECK(resize(img, 64, 64, ResizeMode::Nearest).data == img.data);
    CHECK(resize(img, 64, 64, ResizeMode::Bilinear).data == img.data);

    GrayImage two(2, 2);
    two.at(0, 0) = 0;
    two.at(1, 0) = 255;
    two.at(0, 1) = 0;
    two.at(1, 1) = 255;
    const GrayImage up = resize(two, 4, 4, ResizeMode::Nearest);
    for (int y = 0; y < 4; ++y) {
        CHECK(up.at(0, y) == 0);
        CHECK(up.at(1, y) == 0);
        CHECK(up.at(2, y) == 255);
        CHECK(up.at(3, y) == 255);
    }
    CHECK_THROWS_AS(resize(img, 0, 4, ResizeMode::Nearest), std::invalid_argument);
}

TEST_CASE("resize bilinear matches the direct interpolation oracle") {
    GrayImage grad(128, 128);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) grad.at(x, y) = static_cast<uint8_t>((x + y) % 256);
    const GrayImage out = resize(grad, 64, 64, ResizeMode::Bilinear);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const double fx = (x + 0.5) * 2.0 - 0.5, fy = (y + 0.5) * 2.0 - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, 127);
            const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, 127);
            const int x1 = std::min(x0 + 1, 127), y1 = std::min(y0 + 1, 127);
            const double wx = fx - std::floor(fx), wy = fy - std::floor(fy);
            const double v = (1 - wy) * ((1 - wx) * grad.at(x0, y0) + wx * grad.at(x1, y0)) +
                             wy * ((1 - wx) * grad.at(x0, y1) + wx * grad.at(x1, y1));
            CHECK(std::abs(out.at(x, y) - v) <= 1.0);
        }
}

TEST_CASE("invert is an involution") {
    GrayImage zero(4, 4, 0);
    for (auto v : invert(zero).data) CHECK(v == 255);
    GrayImage mid(4, 4, 128);
    for (auto v : invert(mid).data) CHECK(v == 127);
    const GrayImage img = random_image(30, 30, 77);
    CHECK(invert(invert(img)).data == img.data);
}

TEST_CASE("png and pgm round-trip") {
    namespace fs = std::filesystem;
    const GrayImage img = random_image(33, 21, 4);
    const auto dir = fs::temp_directory_path() / "plateinspect_io_test";
    fs::create_directories(dir);
    write_png(img, (dir / "x.png").string());
    CHECK(read_png((dir / "x.png").string()).data == img.data);
    write_pgm(img, (dir / "x.pgm").string());
    CHECK(read_pgm((dir / "x.pgm").string()).data == img.data);
    CHECK_THROWS_AS(read_png((dir / "missing.png").string()), IoError);
    fs::remove_all(dir);
}
