#include "plateinspect/ocr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "plateinspect/common.hpp"
#include "plateinspect/image_io.hpp"

namespace plateinspect {

BinaryImage preprocess_string_region(const GrayImage& crop, const OcrConfig& cfg) {
    if (crop.empty()) throw std::invalid_argument("preprocess_string_region: empty crop");

    const GrayImage background = gaussian_blur(crop, cfg.bg_kernel, cfg.bg_sigma);
    GrayImage sub(crop.width, crop.height);
    for (size_t i = 0; i < crop.size(); ++i) {
        const int v = int(crop.data[i]) - int(background.data[i]);
        sub.data[i] = static_cast<uint8_t>(std::max(0, v));
    }
    // bitwise NOT gives the dark-text-on-light view the OCR engines expect;
    // the ink mask is everything at or below Otsu's split of that view
    const GrayImage inverted = invert(sub);
    const int t = otsu_threshold(inverted);
    BinaryImage ink(crop.width, crop.height);
    for (size_t i = 0; i < crop.size(); ++i) ink.data[i] = inverted.data[i] <= t ? 1 : 0;
    if (ink.count_true() == ink.size()) return BinaryImage(crop.width, crop.height, false);
    return morphology(ink, MorphOp::Close, cfg.close_structel);
}

std::vector<CharBox> segment_characters(const BinaryImage& bin, int pad, int min_component_area) {
    if (pad < 0) throw std::invalid_argument("segment_characters: pad must be >= 0");
    struct Box {
        int x0, y0, x1, y1;  // inclusive
    };
    std::vector<Box> boxes;
    for (const auto& c : connected_components(bin, 8)) {
        if (c.area < min_component_area) continue;
        boxes.push_back({c.x, c.y, c.x + c.w - 1, c.y + c.h - 1});
    }
    if (boxes.empty()) return {};

    // merge pieces of the same glyph: x-ranges overlapping by at least half
    // of the narrower piece belong together
    std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) { return a.x0 < b.x0; });
    std::vector<Box> merged;
    for (const auto& b : boxes) {
        bool absorbed = false;
        for (auto& m : merged) {
            const int ov = std::min(m.x1, b.x1) - std::max(m.x0, b.x0) + 1;
            const int wmin = std::min(m.x1 - m.x0, b.x1 - b.x0) + 1;
            if (ov > 0 && 2 * ov >= wmin) {
                m.x0 = std::min(m.x0, b.x0);
                m.x1 = std::max(m.x1, b.x1);
                m.y0 = std::min(m.y0, b.y0);
                m.y1 = std::max(m.y1, b.y1);
                absorbed = true;
                break;
            }
        }
        if (!absorbed) merged.push_back(b);
    }
    std::sort(merged.begin(), merged.end(), [](const Box& a, const Box& b) { return a.x0 < b.x0; });

    std::vector<CharBox> out;
    for (const auto& m : merged) {
        CharBox cb;
        cb.pad = pad;
        const int x0 = std::max(0, m.x0 - pad);
        const int y0 = std::max(0, m.y0 - pad);
        const int x1 = std::min(bin.width - 1, m.x1 + pad);
        const int y1 = std::min(bin.height - 1, m.y1 + pad);
        cb.x = x0;
        cb.y = y0;
        cb.w = x1 - x0 + 1;
        cb.h = y1 - y0 + 1;
        out.push_back(cb);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Glyph atlas / template matching
// ---------------------------------------------------------------------------

namespace {

std::vector<float> normalize_patch(const GrayImage& img) {
    std::vector<float> v(img.size());
    double mean = 0.0;
    for (size_t i = 0; i < img.size(); ++i) mean += img.data[i];
    mean /= img.size();
    double norm2 = 0.0;
    for (size_t i = 0; i < img.size(); ++i) {
        v[i] = static_cast<float>(img.data[i] - mean);
        norm2 += double(v[i]) * v[i];
    }
    if (norm2 > 1e-9) {
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (auto& x : v) x *= inv;
    } else {
        std::fill(v.begin(), v.end(), 0.f);
    }
    return v;
}

}  // namespace

GlyphAtlas GlyphAtlas::from_images(const std::map<char, GrayImage>& glyphs) {
    GlyphAtlas atlas;
    for (char g : kGlyphAlphabet) {
        const auto it = glyphs.find(g);
        if (it == glyphs.end())
            throw ConfigError(std::string("glyph atlas missing glyph '") + g + "'");
        GrayImage t = it->second;
        if (t.width != kSide || t.height != kSide)
            t = resize(t, kSide, kSide, ResizeMode::Bilinear);
        atlas.names_.push_back(g);
        atlas.templates_.push_back(normalize_patch(t));
    }
    return atlas;
}

GlyphAtlas GlyphAtlas::load(const std::string& dir) {
    std::map<char, GrayImage> glyphs;
    for (char g : kGlyphAlphabet) {
        const std::string path = dir + "/" + std::string(1, g) + ".png";
        if (!std::filesystem::exists(path))
            throw ConfigError("glyph atlas missing " + path);
        glyphs[g] = read_png(path);
    }
    return from_images(glyphs);
}

std::pair<char, double> GlyphAtlas::best_match(const GrayImage& crop) const {
    const GrayImage sized = resize(crop, kSide, kSide, ResizeMode::Bilinear);
    const auto v = normalize_patch(sized);
    char best = names_[0];
    double best_score = -2.0;
    for (size_t i = 0; i < templates_.size(); ++i) {
        double dot = 0.0;
        for (size_t k = 0; k < v.size(); ++k) dot += double(v[k]) * templates_[i][k];
        if (dot > best_score) {
            best_score = dot;
            best = names_[i];
        }
    }
    return {best, std::clamp(best_score, 0.0, 1.0)};
}

namespace {

RecognizedString recognize_template(const std::vector<GrayImage>& chars, const GlyphAtlas& atlas) {
    RecognizedString rs;
    for (const auto& crop : chars) {
        const auto [glyph, score] = atlas.best_match(crop);
        rs.text.push_back(glyph);
        rs.per_char_confidence.push_back(score);
    }
    return rs;
}

RecognizedString recognize_external(const std::vector<GrayImage>& chars,
                                    const ExternalOcrBackend& backend) {
    namespace fs = std::filesystem;
    RecognizedString rs;
    for (size_t i = 0; i < chars.size(); ++i) {
        const fs::path tmp = fs::temp_directory_path() /
                             ("plateinspect_ocr_" + std::to_string(::getpid()) + "_" +
                              std::to_string(i) + ".png");
        write_png(chars[i], tmp.string());
        const std::string cmd = backend.command + " " + tmp.string();
        FILE* pipe = popen(cmd.c_str(), "r");
        if (!pipe) {
            fs::remove(tmp);
            throw BackendUnavailableError("external OCR failed to start: " + backend.command);
        }
        std::string line;
        char buf[256];
        while (fgets(buf, sizeof(buf), pipe)) line += buf;
        const int rc = pclose(pipe);
        fs::remove(tmp);
        if (rc != 0)
            throw BackendUnavailableError("external OCR exited with status " + std::to_string(rc));
        while (!line.empty() && (line.back() == '\n' || line.back() == '\r' || line.back() == ' '))
            line.pop_back();
        rs.text.push_back(line.empty() ? '?' : line[0]);
        rs.per_char_confidence.push_back(1.0);
    }
    return rs;
}

}  // namespace

RecognizedString recognize_characters(const std::vector<GrayImage>& chars,
                                      const OcrBackend& backend) {
    return std::visit(
        [&](const auto& b) -> RecognizedString {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, TemplateBackend>)
                return recognize_template(chars, b.atlas);
            else
                return recognize_external(chars, b);
        },
        backend);
}

int edit_distance(const std::string& a, const std::string& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

VerificationSummary verify_strings(const std::vector<RecognizedString>& recognized,
                                   const std::vector<std::string>& expected) {
    if (recognized.size() != expected.size())
        throw std::invalid_argument("verify_strings: recognized/expected count mismatch");
    VerificationSummary out;
    long mismatched = 0, total_dist = 0, total_chars = 0;
    for (size_t i = 0; i < expected.size(); ++i) {
        StringVerification v;
        v.expected = expected[i];
        v.recognized = recognized[i].text;
        v.edit_distance = edit_distance(v.recognized, v.expected);
        v.match = v.edit_distance == 0;
        if (!v.match) {
            ++mismatched;
            out.all_match = false;
        }
        total_dist += v.edit_distance;
        total_chars += static_cast<long>(v.expected.size());
        out.results.push_back(std::move(v));
    }
    const long total = static_cast<long>(expected.size());
    out.wer = total > 0 ? static_cast<double>(mismatched) / total : 0.0;
    out.cer = total_chars > 0 ? static_cast<double>(total_dist) / total_chars
                              : (total_dist > 0 ? 1.0 : 0.0);
    return out;
}

}  // namespace plateinspect
