#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "plateinspect/image.hpp"

namespace plateinspect {

// The 17-glyph nameplate alphabet.
inline const std::string kGlyphAlphabet = "0123456789SCBKYTA";

struct OcrConfig {
    int bg_kernel = 149;        // background-estimation blur (clipped to the crop)
    double bg_sigma = 149 / 6.0;
    int close_structel = 3;
    int pad = 2;                // per-side padding added to character boxes
    int min_component_area = 4; // components below this are noise
};

struct CharBox {
    int x = 0, y = 0, w = 0, h = 0;  // string-crop coordinates, after padding+clamp
    int pad = 0;
};

struct RecognizedString {
    std::string text;                       // over kGlyphAlphabet
    std::vector<double> per_char_confidence;
    std::vector<CharBox> char_boxes;
};

struct StringVerification {
    std::string expected;
    std::string recognized;
    int edit_distance = 0;
    bool match = false;  // edit_distance == 0
};

// Fig.-5-style preprocessing: heavy Gaussian blur estimates the background,
// which is subtracted and the result binarized (Otsu) and closed. Output mask
// is true on character ink.
BinaryImage preprocess_string_region(const GrayImage& crop, const OcrConfig& cfg = {});

// Character segmentation by connected components merged on x-overlap,
// left-to-right, boxes expanded by pad and clamped to the crop.
std::vector<CharBox> segment_characters(const BinaryImage& bin, int pad,
                                        int min_component_area = 4);

// 17 glyph templates, 32x32 each, loaded from <glyph>.png files.
class GlyphAtlas {
public:
    static constexpr int kSide = 32;

    static GlyphAtlas load(const std::string& dir);
    static GlyphAtlas from_images(const std::map<char, GrayImage>& glyphs);

    // (glyph, ncc score) for the best template match of a normalized crop.
    std::pair<char, double> best_match(const GrayImage& crop) const;

private:
    std::vector<char> names_;
    std::vector<std::vector<float>> templates_;  // zero-mean unit-norm pixels
};

struct TemplateBackend {
    GlyphAtlas atlas;
};

// Subprocess adapter: `command <png_path>` prints one line of recognized text.
struct ExternalOcrBackend {
    std::string command;
};

using OcrBackend = std::variant<TemplateBackend, ExternalOcrBackend>;

// Recognize one character crop per entry; char_boxes is left empty (the
// caller owns box geometry).
RecognizedString recognize_characters(const std::vector<GrayImage>& chars,
                                      const OcrBackend& backend);

// Levenshtein distance with unit insert/delete/substitute costs.
int edit_distance(const std::string& a, const std::string& b);

struct VerificationSummary {
    std::vector<StringVerification> results;
    double wer = 0.0;  // mismatched strings / total strings
    double cer = 0.0;  // total edit distance / total expected characters
    bool all_match = true;
};

// Pairs recognized strings with expected values positionally. A length
// mismatch is an error (the pipeline maps it to defective_unverifiable).
VerificationSummary verify_strings(const std::vector<RecognizedString>& recognized,
                                   const std::vector<std::string>& expected);

}  // namespace plateinspect
