#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plateinspect/image.hpp"
#include "plateinspect/regions.hpp"

namespace plateinspect::synth {

// Bundled vector font: polylines per glyph on a small design grid. Kept as a
// data file (not a system font) so rendering is byte-exact everywhere.
struct StrokeFont {
    int grid = 32;
    double stroke_width = 3.2;
    std::map<char, std::vector<std::vector<std::array<double, 2>>>> glyphs;

    static StrokeFont load(const std::string& path);
    static StrokeFont from_json_text(const std::string& text);
};

// Symmetric jitter ranges; actual draws are uniform within +/- each value.
struct Jitter {
    double scale_pct = 0.0;   // e.g. 0.05 = +/-5%
    double shift_px = 0.0;
    double rotate_deg = 0.0;
    bool allow_hflip = false; // training-only augmentation
};

struct RenderStyle {
    int fg = 230;  // engraved stroke intensity
    int bg = 25;   // brushed-metal background
};

struct CharRender {
    GrayImage image;
    BinaryImage stroke_mask;  // exact ground truth (coverage > 0.5)
};

// Anti-aliased glyph rendering, deterministic per seed.
CharRender render_character(const StrokeFont& font, char glyph, int size, const Jitter& jitter,
                            uint64_t seed, const RenderStyle& style = {});

enum class DefectKind { StrokeCut, EdgeErosion, OcclusionBlob, PartialFade };

const char* to_string(DefectKind k);
DefectKind defect_kind_from_string(const std::string& s);

struct DefectRecipe {
    DefectKind kind = DefectKind::StrokeCut;
    double magnitude = 0.3;  // fraction of glyph pixels removed/attenuated, (0, 0.6]
    uint64_t seed = 0;
};

struct InjectResult {
    GrayImage image;
    int x = 0, y = 0, w = 0, h = 0;  // tight bbox of changed pixels
    long changed_pixels = 0;
};

// Only stroke-mask pixels are modified (occlusion blobs use a disk that
// intersects the mask); at least 8 pixels always change.
InjectResult inject_defect(const GrayImage& img, const BinaryImage& stroke_mask,
                           const DefectRecipe& recipe);

GrayImage apply_lighting(const GrayImage& img, double gain, double gamma,
                         std::optional<double> vignette = std::nullopt);

GrayImage add_noise(const GrayImage& img, double sigma, uint64_t seed);

// Deterministic built-in logo mark drawn with the stroke rasterizer.
struct LogoRender {
    GrayImage image;
    BinaryImage stroke_mask;
};
LogoRender render_logo(int w, int h, const RenderStyle& style = {});

struct PlateBlueprint {
    LayoutSpec layout;
    std::vector<std::string> strings;  // one per string region, layout order
    std::string serial;
};

enum class PlateDefectKind { Logo, CharPrint, StringContent, MissingString };

struct PlateDefectPlan {
    PlateDefectKind kind = PlateDefectKind::CharPrint;
    int region_idx = -1;   // index into layout.regions
    DefectRecipe recipe;   // used by Logo and CharPrint
    int char_idx = -1;     // -1 lets the seed pick
    char replacement = 0;  // StringContent; 0 lets the seed pick
};

struct GtDefectBox {
    int x = 0, y = 0, w = 0, h = 0;
};

struct PlateGroundTruth {
    std::string serial;
    bool defective = false;
    std::string defect_kind;           // "", "logo", "string_content", "char_print", "missing_string"
    std::string expected_failure_stage;  // "", "logo", "string_match", "char_anomaly"
    std::vector<Region> regions;       // captured-frame boxes
    std::vector<std::string> engraved_strings;
    std::vector<GtDefectBox> defect_boxes;  // captured frame
};

struct PlateRender {
    GrayImage image;
    PlateGroundTruth gt;
};

// Composites glyph renders and the logo per the layout at nominal size.
// Ground truth carries regions, strings and injected defect boxes.
PlateRender render_nameplate(const StrokeFont& font, const PlateBlueprint& bp,
                             const std::vector<PlateDefectPlan>& defect_plan, uint64_t seed);

// Default plate layout used by the bundled corpus (logo top-left, DMC
// top-right, six string rows).
LayoutSpec default_layout(int w = 1920, int h = 1600);

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct CharCorpusConfig {
    int clean_train = 2957;
    int defects_per_glyph = 10;  // 17 glyphs -> 170 defective training samples
    int val_clean = 103;
    int val_defective = 103;
    int test_clean = 250;
    int test_defective = 250;
    int size = 64;
    uint64_t seed = 11;
};

// Writes train/val/test PNGs plus JSON-lines manifests
// ({"path","glyph","label","gt_path"}) under out_dir. Returns manifest paths.
std::vector<std::string> generate_char_corpus(const StrokeFont& font, const CharCorpusConfig& cfg,
                                              const std::string& out_dir);

struct PlateCorpusConfig {
    int plates = 150;
    double defect_rate = 0.5;
    int width = 1920;
    int height = 1600;
    std::vector<double> gammas = {0.7, 1.0, 1.4};
    double noise_sigma = 2.0;
    uint64_t seed = 11;
};

// Writes reference.png, layout.json, mes.json, atlas/, plates/*.png and
// ground_truth.jsonl under out_dir.
void generate_plate_corpus(const StrokeFont& font, const PlateCorpusConfig& cfg,
                           const std::string& out_dir);

// Renders the 17-glyph template atlas (32x32 clean renders).
void write_glyph_atlas(const StrokeFont& font, const std::string& dir);

}  // namespace plateinspect::synth
