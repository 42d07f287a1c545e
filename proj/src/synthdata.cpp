#include "plateinspect/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "plateinspect/align.hpp"
#include "plateinspect/common.hpp"
#include "plateinspect/image_io.hpp"
#include "plateinspect/ocr.hpp"

namespace plateinspect::synth {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Stroke font
// ---------------------------------------------------------------------------

StrokeFont StrokeFont::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    StrokeFont font;
    font.grid = j.at("grid").get<int>();
    font.stroke_width = j.at("stroke_width").get<double>();
    for (const auto& [name, strokes] : j.at("glyphs").items()) {
        if (name.size() != 1) throw ConfigError("stroke font: glyph names must be single chars");
        std::vector<std::vector<std::array<double, 2>>> polys;
        for (const auto& poly : strokes) {
            std::vector<std::array<double, 2>> pts;
            for (const auto& p : poly) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            if (pts.size() >= 2) polys.push_back(std::move(pts));
        }
        font.glyphs[name[0]] = std::move(polys);
    }
    return font;
}

StrokeFont StrokeFont::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open stroke font " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

namespace {

struct Seg {
    double x0, y0, x1, y1;
};

// Accumulates stroke coverage (1-px soft edge) into cov, which must be sized
// w*h. Each segment only touches its dilated bounding box.
void raster_segments(const std::vector<Seg>& segs, double width, int w, int h,
                     std::vector<float>& cov) {
    const double r = width * 0.5;
    for (const auto& s : segs) {
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - r - 1)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + r + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - r - 1)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + r + 1)));
        const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
        const double len2 = dx * dx + dy * dy;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double px = x - s.x0, py = y - s.y0;
                double t = len2 > 1e-12 ? (px * dx + py * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double ex = px - t * dx, ey = py - t * dy;
                const double d = std::sqrt(ex * ex + ey * ey);
                const double c = std::clamp(r + 0.5 - d, 0.0, 1.0);
                auto& cell = cov[static_cast<size_t>(y) * w + x];
                cell = std::max(cell, static_cast<float>(c));
            }
        }
    }
}

std::vector<Seg> glyph_segments(const StrokeFont& font, char glyph, double scale, double rot_rad,
                                double cx_out, double cy_out, double dx, double dy, bool hflip) {
    const auto it = font.glyphs.find(glyph);
    if (it == font.glyphs.end())
        throw std::invalid_argument(std::string("unknown glyph '") + glyph + "'");
    const double c = std::cos(rot_rad), s = std::sin(rot_rad);
    const double half = font.grid / 2.0;
    std::vector<Seg> segs;
    for (const auto& poly : it->second) {
        for (size_t i = 0; i + 1 < poly.size(); ++i) {
            auto tf = [&](const std::array<double, 2>& p, double& ox, double& oy) {
                double x = p[0] - half, y = p[1] - half;
                if (hflip) x = -x;
                x *= scale;
                y *= scale;
                ox = c * x - s * y + cx_out + dx;
                oy = s * x + c * y + cy_out + dy;
            };
            Seg g{};
            tf(poly[i], g.x0, g.y0);
            tf(poly[i + 1], g.x1, g.y1);
            segs.push_back(g);
        }
    }
    return segs;
}

GrayImage coverage_to_image(const std::vector<float>& cov, int w, int h, const RenderStyle& style) {
    GrayImage img(w, h);
    const double span = style.fg - style.bg;
    for (size_t i = 0; i < cov.size(); ++i)
        img.data[i] = static_cast<uint8_t>(
            std::clamp(std::lround(style.bg + span * cov[i]), 0L, 255L));
    return img;
}

BinaryImage coverage_to_mask(const std::vector<float>& cov, int w, int h) {
    BinaryImage mask(w, h);
    for (size_t i = 0; i < cov.size(); ++i) mask.data[i] = cov[i] > 0.5f ? 1 : 0;
    return mask;
}

}  // namespace

CharRender render_character(const StrokeFont& font, char glyph, int size, const Jitter& jitter,
                            uint64_t seed, const RenderStyle& style) {
    if (size < 16) throw std::invalid_argument("render_character: size must be >= 16");
    Rng rng(seed);
    const double ds = jitter.scale_pct > 0 ? rng.uniform(-jitter.scale_pct, jitter.scale_pct) : 0.0;
    const double rot = jitter.rotate_deg > 0
                           ? rng.uniform(-jitter.rotate_deg, jitter.rotate_deg) * M_PI / 180.0
                           : 0.0;
    const double dx = jitter.shift_px > 0 ? rng.uniform(-jitter.shift_px, jitter.shift_px) : 0.0;
    const double dy = jitter.shift_px > 0 ? rng.uniform(-jitter.shift_px, jitter.shift_px) : 0.0;
    const bool flip = jitter.allow_hflip && rng.uniform() < 0.25;

    const double scale = (size / 40.0) * (1.0 + ds);  // glyphs occupy ~80% of the tile
    const auto segs = glyph_segments(font, glyph, scale, rot, size / 2.0, size / 2.0, dx, dy, flip);

    std::vector<float> cov(static_cast<size_t>(size) * size, 0.f);
    raster_segments(segs, font.stroke_width * scale, size, size, cov);
    return {coverage_to_image(cov, size, size, style), coverage_to_mask(cov, size, size)};
}

// ---------------------------------------------------------------------------
// Defect injection
// ---------------------------------------------------------------------------

const char* to_string(DefectKind k) {
    switch (k) {
        case DefectKind::StrokeCut: return "stroke_cut";
        case DefectKind::EdgeErosion: return "edge_erosion";
        case DefectKind::OcclusionBlob: return "occlusion_blob";
        case DefectKind::PartialFade: return "partial_fade";
    }
    return "stroke_cut";
}

DefectKind defect_kind_from_string(const std::string& s) {
    if (s == "stroke_cut") return DefectKind::StrokeCut;
    if (s == "edge_erosion") return DefectKind::EdgeErosion;
    if (s == "occlusion_blob") return DefectKind::OcclusionBlob;
    if (s == "partial_fade") return DefectKind::PartialFade;
    throw ConfigError("unknown defect kind: " + s);
}

namespace {

uint8_t estimate_background(const GrayImage& img, const BinaryImage& mask) {
    std::vector<uint8_t> bg;
    bg.reserve(img.size());
    for (size_t i = 0; i < img.size(); ++i)
        if (!mask.data[i]) bg.push_back(img.data[i]);
    if (bg.empty()) return 0;
    std::nth_element(bg.begin(), bg.begin() + bg.size() / 2, bg.end());
    return bg[bg.size() / 2];
}

std::vector<size_t> mask_indices(const BinaryImage& mask) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask.data[i]) idx.push_back(i);
    return idx;
}

}  // namespace

InjectResult inject_defect(const GrayImage& img, const BinaryImage& stroke_mask,
                           const DefectRecipe& recipe) {
    if (recipe.magnitude <= 0.0 || recipe.magnitude > 0.6)
        throw std::invalid_argument("inject_defect: magnitude must be in (0, 0.6]");
    if (img.width != stroke_mask.width || img.height != stroke_mask.height)
        throw std::invalid_argument("inject_defect: image/mask size mismatch");

    const auto stroke_idx = mask_indices(stroke_mask);
    if (stroke_idx.empty()) throw std::invalid_argument("inject_defect: empty stroke mask");

    Rng rng(recipe.seed);
    const long target = std::max<long>(8, std::lround(recipe.magnitude * stroke_idx.size()));
    const uint8_t bg = estimate_background(img, stroke_mask);

    InjectResult res;
    res.image = img;
    const int W = img.width, H = img.height;

    // candidate-mask of pixels the recipe may touch
    BinaryImage touchable = stroke_mask;
    double fade = 0.0;  // 0 = remove outright
    switch (recipe.kind) {
        case DefectKind::StrokeCut:
            break;
        case DefectKind::PartialFade:
            fade = 0.45;
            break;
        case DefectKind::EdgeErosion: {
            const BinaryImage eroded = morphology(stroke_mask, MorphOp::Erode, 3);
            for (size_t i = 0; i < touchable.size(); ++i)
                touchable.data[i] = stroke_mask.data[i] && !eroded.data[i];
            if (touchable.count_true() < 8) touchable = stroke_mask;  // thin strokes
            fade = 0.3;
            break;
        }
        case DefectKind::OcclusionBlob:
            break;
    }

    const auto cand_idx = mask_indices(touchable);
    const size_t center = cand_idx[rng.uniform_int(cand_idx.size())];
    const double cx = static_cast<double>(center % W), cy = static_cast<double>(center / W);

    // grow a disk around the anchor until enough candidate pixels fall inside
    const double max_r = std::hypot(W, H);
    double final_r = 1.5;
    for (long inside = 0; final_r <= max_r && inside < target; final_r += 1.0) {
        inside = 0;
        for (size_t p : cand_idx) {
            const double px = static_cast<double>(p % W), py = static_cast<double>(p / W);
            if (std::hypot(px - cx, py - cy) <= final_r) ++inside;
        }
        if (inside >= target) break;
    }
    long changed = 0;
    int minx = W, maxx = -1, miny = H, maxy = -1;
    for (size_t p : cand_idx) {
        const double px = static_cast<double>(p % W), py = static_cast<double>(p / W);
        if (std::hypot(px - cx, py - cy) > final_r) continue;
        const uint8_t old = res.image.data[p];
        const uint8_t nv = static_cast<uint8_t>(
            std::clamp(std::lround(bg + (double(old) - bg) * fade), 0L, 255L));
        if (nv == old) continue;
        res.image.data[p] = nv;
        ++changed;
        const int x = static_cast<int>(p % W), y = static_cast<int>(p / W);
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
    }
    res.changed_pixels = changed;
    if (maxx >= 0) {
        res.x = minx;
        res.y = miny;
        res.w = maxx - minx + 1;
        res.h = maxy - miny + 1;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Lighting / noise
// ---------------------------------------------------------------------------

GrayImage apply_lighting(const GrayImage& img, double gain, double gamma,
                         std::optional<double> vignette) {
    if (gain <= 0.0 || gamma <= 0.0)
        throw std::invalid_argument("apply_lighting: gain and gamma must be > 0");
    GrayImage out(img.width, img.height);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    const double rmax2 = cx * cx + cy * cy;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v = 255.0 * std::pow(gain * img.at(x, y) / 255.0, gamma);
            if (vignette) {
                const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / rmax2;
                v *= 1.0 - *vignette * r2;
            }
            out.at(x, y) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

GrayImage add_noise(const GrayImage& img, double sigma, uint64_t seed) {
    if (sigma <= 0.0) return img;
    Rng rng(seed);
    GrayImage out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i)
        out.data[i] = static_cast<uint8_t>(
            std::clamp(std::lround(img.data[i] + sigma * rng.normal()), 0L, 255L));
    return out;
}

// ---------------------------------------------------------------------------
// Logo
// ---------------------------------------------------------------------------

LogoRender render_logo(int w, int h, const RenderStyle& style) {
    // double border, disc with bolt pattern, three speed bars
    std::vector<Seg> segs;
    auto rect = [&](double x0, double y0, double x1, double y1) {
        segs.push_back({x0, y0, x1, y0});
        segs.push_back({x1, y0, x1, y1});
        segs.push_back({x1, y1, x0, y1});
        segs.push_back({x0, y1, x0, y0});
    };
    auto circle = [&](double cx, double cy, double r, int n) {
        for (int i = 0; i < n; ++i) {
            const double a0 = 2 * M_PI * i / n, a1 = 2 * M_PI * (i + 1) / n;
            segs.push_back({cx + r * std::cos(a0), cy + r * std::sin(a0), cx + r * std::cos(a1),
                            cy + r * std::sin(a1)});
        }
    };
    const double m = 0.06 * h;
    rect(m, m, w - m, h - m);
    rect(2.2 * m, 2.2 * m, w - 2.2 * m, h - 2.2 * m);
    const double cx = 0.28 * w, cy = 0.5 * h, R = 0.3 * h;
    circle(cx, cy, R, 28);
    circle(cx, cy, 0.45 * R, 16);
    for (int i = 0; i < 6; ++i) {
        const double a = 2 * M_PI * i / 6;
        segs.push_back({cx + 0.45 * R * std::cos(a), cy + 0.45 * R * std::sin(a),
                        cx + R * std::cos(a), cy + R * std::sin(a)});
    }
    for (int i = 0; i < 3; ++i) {
        const double y = 0.32 * h + 0.18 * h * i;
        segs.push_back({0.48 * w, y, 0.88 * w - 0.06 * w * i, y});
    }
    std::vector<float> cov(static_cast<size_t>(w) * h, 0.f);
    raster_segments(segs, std::max(3.0, 0.05 * h), w, h, cov);
    return {coverage_to_image(cov, w, h, style), coverage_to_mask(cov, w, h)};
}

// ---------------------------------------------------------------------------
// Plates
// ---------------------------------------------------------------------------

LayoutSpec default_layout(int w, int h) {
    LayoutSpec spec;
    spec.plate_type = "kb-std-01";
    spec.nominal_w = w;
    spec.nominal_h = h;
    auto sx = [&](double f) { return static_cast<int>(std::lround(f * w / 1920.0)); };
    auto sy = [&](double f) { return static_cast<int>(std::lround(f * h / 1600.0)); };
    spec.regions.push_back({RegionClass::Logo, sx(140), sy(90), sx(640), sy(200), 1.0});
    spec.regions.push_back({RegionClass::Dmc, sx(1540), sy(90), sy(240), sy(240), 1.0});
    for (int i = 0; i < 6; ++i)
        spec.regions.push_back(
            {RegionClass::String, sx(170), sy(480 + 170 * i), sx(1190), sy(120), 1.0});
    return spec;
}

namespace {

void blit_max(GrayImage& canvas, const GrayImage& tile, int ox, int oy) {
    for (int y = 0; y < tile.height; ++y) {
        const int py = oy + y;
        if (py < 0 || py >= canvas.height) continue;
        for (int x = 0; x < tile.width; ++x) {
            const int px = ox + x;
            if (px < 0 || px >= canvas.width) continue;
            canvas.at(px, py) = std::max(canvas.at(px, py), tile.at(x, y));
        }
    }
}

GtDefectBox offset_box(const InjectResult& inj, int ox, int oy) {
    return {inj.x + ox, inj.y + oy, inj.w, inj.h};
}

}  // namespace

PlateRender render_nameplate(const StrokeFont& font, const PlateBlueprint& bp,
                             const std::vector<PlateDefectPlan>& defect_plan, uint64_t seed) {
    const auto& regions = bp.layout.regions;
    size_t n_strings = 0;
    for (const auto& r : regions)
        if (r.cls == RegionClass::String) ++n_strings;
    if (n_strings != bp.strings.size())
        throw std::invalid_argument("render_nameplate: string count does not match layout");

    const RenderStyle style;
    PlateRender out;
    out.image = GrayImage(bp.layout.nominal_w, bp.layout.nominal_h, style.bg);
    out.gt.serial = bp.serial;
    out.gt.regions = regions;
    out.gt.engraved_strings = bp.strings;

    auto plan_for = [&](int region_idx) -> const PlateDefectPlan* {
        for (const auto& p : defect_plan)
            if (p.region_idx == region_idx) return &p;
        return nullptr;
    };

    Rng rng(seed);
    size_t string_no = 0;
    for (size_t ri = 0; ri < regions.size(); ++ri) {
        const Region& reg = regions[ri];
        const PlateDefectPlan* plan = plan_for(static_cast<int>(ri));

        if (reg.cls == RegionClass::Logo) {
            auto logo = render_logo(reg.w, reg.h, style);
            if (plan && plan->kind == PlateDefectKind::Logo) {
                auto inj = inject_defect(logo.image, logo.stroke_mask, plan->recipe);
                logo.image = inj.image;
                out.gt.defect_boxes.push_back(offset_box(inj, reg.x, reg.y));
                out.gt.defective = true;
                out.gt.defect_kind = "logo";
                out.gt.expected_failure_stage = "logo";
            }
            blit_max(out.image, logo.image, reg.x, reg.y);
        } else if (reg.cls == RegionClass::Dmc) {
            // decorative data-matrix look-alike: L finder pattern, alternating
            // clock track, random payload (never decoded)
            Rng drng = Rng::derive(seed, 0xD3C0DE);
            const int cells = 12;
            const int cw = reg.w / cells, ch = reg.h / cells;
            for (int cyy = 0; cyy < cells; ++cyy)
                for (int cxx = 0; cxx < cells; ++cxx) {
                    bool on;
                    if (cxx == 0 || cyy == cells - 1) on = true;
                    else if (cyy == 0 || cxx == cells - 1) on = (cxx + cyy) % 2 == 0;
                    else on = drng.uniform() < 0.45;
                    if (!on) continue;
                    for (int y = 0; y < ch; ++y)
                        for (int x = 0; x < cw; ++x)
                            out.image.at(reg.x + cxx * cw + x, reg.y + cyy * ch + y) =
                                static_cast<uint8_t>(style.fg);
                }
        } else {
            std::string text = bp.strings[string_no];
            bool blanked = false;
            int defect_char_idx = -1;
            if (plan) {
                if (plan->kind == PlateDefectKind::MissingString) {
                    blanked = true;
                    out.gt.defective = true;
                    out.gt.defect_kind = "missing_string";
                    out.gt.expected_failure_stage = "string_match";
                    out.gt.engraved_strings[string_no] = "";
                } else if (plan->kind == PlateDefectKind::StringContent) {
                    int idx = plan->char_idx >= 0
                                  ? plan->char_idx
                                  : static_cast<int>(rng.uniform_int(text.size()));
                    char repl = plan->replacement;
                    if (repl == 0 || repl == text[idx]) {
                        do {
                            repl = kGlyphAlphabet[rng.uniform_int(kGlyphAlphabet.size())];
                        } while (repl == text[idx]);
                    }
                    text[idx] = repl;
                    out.gt.defective = true;
                    out.gt.defect_kind = "string_content";
                    out.gt.expected_failure_stage = "string_match";
                    out.gt.engraved_strings[string_no] = text;
                } else if (plan->kind == PlateDefectKind::CharPrint) {
                    defect_char_idx = plan->char_idx >= 0
                                          ? plan->char_idx
                                          : static_cast<int>(rng.uniform_int(text.size()));
                }
            }
            if (!blanked) {
                const int n = static_cast<int>(text.size());
                const double cell_w = static_cast<double>(reg.w) / n;
                const int size = reg.h;
                for (int ci = 0; ci < n; ++ci) {
                    Jitter j{0.02, 1.5, 1.0, false};
                    auto cr = render_character(font, text[ci], size, j,
                                               rng.next_u64(), style);
                    const int ox = reg.x + static_cast<int>(std::lround(ci * cell_w +
                                                                        (cell_w - size) / 2.0));
                    const int oy = reg.y;
                    if (ci == defect_char_idx) {
                        auto inj = inject_defect(cr.image, cr.stroke_mask, plan->recipe);
                        cr.image = inj.image;
                        out.gt.defect_boxes.push_back(offset_box(inj, ox, oy));
                        out.gt.defective = true;
                        out.gt.defect_kind = "char_print";
                        out.gt.expected_failure_stage = "char_anomaly";
                    }
                    blit_max(out.image, cr.image, ox, oy);
                }
            }
            ++string_no;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

void write_glyph_atlas(const StrokeFont& font, const std::string& dir) {
    fs::create_directories(dir);
    for (char g : kGlyphAlphabet) {
        auto r = render_character(font, g, 32, Jitter{}, 0);
        write_png(r.image, dir + "/" + std::string(1, g) + ".png");
    }
}

namespace {

struct CharSampleSpec {
    char glyph;
    bool defective;
    bool training;  // hflip allowed
};

// One (input, ground-truth) pair; lighting is shared, noise only on input.
// Manifest paths are relative to out_dir so corpora stay relocatable.
void emit_char_sample(const StrokeFont& font, const CharSampleSpec& spec, int size, uint64_t seed,
                      const std::string& out_dir, const std::string& rel_img,
                      const std::string& rel_gt, std::ostream& manifest) {
    Rng rng(seed);
    Jitter j{0.05, 2.0, 3.0, spec.training};
    auto clean = render_character(font, spec.glyph, size, j, rng.next_u64());

    GrayImage input = clean.image;
    std::string kind;
    if (spec.defective) {
        DefectRecipe recipe;
        recipe.kind = static_cast<DefectKind>(rng.uniform_int(4));
        recipe.magnitude = rng.uniform(0.12, 0.45);
        recipe.seed = rng.next_u64();
        auto inj = inject_defect(input, clean.stroke_mask, recipe);
        input = inj.image;
        kind = to_string(recipe.kind);
    }

    const double gain = rng.uniform(0.85, 1.15);
    const double gamma = rng.uniform(0.7, 1.4);
    const GrayImage gt = apply_lighting(clean.image, gain, gamma);
    input = add_noise(apply_lighting(input, gain, gamma), 2.0, rng.next_u64());

    write_png(input, (fs::path(out_dir) / rel_img).string());
    write_png(gt, (fs::path(out_dir) / rel_gt).string());

    json line;
    line["path"] = rel_img;
    line["glyph"] = std::string(1, spec.glyph);
    line["label"] = spec.defective ? "defective" : "clean";
    line["gt_path"] = rel_gt;
    if (!kind.empty()) line["defect_kind"] = kind;
    manifest << line.dump() << "\n";
}

}  // namespace

std::vector<std::string> generate_char_corpus(const StrokeFont& font, const CharCorpusConfig& cfg,
                                              const std::string& out_dir) {
    const std::string alphabet = kGlyphAlphabet;
    std::vector<std::string> manifests;
    uint64_t sample_counter = 0;

    struct Split {
        const char* name;
        int clean;
        int defective;
        bool training;
    };
    const Split splits[] = {
        {"train", cfg.clean_train, cfg.defects_per_glyph * static_cast<int>(alphabet.size()), true},
        {"val", cfg.val_clean, cfg.val_defective, false},
        {"test", cfg.test_clean, cfg.test_defective, false},
    };

    for (const auto& split : splits) {
        const fs::path dir = fs::path(out_dir) / split.name;
        fs::create_directories(dir);
        const std::string manifest_path = (fs::path(out_dir) / (std::string(split.name) + ".jsonl")).string();
        std::ofstream manifest(manifest_path);
        if (!manifest) throw IoError("cannot write " + manifest_path);

        int idx = 0;
        auto emit = [&](bool defective) {
            const char glyph = defective
                                   ? alphabet[(idx / std::max(1, split.defective / 17)) % alphabet.size()]
                                   : alphabet[idx % alphabet.size()];
            CharSampleSpec spec{glyph, defective, split.training};
            char name[64];
            std::snprintf(name, sizeof(name), "%s/%s_%05d.png", split.name,
                          defective ? "def" : "img", idx);
            char gtname[64];
            std::snprintf(gtname, sizeof(gtname), "%s/%s_gt_%05d.png", split.name,
                          defective ? "def" : "img", idx);
            emit_char_sample(font, spec, cfg.size, Rng::derive(cfg.seed, sample_counter++).next_u64(),
                             out_dir, name, gtname, manifest);
            ++idx;
        };
        for (int i = 0; i < split.clean; ++i) emit(false);
        idx = 0;
        for (int i = 0; i < split.defective; ++i) emit(true);
        manifests.push_back(manifest_path);
    }
    return manifests;
}

namespace {

GtDefectBox transform_box(const Homography& h, const GtDefectBox& b, int img_w, int img_h) {
    double xs[4] = {double(b.x), double(b.x + b.w), double(b.x), double(b.x + b.w)};
    double ys[4] = {double(b.y), double(b.y), double(b.y + b.h), double(b.y + b.h)};
    double minx = 1e18, maxx = -1e18, miny = 1e18, maxy = -1e18;
    for (int i = 0; i < 4; ++i) {
        double ox, oy;
        h.apply(xs[i], ys[i], ox, oy);
        minx = std::min(minx, ox);
        maxx = std::max(maxx, ox);
        miny = std::min(miny, oy);
        maxy = std::max(maxy, oy);
    }
    GtDefectBox out;
    out.x = std::clamp(static_cast<int>(std::floor(minx)), 0, img_w - 1);
    out.y = std::clamp(static_cast<int>(std::floor(miny)), 0, img_h - 1);
    out.w = std::max(1, std::min(img_w - out.x, static_cast<int>(std::ceil(maxx)) - out.x));
    out.h = std::max(1, std::min(img_h - out.y, static_cast<int>(std::ceil(maxy)) - out.y));
    return out;
}

std::string random_string(Rng& rng, size_t len) {
    std::string s;
    for (size_t i = 0; i < len; ++i) s.push_back(kGlyphAlphabet[rng.uniform_int(kGlyphAlphabet.size())]);
    return s;
}

}  // namespace

void generate_plate_corpus(const StrokeFont& font, const PlateCorpusConfig& cfg,
                           const std::string& out_dir) {
    if (cfg.plates < 1) throw std::invalid_argument("generate_plate_corpus: plates must be >= 1");
    fs::create_directories(fs::path(out_dir) / "plates");
    const LayoutSpec layout = default_layout(cfg.width, cfg.height);
    layout.save((fs::path(out_dir) / "layout.json").string());
    write_glyph_atlas(font, (fs::path(out_dir) / "atlas").string());

    // stored reference plate: clean nominal render with its own string content
    Rng ref_rng = Rng::derive(cfg.seed, 0x5EF);
    PlateBlueprint ref_bp;
    ref_bp.layout = layout;
    ref_bp.serial = "REF";
    for (const auto& r : layout.regions)
        if (r.cls == RegionClass::String) ref_bp.strings.push_back(random_string(ref_rng, 12));
    auto ref = render_nameplate(font, ref_bp, {}, ref_rng.next_u64());
    write_png(ref.image, (fs::path(out_dir) / "reference.png").string());

    json mes = json::object();
    std::ofstream gt_out((fs::path(out_dir) / "ground_truth.jsonl").string());
    if (!gt_out) throw IoError("cannot write ground_truth.jsonl");

    const int n_defective = static_cast<int>(std::lround(cfg.plates * cfg.defect_rate));
    int string_region_base = -1;
    for (size_t i = 0; i < layout.regions.size(); ++i)
        if (layout.regions[i].cls == RegionClass::String && string_region_base < 0)
            string_region_base = static_cast<int>(i);
    int logo_region = -1;
    for (size_t i = 0; i < layout.regions.size(); ++i)
        if (layout.regions[i].cls == RegionClass::Logo) logo_region = static_cast<int>(i);

    for (int p = 0; p < cfg.plates; ++p) {
        Rng rng = Rng::derive(cfg.seed, 0x9000 + p);
        char serial[32];
        std::snprintf(serial, sizeof(serial), "PLT-%04d", p + 1);

        PlateBlueprint bp;
        bp.layout = layout;
        bp.serial = serial;
        size_t n_strings = 0;
        for (const auto& r : layout.regions)
            if (r.cls == RegionClass::String) ++n_strings;
        for (size_t s = 0; s < n_strings; ++s) bp.strings.push_back(random_string(rng, 12));

        std::vector<PlateDefectPlan> plan;
        const bool defective = p < n_defective;
        if (defective) {
            PlateDefectPlan d;
            d.recipe.kind = static_cast<DefectKind>(rng.uniform_int(4));
            d.recipe.magnitude = rng.uniform(0.2, 0.45);
            d.recipe.seed = rng.next_u64();
            switch (p % 4) {
                case 0:
                    d.kind = PlateDefectKind::Logo;
                    d.region_idx = logo_region;
                    break;
                case 1:
                    d.kind = PlateDefectKind::CharPrint;
                    d.region_idx = string_region_base + static_cast<int>(rng.uniform_int(n_strings));
                    break;
                case 2:
                    d.kind = PlateDefectKind::StringContent;
                    d.region_idx = string_region_base + static_cast<int>(rng.uniform_int(n_strings));
                    break;
                default:
                    d.kind = PlateDefectKind::MissingString;
                    d.region_idx = string_region_base + static_cast<int>(rng.uniform_int(n_strings));
                    break;
            }
            plan.push_back(d);
        }

        auto render = render_nameplate(font, bp, plan, rng.next_u64());

        // capture geometry: small similarity + corner jitter, content margins
        // are sized so everything stays in frame
        const double angle = rng.uniform(-2.0, 2.0) * M_PI / 180.0;
        const double scale = rng.uniform(0.97, 1.03);
        const double tx = rng.uniform(-10.0, 10.0), ty = rng.uniform(-10.0, 10.0);
        const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
        Homography h_true;
        const double ca = scale * std::cos(angle), sa = scale * std::sin(angle);
        h_true.m = {ca, -sa, cx - ca * cx + sa * cy + tx,
                    sa, ca,  cy - sa * cx - ca * cy + ty,
                    0,  0,   1};

        GrayImage captured = warp_perspective(render.image, h_true, cfg.width, cfg.height);
        const double gamma = cfg.gammas[p % cfg.gammas.size()];
        const double gain = rng.uniform(0.92, 1.08);
        captured = apply_lighting(captured, gain, gamma, 0.06);
        captured = add_noise(captured, cfg.noise_sigma, rng.next_u64());

        char fname[64];
        std::snprintf(fname, sizeof(fname), "plates/%s.png", serial);
        write_png(captured, (fs::path(out_dir) / fname).string());

        // ground truth into the captured frame
        PlateGroundTruth gt = render.gt;
        for (auto& r : gt.regions) {
            const GtDefectBox tb = transform_box(h_true, {r.x, r.y, r.w, r.h}, cfg.width, cfg.height);
            r.x = tb.x;
            r.y = tb.y;
            r.w = tb.w;
            r.h = tb.h;
        }
        for (auto& b : gt.defect_boxes) b = transform_box(h_true, b, cfg.width, cfg.height);

        mes[serial] = {{"strings", bp.strings}};

        json line;
        line["serial"] = gt.serial;
        line["path"] = fname;
        line["label"] = gt.defective ? "defective" : "clean";
        line["defect_kind"] = gt.defect_kind;
        line["expected_failure_stage"] = gt.expected_failure_stage;
        line["gamma"] = gamma;
        line["strings"] = gt.engraved_strings;
        json regs = json::array();
        for (const auto& r : gt.regions)
            regs.push_back({{"class", to_string(r.cls)}, {"bbox", {r.x, r.y, r.w, r.h}}});
        line["regions"] = regs;
        json boxes = json::array();
        for (const auto& b : gt.defect_boxes) boxes.push_back({b.x, b.y, b.w, b.h});
        line["defect_boxes"] = boxes;
        gt_out << line.dump() << "\n";
    }

    std::ofstream mes_out((fs::path(out_dir) / "mes.json").string());
    if (!mes_out) throw IoError("cannot write mes.json");
    mes_out << mes.dump(1) << "\n";
}

}  // namespace plateinspect::synth
