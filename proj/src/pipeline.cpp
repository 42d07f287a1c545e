#include "plateinspect/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "plateinspect/common.hpp"
#include "plateinspect/image_io.hpp"

namespace plateinspect::pipe {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j, const std::string& base_dir) {
    PipelineConfig c;
    auto resolve = [&](const std::string& p) -> std::string {
        if (p.empty() || fs::path(p).is_absolute()) return p;
        return (fs::path(base_dir) / p).string();
    };
    if (j.contains("alignment")) {
        const auto& a = j.at("alignment");
        c.align.work_w = a.value("work_w", c.align.work_w);
        c.align.work_h = a.value("work_h", c.align.work_h);
        c.align.detector.max_keypoints = a.value("max_keypoints", c.align.detector.max_keypoints);
        c.align.ratio = a.value("ratio", c.align.ratio);
        c.align.top_n = a.value("top_n", c.align.top_n);
        c.align.ransac_iters = a.value("ransac_iters", c.align.ransac_iters);
        c.align.reproj_tol = a.value("reproj_tol", c.align.reproj_tol);
        c.align.inlier_floor = a.value("inlier_floor", c.align.inlier_floor);
        c.align.seed = a.value("seed", c.align.seed);
    }
    if (j.contains("detector")) {
        const auto& d = j.at("detector");
        c.detector_provider = d.value("provider", c.detector_provider);
        c.layout_spec_path = resolve(d.value("layout_spec", std::string()));
        c.external_detector_command = d.value("command", std::string());
        c.detector_min_confidence = d.value("min_confidence", c.detector_min_confidence);
        c.profile.valley_frac = d.value("valley_frac", c.profile.valley_frac);
        c.profile.min_row_height = d.value("min_row_height", c.profile.min_row_height);
        c.profile.max_row_height = d.value("max_row_height", c.profile.max_row_height);
    }
    if (j.contains("logocheck")) {
        const auto& l = j.at("logocheck");
        c.logocheck.blur_kernel = l.value("blur_kernel", c.logocheck.blur_kernel);
        c.logocheck.diff_threshold = l.value("diff_threshold", c.logocheck.diff_threshold);
        c.logocheck.morph_structel = l.value("morph_structel", c.logocheck.morph_structel);
        c.logocheck.area_min = l.value("area_min", c.logocheck.area_min);
        c.logocheck.area_max = l.value("area_max", c.logocheck.area_max);
    }
    if (j.contains("ocr")) {
        const auto& o = j.at("ocr");
        c.ocr.bg_kernel = o.value("bg_kernel", c.ocr.bg_kernel);
        c.ocr.bg_sigma = o.value("bg_sigma", c.ocr.bg_sigma);
        c.ocr.close_structel = o.value("close_structel", c.ocr.close_structel);
        c.ocr.pad = o.value("pad", c.ocr.pad);
        c.ocr.min_component_area = o.value("min_component_area", c.ocr.min_component_area);
        c.ocr_backend = o.value("backend", c.ocr_backend);
        c.atlas_dir = resolve(o.value("atlas_dir", std::string()));
        c.external_ocr_command = o.value("command", std::string());
    }
    if (j.contains("anomaly")) {
        const auto& a = j.at("anomaly");
        c.anomaly.thresholds.mask_T = a.value("mask_T", c.anomaly.thresholds.mask_T);
        c.anomaly.thresholds.morph_structel =
            a.value("morph_structel", c.anomaly.thresholds.morph_structel);
        c.anomaly.thresholds.area_min = a.value("area_min", c.anomaly.thresholds.area_min);
        c.anomaly.histogram_equalization =
            a.value("histogram_equalization", c.anomaly.histogram_equalization);
        c.anomaly.reinvert = a.value("reinvert", c.anomaly.reinvert);
    }
    c.model_path = resolve(j.value("model", std::string()));
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open pipeline config " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("bad pipeline config " + path + ": " + e.what());
    }
    PipelineConfig c = from_json(j, fs::path(path).parent_path().string());
    c.validate_files();
    return c;
}

json PipelineConfig::to_json() const {
    json j;
    j["alignment"] = {{"work_w", align.work_w},
                      {"work_h", align.work_h},
                      {"max_keypoints", align.detector.max_keypoints},
                      {"ratio", align.ratio},
                      {"top_n", align.top_n},
                      {"ransac_iters", align.ransac_iters},
                      {"reproj_tol", align.reproj_tol},
                      {"inlier_floor", align.inlier_floor},
                      {"seed", align.seed}};
    j["detector"] = {{"provider", detector_provider},
                     {"layout_spec", layout_spec_path},
                     {"min_confidence", detector_min_confidence}};
    if (!external_detector_command.empty()) j["detector"]["command"] = external_detector_command;
    j["logocheck"] = {{"blur_kernel", logocheck.blur_kernel},
                      {"diff_threshold", logocheck.diff_threshold},
                      {"morph_structel", logocheck.morph_structel},
                      {"area_min", logocheck.area_min},
                      {"area_max", logocheck.area_max}};
    j["ocr"] = {{"bg_kernel", ocr.bg_kernel},
                {"bg_sigma", ocr.bg_sigma},
                {"close_structel", ocr.close_structel},
                {"pad", ocr.pad},
                {"min_component_area", ocr.min_component_area},
                {"backend", ocr_backend},
                {"atlas_dir", atlas_dir}};
    if (!external_ocr_command.empty()) j["ocr"]["command"] = external_ocr_command;
    j["anomaly"] = {{"mask_T", anomaly.thresholds.mask_T},
                    {"morph_structel", anomaly.thresholds.morph_structel},
                    {"area_min", anomaly.thresholds.area_min},
                    {"histogram_equalization", anomaly.histogram_equalization},
                    {"reinvert", anomaly.reinvert}};
    j["model"] = model_path;
    return j;
}

void PipelineConfig::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write pipeline config " + path);
    f << to_json().dump(2) << "\n";
}

void PipelineConfig::validate_files() const {
    if (detector_provider == "layout") {
        if (layout_spec_path.empty() || !fs::exists(layout_spec_path))
            throw ConfigError("pipeline config: layout_spec missing: " + layout_spec_path);
    } else if (detector_provider == "external") {
        if (external_detector_command.empty())
            throw ConfigError("pipeline config: external detector without command");
    } else if (detector_provider != "profile") {
        throw ConfigError("pipeline config: unknown detector provider " + detector_provider);
    }
    if (ocr_backend == "template") {
        if (atlas_dir.empty() || !fs::exists(atlas_dir))
            throw ConfigError("pipeline config: atlas_dir missing: " + atlas_dir);
    } else if (ocr_backend == "external") {
        if (external_ocr_command.empty())
            throw ConfigError("pipeline config: external OCR without command");
    } else {
        throw ConfigError("pipeline config: unknown OCR backend " + ocr_backend);
    }
    if (!model_path.empty() && !fs::exists(model_path))
        throw ConfigError("pipeline config: model file missing: " + model_path);
    logocheck.validate();
    anomaly.thresholds.validate();
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Acceptable: return "acceptable";
        case Verdict::Defective: return "defective";
        case Verdict::DefectiveUnverifiable: return "defective_unverifiable";
    }
    return "defective_unverifiable";
}

json InspectionReport::to_json(bool include_timings) const {
    json j;
    j["report_version"] = report_version;
    j["serial"] = serial;
    j["verdict"] = to_string(verdict);
    if (failed_stage) j["failed_stage"] = *failed_stage;
    json diag;
    if (alignment) {
        diag["alignment"] = {{"keypoints_reference", alignment->keypoints_reference},
                             {"keypoints_captured", alignment->keypoints_captured},
                             {"raw_matches", alignment->raw_matches},
                             {"retained_matches", alignment->retained_matches},
                             {"inliers", alignment->inliers},
                             {"inlier_ratio", alignment->inlier_ratio},
                             {"mean_reproj_error", alignment->mean_reproj_error}};
    }
    if (logo_regions_checked) diag["logo"] = {{"regions_checked", *logo_regions_checked}};
    if (wer) {
        diag["ocr"] = {{"wer", *wer}, {"cer", *cer}};
        json arr = json::array();
        for (const auto& s : strings)
            arr.push_back({{"expected", s.verification.expected},
                           {"recognized", s.verification.recognized},
                           {"edit_distance", s.verification.edit_distance},
                           {"match", s.verification.match},
                           {"confidence", s.per_char_confidence}});
        diag["ocr"]["strings"] = arr;
    }
    if (chars_checked) diag["char_anomaly"] = {{"chars_checked", *chars_checked}};
    j["diagnostics"] = diag;
    json defs = json::array();
    for (const auto& d : defects)
        defs.push_back(
            {{"bbox", {d.x, d.y, d.w, d.h}}, {"area", d.area}, {"source", d.source}});
    j["defects"] = defs;
    if (include_timings) {
        json t;
        for (const auto& [stage, ms] : timings_ms) t[stage] = ms;
        j["timings_ms"] = t;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Inspector
// ---------------------------------------------------------------------------

Inspector::Inspector(const PipelineConfig& cfg) : cfg_(cfg) {
    cfg_.validate_files();
    if (cfg_.detector_provider == "layout")
        provider_ = LayoutProvider{LayoutSpec::load(cfg_.layout_spec_path)};
    else if (cfg_.detector_provider == "profile")
        provider_ = cfg_.profile;
    else
        provider_ = ExternalProvider{cfg_.external_detector_command};

    if (cfg_.ocr_backend == "template")
        ocr_backend_ = TemplateBackend{GlyphAtlas::load(cfg_.atlas_dir)};
    else
        ocr_backend_ = ExternalOcrBackend{cfg_.external_ocr_command};

    if (!cfg_.model_path.empty()) {
        model_ = vae::load_model(cfg_.model_path).model;
        has_model_ = true;
    }
}

namespace {

// Map a region's corners through H, take the enclosing axis-aligned box.
Region map_region(const Region& r, const Homography& h, int img_w, int img_h) {
    const double xs[4] = {double(r.x), double(r.x + r.w), double(r.x), double(r.x + r.w)};
    const double ys[4] = {double(r.y), double(r.y), double(r.y + r.h), double(r.y + r.h)};
    double minx = 1e18, maxx = -1e18, miny = 1e18, maxy = -1e18;
    for (int i = 0; i < 4; ++i) {
        double ox, oy;
        h.apply(xs[i], ys[i], ox, oy);
        minx = std::min(minx, ox);
        maxx = std::max(maxx, ox);
        miny = std::min(miny, oy);
        maxy = std::max(maxy, oy);
    }
    Region out = r;
    out.x = std::clamp(static_cast<int>(std::floor(minx)), 0, img_w - 1);
    out.y = std::clamp(static_cast<int>(std::floor(miny)), 0, img_h - 1);
    out.w = std::max(1, std::min(img_w - out.x, static_cast<int>(std::ceil(maxx)) - out.x));
    out.h = std::max(1, std::min(img_h - out.y, static_cast<int>(std::ceil(maxy)) - out.y));
    return out;
}

GrayImage equalize_histogram(const GrayImage& img) {
    long hist[256] = {0};
    for (uint8_t v : img.data) ++hist[v];
    long cdf[256];
    long running = 0;
    for (int i = 0; i < 256; ++i) {
        running += hist[i];
        cdf[i] = running;
    }
    long cdf_min = 0;
    for (int i = 0; i < 256; ++i)
        if (hist[i]) {
            cdf_min = cdf[i];
            break;
        }
    const double denom = std::max<long>(1, static_cast<long>(img.size()) - cdf_min);
    GrayImage out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i)
        out.data[i] =
            static_cast<uint8_t>(std::lround(255.0 * (cdf[img.data[i]] - cdf_min) / denom));
    return out;
}

struct StageTimer {
    InspectionReport& report;
    const char* name;
    Clock::time_point start = Clock::now();
    StageTimer(InspectionReport& r, const char* n) : report(r), name(n) {}
    ~StageTimer() {
        const double ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(Clock::now() -
                                                                                  start)
                .count();
        report.timings_ms.emplace_back(name, ms);
    }
};

}  // namespace

InspectionReport Inspector::inspect(const GrayImage& captured, const GrayImage& reference,
                                    const std::vector<std::string>& expected_strings,
                                    const std::string& serial) const {
    if (captured.empty() || reference.empty())
        throw IoError("inspect: empty captured or reference image");
    InspectionReport report;
    report.serial = serial;

    // stage 1: alignment
    AlignResult aligned;
    {
        StageTimer t(report, "alignment");
        try {
            aligned = align_reference(reference, captured, cfg_.align);
        } catch (const AlignmentError&) {
            report.verdict = Verdict::DefectiveUnverifiable;
            report.failed_stage = "alignment";
            return report;
        }
        report.alignment = aligned.diag;
    }

    // stage 2: region detection on the aligned reference
    std::vector<Region> regions;
    {
        StageTimer t(report, "detect_regions");
        if (std::holds_alternative<LayoutProvider>(provider_)) {
            // layout boxes live in reference coordinates; map them through H
            for (const auto& r : detect_regions(reference, provider_))
                regions.push_back(map_region(r, aligned.h, captured.width, captured.height));
        } else {
            regions = detect_regions(aligned.aligned, provider_);
        }
        std::erase_if(regions,
                      [&](const Region& r) { return r.confidence < cfg_.detector_min_confidence; });
    }

    // stage 3: logo comparison (reference crop vs captured crop)
    {
        StageTimer t(report, "logo");
        int checked = 0;
        std::vector<Region> logo_regions;
        for (const auto& r : regions)
            if (r.cls == RegionClass::Logo) logo_regions.push_back(r);
        for (const auto& r : logo_regions) {
            const auto ref_crop = crop_regions(aligned.aligned, {r});
            const auto cap_crop = crop_regions(captured, {r});
            const auto res =
                compare_logos(ref_crop[0].second, cap_crop[0].second, cfg_.logocheck);
            ++checked;
            for (const auto& d : res.defects)
                report.defects.push_back(
                    {d.x + r.x, d.y + r.y, d.w, d.h, d.area, "logo"});
            if (!res.ok) {
                report.logo_regions_checked = checked;
                report.verdict = Verdict::Defective;
                report.failed_stage = "logo";
                return report;
            }
        }
        report.logo_regions_checked = checked;
    }

    // stage 4: OCR + MES verification
    std::vector<Region> string_regions;
    for (const auto& r : regions)
        if (r.cls == RegionClass::String) string_regions.push_back(r);
    std::vector<RecognizedString> recognized;
    std::vector<std::vector<GrayImage>> char_crops_per_string(string_regions.size());
    {
        StageTimer t(report, "ocr");
        for (size_t si = 0; si < string_regions.size(); ++si) {
            const auto& r = string_regions[si];
            const auto crop = crop_regions(captured, {r})[0].second;
            const BinaryImage ink = preprocess_string_region(crop, cfg_.ocr);
            const auto boxes = segment_characters(ink, cfg_.ocr.pad, cfg_.ocr.min_component_area);
            std::vector<GrayImage> chars;
            for (const auto& cb : boxes)
                chars.push_back(crop_regions(crop, {{RegionClass::String, cb.x, cb.y, cb.w, cb.h,
                                                     1.0}})[0]
                                    .second);
            RecognizedString rs = recognize_characters(chars, ocr_backend_);
            rs.char_boxes = boxes;
            char_crops_per_string[si] = std::move(chars);
            recognized.push_back(std::move(rs));
        }

        VerificationSummary summary;
        try {
            summary = verify_strings(recognized, expected_strings);
        } catch (const std::invalid_argument&) {
            report.verdict = Verdict::DefectiveUnverifiable;
            report.failed_stage = "string_match";
            return report;
        }
        report.wer = summary.wer;
        report.cer = summary.cer;
        for (size_t i = 0; i < summary.results.size(); ++i)
            report.strings.push_back({summary.results[i], recognized[i].per_char_confidence});
        if (!summary.all_match) {
            report.verdict = Verdict::Defective;
            report.failed_stage = "string_match";
            return report;
        }
    }

    // stage 5: per-character ResVAE anomaly check
    {
        StageTimer t(report, "char_anomaly");
        if (!has_model_) throw ConfigError("inspect: char-anomaly stage requires a model file");
        int checked = 0;
        bool any_defect = false;
        for (size_t si = 0; si < string_regions.size(); ++si) {
            auto& chars = char_crops_per_string[si];
            if (chars.empty()) continue;
            if (cfg_.anomaly.histogram_equalization)
                for (auto& c : chars) c = equalize_histogram(c);
            const vae::Tensor4f x = vae::preprocess_chars(chars, model_.arch.input_size,
                                                     cfg_.anomaly.reinvert);
            const vae::Tensor4f xhat = model_.reconstruct(x);
            for (int ci = 0; ci < x.n; ++ci) {
                ++checked;
                const BinaryImage mask =
                    anomaly::anomaly_mask(x, xhat, cfg_.anomaly.thresholds.mask_T, ci);
                const auto loc = anomaly::localize_defects(mask, cfg_.anomaly.thresholds);
                if (loc.ok) continue;
                any_defect = true;
                // map 64x64 boxes back through the char crop to the plate
                const auto& cb = recognized[si].char_boxes[ci];
                const auto& sr = string_regions[si];
                const double sx = static_cast<double>(cb.w) / model_.arch.input_size;
                const double sy = static_cast<double>(cb.h) / model_.arch.input_size;
                for (const auto& d : loc.defects) {
                    PlateDefect pd;
                    pd.x = sr.x + cb.x + static_cast<int>(std::floor(d.x * sx));
                    pd.y = sr.y + cb.y + static_cast<int>(std::floor(d.y * sy));
                    pd.w = std::max(1, static_cast<int>(std::ceil(d.w * sx)));
                    pd.h = std::max(1, static_cast<int>(std::ceil(d.h * sy)));
                    pd.area = d.area;
                    pd.source = "character";
                    report.defects.push_back(pd);
                }
            }
        }
        report.chars_checked = checked;
        if (any_defect) {
            report.verdict = Verdict::Defective;
            report.failed_stage = "char_anomaly";
            return report;
        }
    }

    report.verdict = Verdict::Acceptable;
    return report;
}

GrayImage annotate(const InspectionReport& report, const GrayImage& captured, json* sidecar) {
    GrayImage out = captured;
    for (const auto& d : report.defects) {
        const int x0 = std::clamp(d.x, 0, out.width - 1);
        const int y0 = std::clamp(d.y, 0, out.height - 1);
        const int x1 = std::clamp(d.x + d.w - 1, 0, out.width - 1);
        const int y1 = std::clamp(d.y + d.h - 1, 0, out.height - 1);
        for (int b = 0; b < 2; ++b) {  // 2-px border
            for (int x = std::max(0, x0 - b); x <= std::min(out.width - 1, x1 + b); ++x) {
                if (y0 - b >= 0) out.at(x, y0 - b) = 255;
                if (y1 + b < out.height) out.at(x, y1 + b) = 255;
            }
            for (int y = std::max(0, y0 - b); y <= std::min(out.height - 1, y1 + b); ++y) {
                if (x0 - b >= 0) out.at(x0 - b, y) = 255;
                if (x1 + b < out.width) out.at(x1 + b, y) = 255;
            }
        }
    }
    if (sidecar) {
        json defs = json::array();
        for (const auto& d : report.defects)
            defs.push_back(
                {{"bbox", {d.x, d.y, d.w, d.h}}, {"area", d.area}, {"source", d.source}});
        *sidecar = defs;
    }
    return out;
}

std::vector<std::string> load_mes_strings(const std::string& path, const std::string& serial) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open MES file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw IoError("bad MES file " + path + ": " + e.what());
    }
    if (!j.contains(serial)) throw ConfigError("MES file has no record for serial " + serial);
    return j.at(serial).at("strings").get<std::vector<std::string>>();
}

}  // namespace plateinspect::pipe
