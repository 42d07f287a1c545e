#pragma once

#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plateinspect/align.hpp"
#include "plateinspect/anomaly.hpp"
#include "plateinspect/logocheck.hpp"
#include "plateinspect/ocr.hpp"
#include "plateinspect/regions.hpp"
#include "plateinspect/resvae.hpp"

namespace plateinspect::pipe {

struct AnomalyStageConfig {
    anomaly::AnomalyThresholds thresholds;
    bool histogram_equalization = false;  // optional brightness-robustness pre-step
    bool reinvert = false;                // capture path optically inverts
};

struct PipelineConfig {
    AlignConfig align;

    std::string detector_provider = "layout";  // layout | profile | external
    std::string layout_spec_path;
    ProfileProvider profile;
    std::string external_detector_command;
    double detector_min_confidence = 0.5;

    LogoCheckConfig logocheck;

    OcrConfig ocr;
    std::string ocr_backend = "template";  // template | external
    std::string atlas_dir;
    std::string external_ocr_command;

    AnomalyStageConfig anomaly;
    std::string model_path;

    static PipelineConfig load(const std::string& path);
    static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir);
    nlohmann::json to_json() const;
    void save(const std::string& path) const;
    // Referenced files must exist before any image is processed.
    void validate_files() const;
};

enum class Verdict { Acceptable, Defective, DefectiveUnverifiable };
const char* to_string(Verdict v);

struct PlateDefect {
    int x = 0, y = 0, w = 0, h = 0;  // captured-plate coordinates
    long area = 0;
    std::string source;  // "logo" | "character"
};

struct StringDiagnostics {
    StringVerification verification;
    std::vector<double> per_char_confidence;
};

struct InspectionReport {
    int report_version = 1;
    std::string serial;
    Verdict verdict = Verdict::Acceptable;
    std::optional<std::string> failed_stage;  // alignment|logo|string_match|char_anomaly

    // per-stage diagnostics; absent stages did not run (early exit)
    std::optional<AlignDiagnostics> alignment;
    std::optional<int> logo_regions_checked;
    std::vector<PlateDefect> defects;
    std::optional<double> wer, cer;
    std::vector<StringDiagnostics> strings;
    std::optional<int> chars_checked;

    std::vector<std::pair<std::string, double>> timings_ms;

    nlohmann::json to_json(bool include_timings = true) const;
};

// Loaded, immutable pipeline state shared across inspections.
class Inspector {
public:
    explicit Inspector(const PipelineConfig& cfg);

    // Algorithm-1 decision flow with early exits; expected strings come from
    // the MES record for this serial.
    InspectionReport inspect(const GrayImage& captured, const GrayImage& reference,
                             const std::vector<std::string>& expected_strings,
                             const std::string& serial = "") const;

    const PipelineConfig& config() const { return cfg_; }

private:
    PipelineConfig cfg_;
    RegionProvider provider_;
    OcrBackend ocr_backend_;
    mutable vae::ResVaeModel model_;  // inference-only after load
    bool has_model_ = false;
};

// Overlay with max-intensity 2-px rectangles per defect plus a sidecar JSON
// mirroring the report's defect list.
GrayImage annotate(const InspectionReport& report, const GrayImage& captured,
                   nlohmann::json* sidecar = nullptr);

// MES lookup file: {"<serial>": {"strings": [...]}}.
std::vector<std::string> load_mes_strings(const std::string& path, const std::string& serial);

}  // namespace plateinspect::pipe
