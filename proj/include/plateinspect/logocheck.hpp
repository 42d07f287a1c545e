#pragma once

#include <string>
#include <vector>

#include "plateinspect/image.hpp"
#include "plateinspect/metrics.hpp"

namespace plateinspect {

struct LogoCheckConfig {
    int blur_kernel = 5;
    int diff_threshold = 40;   // intensity, applied to |ref - cap|
    int morph_structel = 3;
    long area_min = 30;        // retained component area range, px^2
    long area_max = 10000;

    void validate() const;
};

enum class DefectSource { Logo, Character };

struct DefectBox {
    int x = 0, y = 0, w = 0, h = 0;
    long area = 0;
    DefectSource source = DefectSource::Logo;
};

struct LogoCheckResult {
    bool ok = true;
    std::vector<DefectBox> defects;  // cap_logo coordinates
};

// Difference pipeline: blur both crops, abs-diff, threshold, morphological
// opening, connected components, area-range filter. Crops within 5% size
// mismatch are resized to match; larger mismatches are an error.
LogoCheckResult compare_logos(const GrayImage& ref_logo, const GrayImage& cap_logo,
                              const LogoCheckConfig& cfg);

struct LogoSample {
    GrayImage ref;
    GrayImage cap;
    bool defective = false;  // ground-truth label
};

struct LogoTuneRow {
    long area_min = 0;
    ConfusionCounts counts;
    ClassificationMetrics metrics;
};

struct LogoTuneResult {
    long best_area_min = 0;
    std::vector<LogoTuneRow> table;
};

// Grid search over area_min candidates, maximizing F1 with ties broken by
// higher recall then smaller area_min. Needs both labels present.
LogoTuneResult tune_area_threshold(const std::vector<LogoSample>& samples,
                                   const std::vector<long>& grid, const LogoCheckConfig& base);

// CSV: candidate,tp,fp,fn,tn,accuracy,precision,recall,f1
std::string logo_tune_csv(const LogoTuneResult& result);

}  // namespace plateinspect
