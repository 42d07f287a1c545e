#include "plateinspect/logocheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace plateinspect {

void LogoCheckConfig::validate() const {
    if (blur_kernel < 1 || blur_kernel % 2 == 0)
        throw std::invalid_argument("logocheck: blur_kernel must be odd");
    if (diff_threshold < 1 || diff_threshold > 254)
        throw std::invalid_argument("logocheck: diff_threshold must be in [1,254]");
    if (morph_structel < 1 || morph_structel % 2 == 0)
        throw std::invalid_argument("logocheck: morph_structel must be odd");
    if (area_min >= area_max) throw std::invalid_argument("logocheck: area_min must be < area_max");
}

namespace {

// Everything before the area filter; tune_area_threshold reuses this so each
// sample is processed once per grid search.
std::vector<ComponentStats> diff_components(const GrayImage& ref_logo, const GrayImage& cap_logo,
                                            const LogoCheckConfig& cfg) {
    GrayImage cap = cap_logo;
    if (!ref_logo.same_size(cap)) {
        const double dw = std::abs(cap.width - ref_logo.width) / double(ref_logo.width);
        const double dh = std::abs(cap.height - ref_logo.height) / double(ref_logo.height);
        if (dw > 0.05 || dh > 0.05)
            throw std::invalid_argument("compare_logos: crop sizes differ by more than 5%");
        cap = resize(cap, ref_logo.width, ref_logo.height, ResizeMode::Bilinear);
    }
    const double sigma = cfg.blur_kernel / 6.0;
    const GrayImage ref_s = gaussian_blur(ref_logo, cfg.blur_kernel, sigma);
    const GrayImage cap_s = gaussian_blur(cap, cfg.blur_kernel, sigma);
    const GrayImage diff = abs_diff(ref_s, cap_s);
    const BinaryImage mask = threshold_binary(diff, cfg.diff_threshold);
    const BinaryImage opened = morphology(mask, MorphOp::Open, cfg.morph_structel);
    return connected_components(opened, 8);
}

}  // namespace

LogoCheckResult compare_logos(const GrayImage& ref_logo, const GrayImage& cap_logo,
                              const LogoCheckConfig& cfg) {
    cfg.validate();
    LogoCheckResult res;
    for (const auto& c : diff_components(ref_logo, cap_logo, cfg)) {
        if (c.area < cfg.area_min || c.area > cfg.area_max) continue;
        res.defects.push_back({c.x, c.y, c.w, c.h, c.area, DefectSource::Logo});
    }
    res.ok = res.defects.empty();
    return res;
}

LogoTuneResult tune_area_threshold(const std::vector<LogoSample>& samples,
                                   const std::vector<long>& grid, const LogoCheckConfig& base) {
    if (grid.empty()) throw std::invalid_argument("tune_area_threshold: empty grid");
    bool has_pos = false, has_neg = false;
    for (const auto& s : samples) (s.defective ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw std::invalid_argument("tune_area_threshold: both labels must be present");

    // component areas per sample are independent of area_min
    std::vector<std::vector<long>> areas(samples.size());
    for (size_t i = 0; i < samples.size(); ++i)
        for (const auto& c : diff_components(samples[i].ref, samples[i].cap, base))
            areas[i].push_back(c.area);

    LogoTuneResult result;
    for (long amin : grid) {
        LogoTuneRow row;
        row.area_min = amin;
        for (size_t i = 0; i < samples.size(); ++i) {
            const bool predicted = std::any_of(areas[i].begin(), areas[i].end(), [&](long a) {
                return a >= amin && a <= base.area_max;
            });
            if (predicted && samples[i].defective) ++row.counts.tp;
            else if (predicted) ++row.counts.fp;
            else if (samples[i].defective) ++row.counts.fn;
            else ++row.counts.tn;
        }
        row.metrics = classification_metrics(row.counts);
        result.table.push_back(row);
    }

    const LogoTuneRow* best = nullptr;
    for (const auto& row : result.table) {
        if (!best) {
            best = &row;
            continue;
        }
        const double f1 = row.metrics.f1.value_or(-1.0);
        const double bf1 = best->metrics.f1.value_or(-1.0);
        if (f1 != bf1) {
            if (f1 > bf1) best = &row;
            continue;
        }
        const double rec = row.metrics.recall.value_or(-1.0);
        const double brec = best->metrics.recall.value_or(-1.0);
        if (rec != brec) {
            if (rec > brec) best = &row;
            continue;
        }
        if (row.area_min < best->area_min) best = &row;
    }
    result.best_area_min = best->area_min;
    return result;
}

std::string logo_tune_csv(const LogoTuneResult& result) {
    std::ostringstream os;
    os << "candidate,tp,fp,fn,tn,accuracy,precision,recall,f1\n";
    auto cell = [](const std::optional<double>& v) {
        return v ? std::to_string(*v) : std::string("");
    };
    for (const auto& row : result.table) {
        os << row.area_min << "," << row.counts.tp << "," << row.counts.fp << "," << row.counts.fn
           << "," << row.counts.tn << "," << row.metrics.accuracy << "," << cell(row.metrics.precision)
           << "," << cell(row.metrics.recall) << "," << cell(row.metrics.f1) << "\n";
    }
    return os.str();
}

}  // namespace plateinspect
