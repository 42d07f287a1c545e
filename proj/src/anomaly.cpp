#include "plateinspect/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace plateinspect::anomaly {

void AnomalyThresholds::validate() const {
    if (mask_T <= 0.0) throw std::invalid_argument("anomaly: mask_T must be > 0");
    if (morph_structel < 1 || morph_structel % 2 == 0)
        throw std::invalid_argument("anomaly: morph_structel must be odd");
    if (area_min < 1) throw std::invalid_argument("anomaly: area_min must be >= 1");
}

double score_traditional(ResVaeModel& model, const Tensor4f& chars, std::vector<double>* out) {
    Tensor4f xhat = model.reconstruct(chars);
    double last = 0.0;
    if (out) out->clear();
    const size_t ss = chars.sample_size();
    for (int s = 0; s < chars.n; ++s) {
        double total = 0.0;
        const float* a = chars.sample(s);
        const float* b = xhat.sample(s);
        for (size_t i = 0; i < ss; ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            total += d * d;
        }
        last = total / ss;
        if (out) out->push_back(last);
    }
    return last;
}

RocSelection select_threshold_roc(const std::vector<double>& scores,
                                  const std::vector<bool>& labels) {
    RocSelection sel;
    sel.curve = roc_curve(scores, labels);  // validates both classes present
    sel.auc = roc_auc(scores, labels);
    double min_def = std::numeric_limits<double>::max();
    for (size_t i = 0; i < scores.size(); ++i)
        if (labels[i]) min_def = std::min(min_def, scores[i]);
    sel.threshold = min_def;  // score >= threshold classifies defective, TPR = 1
    return sel;
}

BinaryImage anomaly_mask(const Tensor4f& x, const Tensor4f& xhat, double T, int sample) {
    if (!x.same_shape(xhat)) throw std::invalid_argument("anomaly_mask: shape mismatch");
    if (T <= 0.0) throw std::invalid_argument("anomaly_mask: T must be > 0");
    if (sample < 0 || sample >= x.n) throw std::invalid_argument("anomaly_mask: bad sample index");
    BinaryImage mask(x.w, x.h);
    const float* a = x.sample(sample);      // channel 0
    const float* b = xhat.sample(sample);
    for (size_t i = 0; i < mask.size(); ++i)
        mask.data[i] = std::abs(static_cast<double>(a[i]) - b[i]) > T ? 1 : 0;
    return mask;
}

LocalizeResult localize_defects(const BinaryImage& mask, const AnomalyThresholds& th) {
    th.validate();
    LocalizeResult res;
    const BinaryImage opened = morphology(mask, MorphOp::Open, th.morph_structel);
    for (const auto& c : connected_components(opened, 8)) {
        if (c.area < th.area_min) continue;
        res.defects.push_back({c.x, c.y, c.w, c.h, c.area, DefectSource::Character});
    }
    res.ok = res.defects.empty();
    return res;
}

AnomalyTuneResult grid_search_thresholds(ResVaeModel& model, const std::vector<ValChar>& val_set,
                                         const std::vector<double>& mask_T_grid,
                                         const std::vector<long>& area_min_grid,
                                         int morph_structel) {
    if (mask_T_grid.empty() || area_min_grid.empty())
        throw std::invalid_argument("grid_search_thresholds: empty grid");
    bool has_pos = false, has_neg = false;
    for (const auto& v : val_set) (v.defective ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw std::invalid_argument("grid_search_thresholds: both classes must be present");

    // reconstruct every sample once, in batches
    const int input_size = model.arch.input_size;
    std::vector<Tensor4f> xs, xhats;
    constexpr int kBatch = 64;
    for (size_t b0 = 0; b0 < val_set.size(); b0 += kBatch) {
        const size_t bn = std::min<size_t>(kBatch, val_set.size() - b0);
        std::vector<GrayImage> crops;
        for (size_t i = b0; i < b0 + bn; ++i) crops.push_back(val_set[i].image);
        Tensor4f x = vae::preprocess_chars(crops, input_size);
        xhats.push_back(model.reconstruct(x));
        xs.push_back(std::move(x));
    }

    AnomalyTuneResult result;
    AnomalyThresholds th;
    th.morph_structel = morph_structel;

    for (double T : mask_T_grid) {
        // component areas per sample depend on T but not area_min
        std::vector<std::vector<long>> areas(val_set.size());
        size_t si = 0;
        for (size_t chunk = 0; chunk < xs.size(); ++chunk) {
            for (int s = 0; s < xs[chunk].n; ++s, ++si) {
                const BinaryImage mask = anomaly_mask(xs[chunk], xhats[chunk], T, s);
                const BinaryImage opened = morphology(mask, MorphOp::Open, morph_structel);
                for (const auto& c : connected_components(opened, 8)) areas[si].push_back(c.area);
            }
        }
        for (long amin : area_min_grid) {
            AnomalyTuneRow row;
            row.mask_T = T;
            row.area_min = amin;
            for (size_t i = 0; i < val_set.size(); ++i) {
                const bool predicted =
                    std::any_of(areas[i].begin(), areas[i].end(), [&](long a) { return a >= amin; });
                if (predicted && val_set[i].defective) ++row.counts.tp;
                else if (predicted) ++row.counts.fp;
                else if (val_set[i].defective) ++row.counts.fn;
                else ++row.counts.tn;
            }
            row.metrics = classification_metrics(row.counts);
            result.table.push_back(row);
        }
    }

    // selection: recall-1 candidates by F1, then precision, then smaller
    // mask_T, then smaller area_min; otherwise max recall
    const AnomalyTuneRow* best = nullptr;
    auto better = [](const AnomalyTuneRow& a, const AnomalyTuneRow& b) {
        const double f1a = a.metrics.f1.value_or(-1), f1b = b.metrics.f1.value_or(-1);
        if (f1a != f1b) return f1a > f1b;
        const double pa = a.metrics.precision.value_or(-1), pb = b.metrics.precision.value_or(-1);
        if (pa != pb) return pa > pb;
        if (a.mask_T != b.mask_T) return a.mask_T < b.mask_T;
        return a.area_min < b.area_min;
    };
    for (const auto& row : result.table) {
        if (row.metrics.recall.value_or(0.0) < 1.0) continue;
        if (!best || better(row, *best)) best = &row;
    }
    result.constraint_met = best != nullptr;
    if (!best) {
        for (const auto& row : result.table) {
            if (!best) {
                best = &row;
                continue;
            }
            const double ra = row.metrics.recall.value_or(-1),
                         rb = best->metrics.recall.value_or(-1);
            if (ra > rb || (ra == rb && better(row, *best))) best = &row;
        }
    }
    result.best.mask_T = best->mask_T;
    result.best.area_min = best->area_min;
    result.best.morph_structel = morph_structel;
    return result;
}

std::string anomaly_tune_csv(const AnomalyTuneResult& result) {
    std::ostringstream os;
    os << "mask_T,area_min,tp,fp,fn,tn,precision,recall,f1\n";
    auto cell = [](const std::optional<double>& v) {
        return v ? std::to_string(*v) : std::string("");
    };
    for (const auto& r : result.table)
        os << r.mask_T << "," << r.area_min << "," << r.counts.tp << "," << r.counts.fp << ","
           << r.counts.fn << "," << r.counts.tn << "," << cell(r.metrics.precision) << ","
           << cell(r.metrics.recall) << "," << cell(r.metrics.f1) << "\n";
    return os.str();
}

}  // namespace plateinspect::anomaly
