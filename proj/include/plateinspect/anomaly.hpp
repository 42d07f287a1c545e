#pragma once

#include <string>
#include <vector>

#include "plateinspect/image.hpp"
#include "plateinspect/logocheck.hpp"
#include "plateinspect/metrics.hpp"
#include "plateinspect/resvae.hpp"

namespace plateinspect::anomaly {

using vae::ResVaeModel;
using vae::Tensor4f;

struct AnomalyThresholds {
    double mask_T = 0.25;    // per-pixel |x - xhat| threshold on [-1,1] data
    int morph_structel = 3;
    long area_min = 10;      // components with area >= area_min are defects

    void validate() const;
};

// Traditional method score: MSE(x, decode(encode(x).mu)). Higher = more
// anomalous.
double score_traditional(ResVaeModel& model, const Tensor4f& chars, std::vector<double>* out =
                                                                        nullptr);

struct RocSelection {
    double threshold = 0.0;  // smallest threshold with TPR = 1 (min defective score)
    double auc = 0.0;
    std::vector<RocPoint> curve;
};

// Recall-first operating point: AUC by trapezoid over the exact curve, the
// chosen threshold classifies every defective sample positive.
RocSelection select_threshold_roc(const std::vector<double>& scores,
                                  const std::vector<bool>& labels);

// Eq.-9 mask on channel 0 (channels are replicas): true iff |x - xhat| > T.
BinaryImage anomaly_mask(const Tensor4f& x, const Tensor4f& xhat, double T, int sample = 0);

struct LocalizeResult {
    bool ok = true;
    std::vector<DefectBox> defects;  // character-frame coordinates
};

// Morphological opening, connected components, area test.
LocalizeResult localize_defects(const BinaryImage& mask, const AnomalyThresholds& th);

struct AnomalyTuneRow {
    double mask_T = 0.0;
    long area_min = 0;
    ConfusionCounts counts;
    ClassificationMetrics metrics;
};

struct AnomalyTuneResult {
    AnomalyThresholds best;
    bool constraint_met = false;  // recall == 1 reached by some candidate
    std::vector<AnomalyTuneRow> table;
};

struct ValChar {
    GrayImage image;
    bool defective = false;
};

// Grid search over (mask_T, area_min): among candidates with recall = 1 pick
// max F1 (ties: higher precision, smaller mask_T, smaller area_min); if the
// recall constraint is unmet, returns the recall-maximizing candidate
// flagged constraint_met = false. Reconstructions are computed once.
AnomalyTuneResult grid_search_thresholds(ResVaeModel& model, const std::vector<ValChar>& val_set,
                                         const std::vector<double>& mask_T_grid,
                                         const std::vector<long>& area_min_grid,
                                         int morph_structel = 3);

// CSV: mask_T,area_min,tp,fp,fn,tn,precision,recall,f1
std::string anomaly_tune_csv(const AnomalyTuneResult& result);

}  // namespace plateinspect::anomaly
