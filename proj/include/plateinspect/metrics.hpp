#pragma once

#include <optional>
#include <vector>

namespace plateinspect {

// Positive class = defective throughout, so recall is the fraction of
// defective samples caught.
struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;
    long total() const { return tp + fp + fn + tn; }
};

// Undefined ratios (0/0) stay empty rather than collapsing to 0 or 1.
struct ClassificationMetrics {
    double accuracy = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

ClassificationMetrics classification_metrics(const ConfusionCounts& c);

struct RocPoint {
    double threshold;
    double tpr;
    double fpr;
};

// Exact score-induced ROC curve; classifier is score >= threshold.
// Points are ordered from the strictest threshold (fpr 0) to the loosest.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<bool>& labels);

// Trapezoidal AUC with tie grouping; equals Mann-Whitney U / (n+ * n-).
// Throws std::invalid_argument when a class is missing.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

}  // namespace plateinspect
