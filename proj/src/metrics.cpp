#include "plateinspect/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace plateinspect {

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
    if (c.total() < 1) throw std::invalid_argument("classification_metrics: empty counts");
    ClassificationMetrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    return m;
}

static void check_two_classes(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc: scores/labels size mismatch or empty");
    const long pos = std::count(labels.begin(), labels.end(), true);
    if (pos == 0 || pos == static_cast<long>(labels.size()))
        throw std::invalid_argument("roc: both classes must be present");
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<bool>& labels) {
    check_two_classes(scores, labels);
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    const double npos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
    const double nneg = static_cast<double>(n) - npos;

    std::vector<RocPoint> curve;
    curve.push_back({scores[order[0]] + 1.0, 0.0, 0.0});
    long tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        const double s = scores[order[i]];
        // consume the whole tie group before emitting a point
        while (i < n && scores[order[i]] == s) {
            if (labels[order[i]]) ++tp;
            else ++fp;
            ++i;
        }
        curve.push_back({s, tp / npos, fp / nneg});
    }
    return curve;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    const auto curve = roc_curve(scores, labels);
    double auc = 0.0;
    for (size_t i = 1; i < curve.size(); ++i) {
        const double dx = curve[i].fpr - curve[i - 1].fpr;
        auc += dx * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
    }
    return auc;
}

}  // namespace plateinspect
