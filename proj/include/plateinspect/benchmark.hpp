#pragma once

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "plateinspect/metrics.hpp"
#include "plateinspect/pipeline.hpp"

namespace plateinspect::eval {

struct PlateResult {
    std::string serial;
    bool gt_defective = false;
    std::string gt_kind;
    std::string verdict;
    std::string failed_stage;  // empty when none
    bool correct = false;
    double total_ms = 0.0;
};

struct BenchmarkReport {
    ConfusionCounts overall;
    ClassificationMetrics metrics;
    // failed_stage -> count of false positives attributed to that stage
    std::map<std::string, long> fp_by_stage;
    long operational_failures = 0;
    std::map<std::string, std::pair<double, double>> stage_timings_ms;  // stage -> (p50, p95)
    std::vector<PlateResult> plates;
    uint64_t corpus_hash = 0;

    nlohmann::json to_json(bool include_timings = true) const;
    std::string to_csv() const;
};

// Runs inspect over every plate in a generated corpus directory
// (ground_truth.jsonl + reference.png + mes.json + plates/). Corrupt samples
// are recorded as operational failures and excluded from the confusion
// counts.
BenchmarkReport run_benchmark(const std::string& corpus_dir, const pipe::Inspector& inspector);

}  // namespace plateinspect::eval
