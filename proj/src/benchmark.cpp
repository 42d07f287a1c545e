#include "plateinspect/benchmark.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "plateinspect/common.hpp"
#include "plateinspect/image_io.hpp"

namespace plateinspect::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t fnv1a(const std::string& data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::pair<double, double> percentiles(std::vector<double> v) {
    if (v.empty()) return {0.0, 0.0};
    std::sort(v.begin(), v.end());
    auto at = [&](double q) {
        const double idx = q * (v.size() - 1);
        const size_t lo = static_cast<size_t>(idx);
        const size_t hi = std::min(lo + 1, v.size() - 1);
        const double frac = idx - lo;
        return v[lo] * (1 - frac) + v[hi] * frac;
    };
    return {at(0.5), at(0.95)};
}

}  // namespace

json BenchmarkReport::to_json(bool include_timings) const {
    json j;
    j["overall"] = {{"tp", overall.tp}, {"fp", overall.fp}, {"fn", overall.fn}, {"tn", overall.tn}};
    j["overall"]["accuracy"] = metrics.accuracy;
    if (metrics.precision) j["overall"]["precision"] = *metrics.precision;
    if (metrics.recall) j["overall"]["recall"] = *metrics.recall;
    if (metrics.f1) j["overall"]["f1"] = *metrics.f1;
    j["per_stage"] = json::object();
    for (const auto& [stage, count] : fp_by_stage) j["per_stage"][stage] = count;
    j["operational_failures"] = operational_failures;
    if (include_timings) {
        json t = json::object();
        for (const auto& [stage, pq] : stage_timings_ms)
            t[stage] = {{"p50", pq.first}, {"p95", pq.second}};
        j["timings_ms"] = t;
    }
    j["corpus_hash"] = corpus_hash;
    json arr = json::array();
    for (const auto& p : plates)
        arr.push_back({{"serial", p.serial},
                       {"gt_label", p.gt_defective ? "defective" : "clean"},
                       {"gt_kind", p.gt_kind},
                       {"verdict", p.verdict},
                       {"failed_stage", p.failed_stage},
                       {"correct", p.correct}});
    j["plates"] = arr;
    return j;
}

std::string BenchmarkReport::to_csv() const {
    std::ostringstream os;
    os << "serial,gt_label,gt_kind,verdict,failed_stage,correct\n";
    for (const auto& p : plates)
        os << p.serial << "," << (p.gt_defective ? "defective" : "clean") << "," << p.gt_kind << ","
           << p.verdict << "," << p.failed_stage << "," << (p.correct ? 1 : 0) << "\n";
    return os.str();
}

BenchmarkReport run_benchmark(const std::string& corpus_dir, const pipe::Inspector& inspector) {
    const fs::path dir(corpus_dir);
    std::ifstream gt_file(dir / "ground_truth.jsonl");
    if (!gt_file) throw IoError("benchmark: missing ground_truth.jsonl in " + corpus_dir);
    std::stringstream gt_buf;
    gt_buf << gt_file.rdbuf();
    const std::string gt_text = gt_buf.str();

    const GrayImage reference = read_image((dir / "reference.png").string());
    const std::string mes_path = (dir / "mes.json").string();

    BenchmarkReport report;
    report.corpus_hash = fnv1a(gt_text);

    std::map<std::string, std::vector<double>> stage_times;
    std::istringstream lines(gt_text);
    std::string line;
    long n_lines = 0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        ++n_lines;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            ++report.operational_failures;
            continue;
        }
        PlateResult pr;
        pr.serial = j.value("serial", "");
        pr.gt_defective = j.value("label", "") == "defective";
        pr.gt_kind = j.value("defect_kind", "");
        try {
            const GrayImage captured = read_image((dir / j.at("path").get<std::string>()).string());
            const auto expected = pipe::load_mes_strings(mes_path, pr.serial);
            const auto rep = inspector.inspect(captured, reference, expected, pr.serial);
            pr.verdict = pipe::to_string(rep.verdict);
            pr.failed_stage = rep.failed_stage.value_or("");
            const bool predicted = rep.verdict != pipe::Verdict::Acceptable;
            pr.correct = predicted == pr.gt_defective;
            if (predicted && pr.gt_defective) ++report.overall.tp;
            else if (predicted) {
                ++report.overall.fp;
                ++report.fp_by_stage[pr.failed_stage];
            } else if (pr.gt_defective) ++report.overall.fn;
            else ++report.overall.tn;
            double total = 0.0;
            for (const auto& [stage, ms] : rep.timings_ms) {
                stage_times[stage].push_back(ms);
                total += ms;
            }
            pr.total_ms = total;
        } catch (const std::exception&) {
            ++report.operational_failures;
            pr.verdict = "error";
            pr.correct = false;
        }
        report.plates.push_back(std::move(pr));
    }
    if (n_lines == 0) throw std::invalid_argument("benchmark: empty corpus");
    if (report.overall.total() > 0) report.metrics = classification_metrics(report.overall);
    for (auto& [stage, times] : stage_times) report.stage_timings_ms[stage] = percentiles(times);
    return report;
}

}  // namespace plateinspect::eval
