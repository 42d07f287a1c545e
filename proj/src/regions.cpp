#include "plateinspect/regions.hpp"

#include <algorithm>
#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "plateinspect/common.hpp"
#include "plateinspect/image_io.hpp"

namespace plateinspect {

using nlohmann::json;

const char* to_string(RegionClass c) {
    switch (c) {
        case RegionClass::String: return "string";
        case RegionClass::Logo: return "logo";
        case RegionClass::Dmc: return "dmc";
    }
    return "string";
}

RegionClass region_class_from_string(const std::string& s) {
    if (s == "string") return RegionClass::String;
    if (s == "logo") return RegionClass::Logo;
    if (s == "dmc") return RegionClass::Dmc;
    throw ConfigError("unknown region class: " + s);
}

LayoutSpec LayoutSpec::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    LayoutSpec spec;
    spec.plate_type = j.at("plate_type").get<std::string>();
    spec.nominal_w = j.at("nominal_size").at(0).get<int>();
    spec.nominal_h = j.at("nominal_size").at(1).get<int>();
    for (const auto& r : j.at("regions")) {
        Region reg;
        reg.cls = region_class_from_string(r.at("class").get<std::string>());
        reg.x = r.at("bbox").at(0).get<int>();
        reg.y = r.at("bbox").at(1).get<int>();
        reg.w = r.at("bbox").at(2).get<int>();
        reg.h = r.at("bbox").at(3).get<int>();
        reg.confidence = 1.0;
        if (reg.w < 1 || reg.h < 1) throw ConfigError("layout region with empty bbox");
        spec.regions.push_back(reg);
    }
    if (spec.nominal_w < 1 || spec.nominal_h < 1) throw ConfigError("layout nominal_size invalid");
    return spec;
}

LayoutSpec LayoutSpec::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open layout spec " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

std::string LayoutSpec::to_json_text() const {
    json j;
    j["plate_type"] = plate_type;
    j["nominal_size"] = {nominal_w, nominal_h};
    j["regions"] = json::array();
    for (const auto& r : regions)
        j["regions"].push_back({{"class", to_string(r.cls)}, {"bbox", {r.x, r.y, r.w, r.h}}});
    return j.dump(2);
}

void LayoutSpec::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write layout spec " + path);
    f << to_json_text() << "\n";
}

namespace {

void sort_regions(std::vector<Region>& rs) {
    std::sort(rs.begin(), rs.end(), [](const Region& a, const Region& b) {
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
}

std::vector<Region> detect_layout(const GrayImage& img, const LayoutProvider& p) {
    std::vector<Region> out;
    const double sx = static_cast<double>(img.width) / p.spec.nominal_w;
    const double sy = static_cast<double>(img.height) / p.spec.nominal_h;
    for (const auto& r : p.spec.regions) {
        Region s = r;
        s.x = static_cast<int>(std::lround(r.x * sx));
        s.y = static_cast<int>(std::lround(r.y * sy));
        s.w = std::max(1, static_cast<int>(std::lround(r.w * sx)));
        s.h = std::max(1, static_cast<int>(std::lround(r.h * sy)));
        s.confidence = 1.0;
        out.push_back(s);
    }
    sort_regions(out);
    return out;
}

std::vector<Region> detect_profile(const GrayImage& img, const ProfileProvider& p) {
    std::vector<Region> out;
    const BinaryImage mask = threshold_binary(img, otsu_threshold(img));
    std::vector<long> row_sum(img.height, 0);
    long peak = 0;
    for (int y = 0; y < img.height; ++y) {
        long s = 0;
        for (int x = 0; x < img.width; ++x) s += mask.at(x, y);
        row_sum[y] = s;
        peak = std::max(peak, s);
    }
    if (peak == 0) return out;
    const double valley = p.valley_frac * static_cast<double>(peak);

    int band_start = -1;
    auto flush_band = [&](int y_end) {
        if (band_start < 0) return;
        const int y0 = band_start, y1 = y_end;  // inclusive
        band_start = -1;
        const int h = y1 - y0 + 1;
        if (h < p.min_row_height || h > p.max_row_height) return;
        // column trim inside the band
        int x0 = -1, x1 = -1;
        for (int x = 0; x < img.width; ++x) {
            long c = 0;
            for (int y = y0; y <= y1; ++y) c += mask.at(x, y);
            if (c > 0) {
                if (x0 < 0) x0 = x;
                x1 = x;
            }
        }
        if (x0 < 0) return;
        out.push_back({RegionClass::String, x0, y0, x1 - x0 + 1, h, 1.0});
    };
    for (int y = 0; y < img.height; ++y) {
        const bool on = static_cast<double>(row_sum[y]) > valley;
        if (on && band_start < 0) band_start = y;
        if (!on) flush_band(y - 1);
    }
    flush_band(img.height - 1);
    sort_regions(out);
    return out;
}

std::vector<Region> detect_external(const GrayImage& img, const ExternalProvider& p) {
    namespace fs = std::filesystem;
    const fs::path tmp =
        fs::temp_directory_path() / ("plateinspect_detect_" + std::to_string(::getpid()) + ".png");
    write_png(img, tmp.string());
    const std::string cmd = p.command + " " + tmp.string();
    std::string output;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        fs::remove(tmp);
        throw DetectorUnavailableError("external detector failed to start: " + p.command);
    }
    char buf[4096];
    while (size_t n = fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
    const int rc = pclose(pipe);
    fs::remove(tmp);
    if (rc != 0) throw DetectorUnavailableError("external detector exited with status " +
                                                std::to_string(rc));
    std::vector<Region> out;
    try {
        const json j = json::parse(output);
        for (const auto& r : j) {
            Region reg;
            reg.cls = region_class_from_string(r.at("class").get<std::string>());
            reg.x = r.at("bbox").at(0).get<int>();
            reg.y = r.at("bbox").at(1).get<int>();
            reg.w = r.at("bbox").at(2).get<int>();
            reg.h = r.at("bbox").at(3).get<int>();
            reg.confidence = r.value("confidence", 1.0);
            out.push_back(reg);
        }
    } catch (const json::exception& e) {
        throw DetectorUnavailableError(std::string("external detector returned bad JSON: ") +
                                       e.what());
    }
    sort_regions(out);
    return out;
}

}  // namespace

std::vector<Region> detect_regions(const GrayImage& img, const RegionProvider& provider) {
    return std::visit(
        [&](const auto& p) -> std::vector<Region> {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LayoutProvider>) return detect_layout(img, p);
            else if constexpr (std::is_same_v<T, ProfileProvider>) return detect_profile(img, p);
            else return detect_external(img, p);
        },
        provider);
}

std::vector<std::pair<Region, GrayImage>> crop_regions(const GrayImage& img,
                                                       const std::vector<Region>& regions,
                                                       std::vector<std::string>* warnings) {
    constexpr int kSlack = 2;  // clamp regions hanging at most this far outside
    std::vector<std::pair<Region, GrayImage>> out;
    for (const auto& r : regions) {
        if (r.w < 1 || r.h < 1) throw std::invalid_argument("crop_regions: empty region");
        if (r.x + r.w <= 0 || r.y + r.h <= 0 || r.x >= img.width || r.y >= img.height)
            throw std::invalid_argument("crop_regions: region fully outside image");
        int x0 = r.x, y0 = r.y, x1 = r.x + r.w, y1 = r.y + r.h;
        const bool outside = x0 < 0 || y0 < 0 || x1 > img.width || y1 > img.height;
        if (x0 < -kSlack || y0 < -kSlack || x1 > img.width + kSlack || y1 > img.height + kSlack)
            throw std::invalid_argument("crop_regions: region more than 2 px outside image");
        x0 = std::max(0, x0);
        y0 = std::max(0, y0);
        x1 = std::min(img.width, x1);
        y1 = std::min(img.height, y1);
        if (outside && warnings)
            warnings->push_back("region clamped to image bounds at (" + std::to_string(r.x) + "," +
                                std::to_string(r.y) + ")");
        Region clamped = r;
        clamped.x = x0;
        clamped.y = y0;
        clamped.w = x1 - x0;
        clamped.h = y1 - y0;
        GrayImage crop(clamped.w, clamped.h);
        for (int y = 0; y < clamped.h; ++y)
            for (int x = 0; x < clamped.w; ++x) crop.at(x, y) = img.at(x0 + x, y0 + y);
        out.emplace_back(clamped, std::move(crop));
    }
    return out;
}

}  // namespace plateinspect
