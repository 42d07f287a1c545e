#pragma once

#include <string>
#include <variant>
#include <vector>

#include "plateinspect/image.hpp"

namespace plateinspect {

enum class RegionClass { String, Logo, Dmc };

const char* to_string(RegionClass c);
RegionClass region_class_from_string(const std::string& s);

struct Region {
    RegionClass cls = RegionClass::String;
    int x = 0, y = 0, w = 0, h = 0;
    double confidence = 1.0;
};

// Fixed plate layout: classed boxes at a nominal resolution. Stands in for a
// trained detector on plates whose engraved content has fixed positions.
struct LayoutSpec {
    std::string plate_type;
    int nominal_w = 0;
    int nominal_h = 0;
    std::vector<Region> regions;

    static LayoutSpec load(const std::string& path);
    static LayoutSpec from_json_text(const std::string& text);
    std::string to_json_text() const;
    void save(const std::string& path) const;
};

struct LayoutProvider {
    LayoutSpec spec;
};

// Projection-profile text-line detector: Otsu binarization, row-sum bands
// split at valleys, column trim within each band. Finds string regions only.
struct ProfileProvider {
    double valley_frac = 0.05;  // rows below this fraction of the peak split bands
    int min_row_height = 8;
    int max_row_height = 400;
};

// Subprocess adapter: `command <png_path>` must print a JSON array of
// {"class","bbox":[x,y,w,h],"confidence"} on stdout.
struct ExternalProvider {
    std::string command;
};

using RegionProvider = std::variant<LayoutProvider, ProfileProvider, ExternalProvider>;

// Regions sorted top-to-bottom then left-to-right. The layout provider
// scales spec boxes from nominal size to the image size.
std::vector<Region> detect_regions(const GrayImage& img, const RegionProvider& provider);

// Crops are copies; regions up to 2 px outside the image are clamped (with a
// note in `warnings` when provided), fully-outside regions are an error.
std::vector<std::pair<Region, GrayImage>> crop_regions(const GrayImage& img,
                                                       const std::vector<Region>& regions,
                                                       std::vector<std::string>* warnings = nullptr);

}  // namespace plateinspect
