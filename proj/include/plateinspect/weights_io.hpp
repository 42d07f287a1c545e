#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace plateinspect {

// Bit-exact weight container. Layout:
//   magic "RVW1" | u32 version | u64 header length | JSON header | f32 payload
// The header lists tensors as {name, shape, dtype:"f32", offset} with offsets
// relative to the payload start; "meta" carries free-form model metadata.
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct WeightContainer {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    void add(const std::string& name, std::vector<int> shape, const std::vector<float>& data);
    const NamedTensor* find(const std::string& name) const;
    const NamedTensor& require(const std::string& name) const;

    void save(const std::string& path) const;
    static WeightContainer load(const std::string& path);
};

}  // namespace plateinspect
