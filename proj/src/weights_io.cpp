#include "plateinspect/weights_io.hpp"

#include <cstring>
#include <fstream>

#include "plateinspect/common.hpp"

namespace plateinspect {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'R', 'V', 'W', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
    // little-endian hosts only
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
}  // namespace

void WeightContainer::add(const std::string& name, std::vector<int> shape,
                          const std::vector<float>& data) {
    size_t expect = 1;
    for (int d : shape) expect *= static_cast<size_t>(d);
    if (expect != data.size())
        throw std::invalid_argument("WeightContainer::add: shape/data mismatch for " + name);
    tensors.push_back({name, std::move(shape), data});
}

const NamedTensor* WeightContainer::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const NamedTensor& WeightContainer::require(const std::string& name) const {
    const NamedTensor* t = find(name);
    if (!t) throw ConfigError("weight container missing tensor " + name);
    return *t;
}

void WeightContainer::save(const std::string& path) const {
    json header;
    header["meta"] = meta;
    header["tensors"] = json::array();
    uint64_t offset = 0;
    for (const auto& t : tensors) {
        header["tensors"].push_back(
            {{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}});
        offset += t.data.size() * sizeof(float);
    }
    const std::string htext = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(kMagic, 4);
    write_le<uint32_t>(f, kVersion);
    write_le<uint64_t>(f, htext.size());
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& t : tensors)
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw IoError("failed writing " + path);
}

WeightContainer WeightContainer::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(path + ": not a RVW1 weight container");
    const uint32_t version = read_le<uint32_t>(f);
    if (version != kVersion)
        throw IoError(path + ": unsupported container version " + std::to_string(version));
    const uint64_t hlen = read_le<uint64_t>(f);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError(path + ": truncated header");

    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw IoError(path + ": bad container header: " + e.what());
    }

    WeightContainer wc;
    wc.meta = header.value("meta", json::object());
    const std::streampos payload_start = f.tellg();
    for (const auto& jt : header.at("tensors")) {
        NamedTensor t;
        t.name = jt.at("name").get<std::string>();
        t.shape = jt.at("shape").get<std::vector<int>>();
        if (jt.at("dtype").get<std::string>() != "f32")
            throw IoError(path + ": unsupported dtype for " + t.name);
        size_t count = 1;
        for (int d : t.shape) count *= static_cast<size_t>(d);
        t.data.resize(count);
        f.seekg(payload_start + static_cast<std::streamoff>(jt.at("offset").get<uint64_t>()));
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(count * sizeof(float)));
        if (!f) throw IoError(path + ": truncated payload for " + t.name);
        wc.tensors.push_back(std::move(t));
    }
    return wc;
}

}  // namespace plateinspect
