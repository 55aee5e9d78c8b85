#include "perfseg/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "raw files are little-endian; big-endian hosts are unsupported");

namespace perfseg {

namespace {

using nlohmann::json;

std::string ends_with_stripped(const std::string& s, const std::string& suffix) {
    if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
        return s.substr(0, s.size() - suffix.size());
    return s;
}

struct Header {
    std::array<int, 4> dims;
    std::array<double, 3> spacing_mm;
    double frame_interval_s;
    std::string dtype;
};

void write_header(const Header& h, const std::string& path) {
    json j;
    j["dims"] = h.dims;
    j["spacing_mm"] = h.spacing_mm;
    j["frame_interval_s"] = h.frame_interval_s;
    j["dtype"] = h.dtype;
    j["order"] = "x-fastest";
    std::ofstream out(path);
    if (!out) throw io_error("cannot open header for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw io_error("failed writing header: " + path);
}

Header read_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("missing header file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed header " + path + ": " + e.what());
    }
    Header h;
    try {
        auto dims = j.at("dims");
        if (!dims.is_array() || dims.size() != 4)
            throw std::runtime_error("header dims must be an array of 4 ints");
        for (int i = 0; i < 4; ++i) h.dims[i] = dims[i].get<int>();
        auto sp = j.at("spacing_mm");
        if (!sp.is_array() || sp.size() != 3)
            throw std::runtime_error("header spacing_mm must be an array of 3 floats");
        for (int i = 0; i < 3; ++i) h.spacing_mm[i] = sp[i].get<double>();
        h.frame_interval_s = j.at("frame_interval_s").get<double>();
        h.dtype = j.at("dtype").get<std::string>();
        if (j.at("order").get<std::string>() != "x-fastest")
            throw std::runtime_error("header order must be \"x-fastest\"");
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed header " + path + ": " + e.what());
    }
    if (h.dtype != "f32le" && h.dtype != "u32le")
        throw std::runtime_error("unsupported dtype \"" + h.dtype + "\" in " + path);
    return h;
}

void write_raw(const void* bytes, std::size_t n, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open raw file for writing: " + path);
    out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
    if (!out) throw io_error("failed writing raw file: " + path);
}

void read_raw(void* bytes, std::size_t expected, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("missing raw file: " + path);
    in.seekg(0, std::ios::end);
    const auto actual = static_cast<std::size_t>(in.tellg());
    if (actual != expected)
        throw io_error("raw size mismatch for " + path + ": expected " +
                       std::to_string(expected) + " bytes, found " + std::to_string(actual));
    in.seekg(0, std::ios::beg);
    in.read(static_cast<char*>(bytes), static_cast<std::streamsize>(expected));
    if (!in) throw io_error("failed reading raw file: " + path);
}

std::string base_name(const std::string& base_path) {
    return std::filesystem::path(base_path).filename().string();
}

}  // namespace

std::string strip_volume_suffix(const std::string& path) {
    return ends_with_stripped(ends_with_stripped(path, ".vh.json"), ".raw");
}

void ensure_parent_dir(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

void save_volume(const Volume4D& v, const std::string& base_path) {
    v.validate();
    const std::string base = strip_volume_suffix(base_path);
    ensure_parent_dir(base);
    write_header({{v.width, v.height, v.depth, v.channels}, v.spacing_mm, v.frame_interval_s, "f32le"},
                 base + ".vh.json");
    write_raw(v.data.data(), v.data.size() * sizeof(float), base + ".raw");
}

Volume4D load_volume(const std::string& base_path) {
    const std::string base = strip_volume_suffix(base_path);
    const Header h = read_header(base + ".vh.json");
    if (h.dtype != "f32le")
        throw std::runtime_error("load_volume: expected dtype f32le in " + base + ".vh.json");
    Volume4D v;
    v.width = h.dims[0];
    v.height = h.dims[1];
    v.depth = h.dims[2];
    v.channels = h.dims[3];
    v.spacing_mm = h.spacing_mm;
    v.frame_interval_s = h.frame_interval_s;
    v.id = base_name(base);
    if (v.width < 1 || v.height < 1 || v.depth < 1 || v.channels < 1)
        throw std::runtime_error("load_volume: non-positive dims in " + base + ".vh.json");
    v.data.resize(v.element_count());
    read_raw(v.data.data(), v.data.size() * sizeof(float), base + ".raw");
    v.validate();
    return v;
}

namespace {

std::vector<std::uint32_t> load_u32(const std::string& base, std::array<int, 4>& dims,
                                    std::array<double, 3>& spacing) {
    const Header h = read_header(base + ".vh.json");
    if (h.dtype != "u32le")
        throw std::runtime_error("expected dtype u32le in " + base + ".vh.json");
    dims = h.dims;
    spacing = h.spacing_mm;
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1 || dims[3] != 1)
        throw std::runtime_error("u32 volumes must have dims [W,H,Z,1]: " + base);
    std::vector<std::uint32_t> out(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    read_raw(out.data(), out.size() * sizeof(std::uint32_t), base + ".raw");
    return out;
}

}  // namespace

void save_labels(const LabelVolume& lv, const std::string& base_path) {
    lv.validate();
    const std::string base = strip_volume_suffix(base_path);
    ensure_parent_dir(base);
    write_header({{lv.width, lv.height, lv.depth, 1}, lv.spacing_mm, 0.0, "u32le"},
                 base + ".vh.json");
    write_raw(lv.labels.data(), lv.labels.size() * sizeof(std::uint32_t), base + ".raw");
}

LabelVolume load_labels(const std::string& base_path) {
    const std::string base = strip_volume_suffix(base_path);
    std::array<int, 4> dims;
    std::array<double, 3> spacing;
    auto raw = load_u32(base, dims, spacing);
    LabelVolume lv;
    lv.width = dims[0];
    lv.height = dims[1];
    lv.depth = dims[2];
    lv.spacing_mm = spacing;
    lv.labels = std::move(raw);
    lv.validate();
    return lv;
}

void save_mask(const BinaryMask& m, const std::array<double, 3>& spacing_mm,
               const std::string& base_path) {
    m.validate();
    const std::string base = strip_volume_suffix(base_path);
    ensure_parent_dir(base);
    write_header({{m.width, m.height, m.depth, 1}, spacing_mm, 0.0, "u32le"}, base + ".vh.json");
    std::vector<std::uint32_t> raw(m.data.begin(), m.data.end());
    write_raw(raw.data(), raw.size() * sizeof(std::uint32_t), base + ".raw");
}

MaskFile load_mask(const std::string& base_path) {
    const std::string base = strip_volume_suffix(base_path);
    std::array<int, 4> dims;
    std::array<double, 3> spacing;
    auto raw = load_u32(base, dims, spacing);
    MaskFile mf;
    mf.spacing_mm = spacing;
    mf.mask.width = dims[0];
    mf.mask.height = dims[1];
    mf.mask.depth = dims[2];
    mf.mask.data.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] > 1)
            throw std::runtime_error("mask file contains values other than 0/1: " + base);
        mf.mask.data[i] = static_cast<std::uint8_t>(raw[i]);
    }
    return mf;
}

void save_slice(const SliceTW& s, const std::array<double, 3>& spacing_mm,
                double frame_interval_s, const std::string& base_path) {
    Volume4D v;
    v.width = s.width;
    v.height = s.height;
    v.depth = 1;
    v.channels = s.channels;
    v.spacing_mm = spacing_mm;
    v.frame_interval_s = frame_interval_s;
    v.data = s.data;
    save_volume(v, base_path);
}

SliceTW load_slice(const std::string& base_path) {
    Volume4D v = load_volume(base_path);
    if (v.depth != 1)
        throw std::runtime_error("load_slice: expected depth 1 in " + base_path);
    SliceTW s;
    s.width = v.width;
    s.height = v.height;
    s.channels = v.channels;
    s.source_z = 0;
    s.source_id = v.id;
    s.data = std::move(v.data);
    return s;
}

}  // namespace perfseg
