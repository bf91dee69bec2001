#include "speedest/interchange.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "speedest/errors.hpp"

namespace speedest {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint8_t format_version = 0x01;

std::vector<std::uint8_t> read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingFileError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const fs::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(const std::uint8_t* p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::vector<std::uint8_t> header(const char (&magic)[5], std::uint32_t w, std::uint32_t h, std::size_t payload)
{
    std::vector<std::uint8_t> out;
    out.reserve(raster_header_size + payload);
    out.insert(out.end(), magic, magic + 4);
    out.push_back(format_version);
    put_u32(out, w);
    put_u32(out, h);
    return out;
}

// Returns (width, height) after checking magic, version and payload length.
std::pair<std::uint32_t, std::uint32_t> check_header(const std::vector<std::uint8_t>& bytes, const char (&magic)[5],
                                                     std::size_t elem_size)
{
    if (bytes.size() < 4 || !std::equal(magic, magic + 4, bytes.begin())) {
        throw BadMagicError(std::string("expected magic ") + magic);
    }
    if (bytes.size() < raster_header_size) {
        throw TruncatedFileError("raster header truncated");
    }
    if (bytes[4] != format_version) {
        throw BadMagicError("unsupported raster version " + std::to_string(bytes[4]));
    }
    const auto w = get_u32(bytes.data() + 5);
    const auto h = get_u32(bytes.data() + 9);
    if (w == 0 || h == 0) {
        throw ValueError("raster dimensions must be at least 1x1");
    }
    const auto expected = std::uint64_t(w) * h * elem_size;
    const auto actual = std::uint64_t(bytes.size() - raster_header_size);
    if (actual < expected) {
        throw TruncatedFileError("payload holds " + std::to_string(actual / elem_size) + " values, header claims " +
                                 std::to_string(std::uint64_t(w) * h));
    }
    if (actual > expected) {
        throw ValueError("trailing bytes after raster payload");
    }
    return {w, h};
}

template<typename Enum, std::size_t N>
Enum parse_enum(const std::string& s, const std::pair<const char*, Enum> (&table)[N], const char* what)
{
    for (const auto& [name, value] : table) {
        if (s == name) {
            return value;
        }
    }
    throw ParseError(std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::pair<const char*, DepthConvention> convention_names[] = {
    {"larger_is_nearer", DepthConvention::larger_is_nearer},
    {"larger_is_farther", DepthConvention::larger_is_farther},
};
constexpr std::pair<const char*, DepthUnits> unit_names[] = {
    {"relative", DepthUnits::relative},
    {"metric_m", DepthUnits::metric_m},
};
constexpr std::pair<const char*, Perspective> perspective_names[] = {
    {"front", Perspective::front},
    {"side", Perspective::side},
    {"unknown", Perspective::unknown},
};

template<typename Enum, std::size_t N>
std::string enum_name(Enum e, const std::pair<const char*, Enum> (&table)[N])
{
    for (const auto& [name, value] : table) {
        if (value == e) {
            return name;
        }
    }
    return "?";
}

std::string where(const SampleEntry& s) { return "sample '" + s.sample_id + "'"; }

std::string where(const SampleEntry& s, const FrameObservation& f)
{
    return where(s) + " frame " + std::to_string(f.frame_index);
}

} // namespace

std::string to_string(DepthConvention c) { return enum_name(c, convention_names); }
std::string to_string(DepthUnits u) { return enum_name(u, unit_names); }
std::string to_string(Perspective p) { return enum_name(p, perspective_names); }
DepthConvention parse_depth_convention(const std::string& s) { return parse_enum(s, convention_names, "depth_convention"); }
DepthUnits parse_depth_units(const std::string& s) { return parse_enum(s, unit_names, "depth_units"); }
Perspective parse_perspective(const std::string& s) { return parse_enum(s, perspective_names, "perspective"); }

std::size_t MaskRaster::count() const
{
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

void validate(const DepthRaster& raster)
{
    if (raster.width == 0 || raster.height == 0) {
        throw ValueError("depth raster dimensions must be at least 1x1");
    }
    if (raster.values.size() != std::size_t(raster.width) * raster.height) {
        throw DimensionMismatchError("depth raster holds " + std::to_string(raster.values.size()) + " values for " +
                                     std::to_string(raster.width) + "x" + std::to_string(raster.height));
    }
    const auto bad = std::find_if(raster.values.begin(), raster.values.end(), [](float v) { return !std::isfinite(v); });
    if (bad != raster.values.end()) {
        throw NonFiniteValueError("non-finite depth at index " + std::to_string(bad - raster.values.begin()));
    }
}

void validate(const MaskRaster& mask)
{
    if (mask.width == 0 || mask.height == 0) {
        throw ValueError("mask raster dimensions must be at least 1x1");
    }
    if (mask.values.size() != std::size_t(mask.width) * mask.height) {
        throw DimensionMismatchError("mask raster holds " + std::to_string(mask.values.size()) + " values for " +
                                     std::to_string(mask.width) + "x" + std::to_string(mask.height));
    }
    const auto bad = std::find_if(mask.values.begin(), mask.values.end(), [](std::uint8_t v) { return v > 1; });
    if (bad != mask.values.end()) {
        throw ValueError("mask value " + std::to_string(*bad) + " at index " +
                         std::to_string(bad - mask.values.begin()) + " is not 0 or 1");
    }
}

std::vector<std::uint8_t> encode_depth_raster(const DepthRaster& raster)
{
    validate(raster);
    auto out = header("DPTH", raster.width, raster.height, raster.values.size() * 4);
    for (float v : raster.values) {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

DepthRaster decode_depth_raster(const std::vector<std::uint8_t>& bytes)
{
    const auto [w, h] = check_header(bytes, "DPTH", 4);
    DepthRaster raster{w, h, {}};
    raster.values.resize(std::size_t(w) * h);
    const std::uint8_t* p = bytes.data() + raster_header_size;
    for (std::size_t i = 0; i < raster.values.size(); ++i, p += 4) {
        const float v = std::bit_cast<float>(get_u32(p));
        if (!std::isfinite(v)) {
            throw NonFiniteValueError("non-finite depth at index " + std::to_string(i));
        }
        raster.values[i] = v;
    }
    return raster;
}

std::vector<std::uint8_t> encode_mask_raster(const MaskRaster& mask)
{
    validate(mask);
    auto out = header("MASK", mask.width, mask.height, mask.values.size());
    out.insert(out.end(), mask.values.begin(), mask.values.end());
    return out;
}

MaskRaster decode_mask_raster(const std::vector<std::uint8_t>& bytes)
{
    const auto [w, h] = check_header(bytes, "MASK", 1);
    MaskRaster mask{w, h, std::vector<std::uint8_t>(bytes.begin() + raster_header_size, bytes.end())};
    validate(mask);
    return mask;
}

DepthRaster read_depth_raster(const fs::path& path) { return decode_depth_raster(read_bytes(path)); }

void write_depth_raster(const DepthRaster& raster, const fs::path& path)
{
    write_bytes(encode_depth_raster(raster), path);
}

MaskRaster read_mask_raster(const fs::path& path) { return decode_mask_raster(read_bytes(path)); }

void write_mask_raster(const MaskRaster& mask, const fs::path& path) { write_bytes(encode_mask_raster(mask), path); }

// ---------------------------------------------------------------------------
// Manifest

void validate(const DatasetManifest& manifest, bool check_files)
{
    std::set<std::string> ids;
    for (const auto& s : manifest.samples) {
        if (s.sample_id.empty()) {
            throw ValidationError("sample_id must be nonempty");
        }
        if (!ids.insert(s.sample_id).second) {
            throw ValidationError("duplicate sample_id '" + s.sample_id + "'");
        }
        if (!std::isfinite(s.fps) || s.fps <= 0.0) {
            throw ValidationError(where(s) + ": fps must be > 0");
        }
        if (s.ground_truth_speed_kmh && (!std::isfinite(*s.ground_truth_speed_kmh) || *s.ground_truth_speed_kmh < 0.0)) {
            throw ValidationError(where(s) + ": ground_truth_speed_kmh must be a nonnegative number");
        }
        if (s.frames.size() < 2) {
            throw ValidationError(where(s) + ": frames must hold at least 2 entries");
        }
        std::set<std::uint64_t> indices;
        for (const auto& f : s.frames) {
            if (!indices.insert(f.frame_index).second) {
                throw ValidationError(where(s) + ": duplicate frame_index " + std::to_string(f.frame_index));
            }
            for (const auto& d : f.detections) {
                const auto& b = d.bbox;
                if (!std::isfinite(d.confidence) || d.confidence < 0.0 || d.confidence > 1.0) {
                    throw ValidationError(where(s, f) + ": confidence must lie in [0,1]");
                }
                if (!std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2)) {
                    throw ValidationError(where(s, f) + ": bbox coordinates must be finite");
                }
                if (b.x1 > b.x2 || b.y1 > b.y2) {
                    throw ValidationError(where(s, f) + ": bbox requires x1 <= x2 and y1 <= y2");
                }
            }
            if (check_files) {
                for (const auto* p : {&f.depth_path, &f.mask_path}) {
                    if (*p && !fs::exists(manifest.resolve(**p))) {
                        throw MissingFileError(where(s, f) + ": missing file " + manifest.resolve(**p).string());
                    }
                }
            }
        }
    }
}

namespace {

template<typename T>
T field(const json& j, const char* key, const std::string& context)
{
    if (!j.is_object() || !j.contains(key)) {
        throw ParseError(context + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(context + ": field '" + key + "': " + e.what());
    }
}

template<typename T>
std::optional<T> optional_field(const json& j, const char* key, const std::string& context)
{
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return field<T>(j, key, context);
}

Detection parse_detection(const json& j, const std::string& ctx)
{
    Detection d;
    d.class_label = field<std::string>(j, "class_label", ctx);
    d.confidence = field<double>(j, "confidence", ctx);
    const auto box = field<std::vector<double>>(j, "bbox", ctx);
    if (box.size() != 4) {
        throw ParseError(ctx + ": bbox must hold 4 numbers");
    }
    d.bbox = {box[0], box[1], box[2], box[3]};
    return d;
}

FrameObservation parse_frame(const json& j, const std::string& ctx)
{
    FrameObservation f;
    f.frame_index = field<std::uint64_t>(j, "frame_index", ctx);
    const auto fctx = ctx + " frame " + std::to_string(f.frame_index);
    if (j.contains("detections")) {
        const auto& dets = j.at("detections");
        if (!dets.is_array()) {
            throw ParseError(fctx + ": detections must be an array");
        }
        for (const auto& d : dets) {
            f.detections.push_back(parse_detection(d, fctx));
        }
    }
    f.depth_path = optional_field<std::string>(j, "depth_path", fctx);
    f.mask_path = optional_field<std::string>(j, "mask_path", fctx);
    return f;
}

} // namespace

DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir, bool check_files)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed manifest: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ParseError("manifest must be an object");
    }
    DatasetManifest m;
    m.base_dir = base_dir;
    if (doc.contains("metadata")) {
        const auto& md = doc.at("metadata");
        m.metadata.depth_units = parse_depth_units(field<std::string>(md, "depth_units", "metadata"));
        m.metadata.depth_convention = parse_depth_convention(field<std::string>(md, "depth_convention", "metadata"));
    }
    const auto samples = doc.contains("samples") ? doc.at("samples") : json::array();
    if (!samples.is_array()) {
        throw ParseError("samples must be an array");
    }
    for (const auto& js : samples) {
        SampleEntry s;
        s.sample_id = field<std::string>(js, "sample_id", "sample");
        const auto ctx = "sample '" + s.sample_id + "'";
        s.fps = field<double>(js, "fps", ctx);
        s.ground_truth_speed_kmh = optional_field<double>(js, "ground_truth_speed_kmh", ctx);
        s.perspective = js.contains("perspective") ? parse_perspective(field<std::string>(js, "perspective", ctx))
                                                   : Perspective::unknown;
        const auto frames = field<json>(js, "frames", ctx);
        if (!frames.is_array()) {
            throw ParseError(ctx + ": frames must be an array");
        }
        for (const auto& jf : frames) {
            s.frames.push_back(parse_frame(jf, ctx));
        }
        m.samples.push_back(std::move(s));
    }
    validate(m, check_files);
    return m;
}

DatasetManifest read_manifest(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw MissingFileError("cannot open manifest " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_manifest(buf.str(), path.parent_path(), true);
}

std::string dump_manifest(const DatasetManifest& m)
{
    json doc;
    doc["metadata"] = {{"depth_units", to_string(m.metadata.depth_units)},
                       {"depth_convention", to_string(m.metadata.depth_convention)}};
    doc["samples"] = json::array();
    for (const auto& s : m.samples) {
        json js;
        js["sample_id"] = s.sample_id;
        js["fps"] = s.fps;
        js["ground_truth_speed_kmh"] = s.ground_truth_speed_kmh ? json(*s.ground_truth_speed_kmh) : json(nullptr);
        js["perspective"] = to_string(s.perspective);
        js["frames"] = json::array();
        for (const auto& f : s.frames) {
            json jf;
            jf["frame_index"] = f.frame_index;
            jf["detections"] = json::array();
            for (const auto& d : f.detections) {
                jf["detections"].push_back({{"class_label", d.class_label},
                                            {"confidence", d.confidence},
                                            {"bbox", {d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2}}});
            }
            if (f.depth_path) {
                jf["depth_path"] = *f.depth_path;
            }
            if (f.mask_path) {
                jf["mask_path"] = *f.mask_path;
            }
            js["frames"].push_back(std::move(jf));
        }
        doc["samples"].push_back(std::move(js));
    }
    return doc.dump(2) + "\n";
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path)
{
    validate(manifest, false);
    const auto text = dump_manifest(manifest);
    write_bytes(std::vector<std::uint8_t>(text.begin(), text.end()), path);
}

} // namespace speedest
