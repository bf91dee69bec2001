#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace speedest {

/// Axis-aligned box in pixel coordinates, origin at the top-left corner.
struct BBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
    std::string class_label;
    double confidence = 0.0;
    BBox bbox;

    friend bool operator==(const Detection&, const Detection&) = default;
};

enum class DepthConvention { larger_is_nearer, larger_is_farther };
enum class DepthUnits { relative, metric_m };
enum class Perspective { front, side, unknown };

std::string to_string(DepthConvention c);
std::string to_string(DepthUnits u);
std::string to_string(Perspective p);
DepthConvention parse_depth_convention(const std::string& s);
DepthUnits parse_depth_units(const std::string& s);
Perspective parse_perspective(const std::string& s);

/// Row-major float32 depth grid.
struct DepthRaster {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<float> values;

    float at(std::uint32_t col, std::uint32_t row) const { return values[std::size_t(row) * width + col]; }
    friend bool operator==(const DepthRaster&, const DepthRaster&) = default;
};

/// Row-major binary vehicle mask, 0 = background and 1 = vehicle.
struct MaskRaster {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> values;

    std::size_t count() const;
    friend bool operator==(const MaskRaster&, const MaskRaster&) = default;
};

struct FrameObservation {
    std::uint64_t frame_index = 0;
    std::vector<Detection> detections;
    std::optional<std::string> depth_path; // relative to the manifest directory
    std::optional<std::string> mask_path;

    friend bool operator==(const FrameObservation&, const FrameObservation&) = default;
};

struct SampleEntry {
    std::string sample_id;
    double fps = 0.0;
    std::vector<FrameObservation> frames;
    std::optional<double> ground_truth_speed_kmh;
    Perspective perspective = Perspective::unknown;

    friend bool operator==(const SampleEntry&, const SampleEntry&) = default;
};

struct DatasetMetadata {
    DepthUnits depth_units = DepthUnits::relative;
    DepthConvention depth_convention = DepthConvention::larger_is_nearer;

    friend bool operator==(const DatasetMetadata&, const DatasetMetadata&) = default;
};

struct DatasetManifest {
    DatasetMetadata metadata;
    std::vector<SampleEntry> samples;
    // Directory the relative raster paths resolve against. Not serialized.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
    friend bool operator==(const DatasetManifest& a, const DatasetManifest& b)
    {
        return a.metadata == b.metadata && a.samples == b.samples;
    }
};

// Raster files. Both formats are little-endian regardless of host order:
//   depth: "DPTH" 0x01 width:u32 height:u32 float32[width*height]
//   mask:  "MASK" 0x01 width:u32 height:u32 u8[width*height] in {0,1}
inline constexpr std::size_t raster_header_size = 13;

void validate(const DepthRaster& raster);
void validate(const MaskRaster& mask);

DepthRaster read_depth_raster(const std::filesystem::path& path);
void write_depth_raster(const DepthRaster& raster, const std::filesystem::path& path);
MaskRaster read_mask_raster(const std::filesystem::path& path);
void write_mask_raster(const MaskRaster& mask, const std::filesystem::path& path);

// In-memory codecs used by the file functions.
std::vector<std::uint8_t> encode_depth_raster(const DepthRaster& raster);
DepthRaster decode_depth_raster(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_mask_raster(const MaskRaster& mask);
MaskRaster decode_mask_raster(const std::vector<std::uint8_t>& bytes);

/// Checks every manifest invariant. Errors name the offending sample_id and field.
void validate(const DatasetManifest& manifest, bool check_files);

/// Parses and validates a manifest document. Referenced raster files are
/// checked for existence only.
DatasetManifest read_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir, bool check_files);
std::string dump_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

} // namespace speedest
