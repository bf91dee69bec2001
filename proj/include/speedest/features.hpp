#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "speedest/interchange.hpp"

namespace speedest {

/// One video reduced to the regressor inputs.
struct SampleRecord {
    std::string sample_id;
    double t = 0.0;         // seconds between the used endpoint frames
    double area_diff = 0.0; // first-frame area minus last-frame area, px^2
    double dist_diff = 0.0; // first-frame mean depth minus last-frame mean depth
    std::optional<double> speed_kmh;
    Perspective perspective = Perspective::unknown;
    // Endpoint frames actually used; equal to the literal first/last frame
    // unless the scan had to move inward.
    std::uint64_t first_frame = 0;
    std::uint64_t last_frame = 0;
};

enum class DepthRegion { mask, bbox };
enum class PrimarySelection { max_area, max_confidence };

std::string to_string(DepthRegion r);
DepthRegion parse_depth_region(const std::string& s);

struct ExtractionConfig {
    double confidence_threshold = 0.7;
    std::set<std::string> accepted_classes{"car"};
    DepthRegion depth_region = DepthRegion::mask;
    PrimarySelection primary_selection = PrimarySelection::max_area;

    void validate() const;
};

double bbox_area(const Detection& d);

/// Picks the subject vehicle among detections whose class is accepted and
/// whose confidence is strictly above the threshold. Ties are broken by
/// (confidence desc, x1 asc, y1 asc) so the result is order-independent.
Detection select_primary_vehicle(std::span<const Detection> detections, const ExtractionConfig& config);

/// Mean depth over the pixels where the mask is 1.
double region_mean_depth(const DepthRaster& depth, const MaskRaster& mask);

/// Mean depth over the pixels whose centres fall inside the box, after
/// clipping to the raster.
double region_mean_depth(const DepthRaster& depth, const BBox& box);

/// Half-open pixel ranges [col_begin, col_end) x [row_begin, row_end) whose
/// centres lie inside the box, clipped to a width x height grid.
struct PixelSpan {
    std::uint32_t col_begin = 0, col_end = 0, row_begin = 0, row_end = 0;
    bool empty() const { return col_begin >= col_end || row_begin >= row_end; }
};
PixelSpan covered_pixels(const BBox& box, std::uint32_t width, std::uint32_t height);

/// Loads the rasters referenced by a frame. Injected so extraction can run
/// on in-memory data as well as on manifests.
struct FrameRasters {
    std::optional<DepthRaster> depth;
    std::optional<MaskRaster> mask;
};
using RasterLoader = std::function<FrameRasters(const FrameObservation&)>;

RasterLoader manifest_loader(const DatasetManifest& manifest);

/// Reduces a frame sequence to (t, area_diff, dist_diff) using the first
/// and last usable frames. Frames without a primary vehicle at either end
/// are skipped inward.
SampleRecord extract_sample(std::span<const FrameObservation> frames, double fps, const ExtractionConfig& config,
                            const RasterLoader& loader);

/// Convenience wrapper for one manifest sample; carries over id, speed and perspective.
SampleRecord extract_sample(const DatasetManifest& manifest, const SampleEntry& sample, const ExtractionConfig& config);

// Features table: CSV with header
//   sample_id,t_seconds,area_diff_px2,dist_diff_depth,speed_kmh,perspective
void write_features(std::ostream& out, std::span<const SampleRecord> records);
void write_features(const std::filesystem::path& path, std::span<const SampleRecord> records);
std::vector<SampleRecord> read_features(std::istream& in);
std::vector<SampleRecord> read_features(const std::filesystem::path& path);

/// Shortest decimal that round-trips a double.
std::string format_double(double v);

} // namespace speedest
