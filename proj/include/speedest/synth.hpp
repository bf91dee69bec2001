#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "speedest/interchange.hpp"

namespace speedest {

enum class DepthMode { metric, inverse_relative };

std::string to_string(DepthMode m);
DepthMode parse_depth_mode(const std::string& s);

/// A constant-speed vehicle driving straight at a pinhole camera.
struct ScenarioParams {
    double focal_px = 1000.0;
    double vehicle_width_m = 1.8;
    double vehicle_height_m = 1.5;
    double initial_distance_m = 20.0;
    double speed_kmh = 36.0;
    double fps = 30.0;
    double duration_s = 1.0;
    std::uint32_t image_width = 320;
    std::uint32_t image_height = 240;
    DepthMode depth_mode = DepthMode::metric;
    double bbox_sigma_px = 0.0;
    double depth_sigma = 0.0;
    std::uint64_t rng_seed = 0;

    /// Index of the last frame inside the clip.
    std::uint64_t last_frame_index() const;
    double distance_at(double time_s) const;
    /// Throws GeometryError when the vehicle would reach the camera, leave the
    /// image, or cover no pixel.
    void validate() const;
};

struct Projection {
    BBox bbox;
    double distance_m = 0.0;
};

/// Pinhole projection: box size f*W/Z by f*H/Z, centred horizontally with
/// its bottom edge on the bottom image row.
Projection project_vehicle(const ScenarioParams& params, double time_s);

struct RenderedFrame {
    FrameObservation observation;
    DepthRaster depth;
    MaskRaster mask;
};

/// Renders frame `frame_index` (time frame_index / fps). Noise is drawn from
/// a substream keyed on (rng_seed, frame_index).
RenderedFrame render_frame(const ScenarioParams& params, std::uint64_t frame_index);

inline constexpr double detection_confidence = 0.99;

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sampling ranges and fixed settings for a synthetic dataset.
struct SynthRanges {
    Range speed_kmh{5.0, 60.0};
    Range duration_s{2.0, 6.0};
    Range initial_distance_m{40.0, 140.0};
    double focal_px = 1000.0;
    double vehicle_width_m = 1.8;
    double vehicle_height_m = 1.5;
    double fps = 30.0;
    std::uint32_t image_width = 320;
    std::uint32_t image_height = 240;
    DepthMode depth_mode = DepthMode::metric;
    double bbox_sigma_px = 0.0;
    double depth_sigma = 0.0;
    // Frames 0, stride, 2*stride, ... plus the last frame are rendered.
    std::uint64_t frame_stride = 30;
    int max_retries = 1000;

    void validate() const;
};

/// Distances are drawn on this grid (metres) so float32 depth rasters hold
/// the endpoint distances exactly.
inline constexpr double distance_grid_m = 1.0 / 1024.0;

/// Draws the scenario for sample `index`; resamples infeasible draws up to
/// max_retries times, then throws InfeasibleRangesError.
ScenarioParams sample_scenario(const SynthRanges& ranges, std::uint64_t seed, std::uint64_t index);

/// Writes `n` samples (rasters, manifest.json, scenario.json) under `out_dir`
/// and returns the manifest.
DatasetManifest generate_dataset(std::size_t n, const SynthRanges& ranges, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

std::string dump_scenario(const SynthRanges& ranges, std::size_t n, std::uint64_t seed);
SynthRanges parse_scenario(const std::string& text);

} // namespace speedest
