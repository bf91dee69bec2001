#include "speedest/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "speedest/errors.hpp"
#include "speedest/features.hpp"
#include "speedest/rng.hpp"

namespace speedest {

namespace fs = std::filesystem;

std::string to_string(DepthMode m) { return m == DepthMode::metric ? "metric" : "inverse_relative"; }

DepthMode parse_depth_mode(const std::string& s)
{
    if (s == "metric") {
        return DepthMode::metric;
    }
    if (s == "inverse_relative") {
        return DepthMode::inverse_relative;
    }
    throw ValidationError("depth_mode must be 'metric' or 'inverse_relative', got '" + s + "'");
}

std::uint64_t ScenarioParams::last_frame_index() const
{
    return static_cast<std::uint64_t>(std::floor(duration_s * fps + 1e-9));
}

double ScenarioParams::distance_at(double time_s) const { return initial_distance_m - speed_kmh / 3.6 * time_s; }

void ScenarioParams::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(std::isfinite(v) && v > 0.0)) {
            throw GeometryError(std::string(name) + " must be > 0");
        }
    };
    positive(focal_px, "focal_px");
    positive(vehicle_width_m, "vehicle_width_m");
    positive(vehicle_height_m, "vehicle_height_m");
    positive(initial_distance_m, "initial_distance_m");
    positive(fps, "fps");
    positive(duration_s, "duration_s");
    if (!(std::isfinite(speed_kmh) && speed_kmh >= 0.0)) {
        throw GeometryError("speed_kmh must be >= 0");
    }
    if (image_width == 0 || image_height == 0) {
        throw GeometryError("image size must be at least 1x1");
    }
    if (!(bbox_sigma_px >= 0.0) || !(depth_sigma >= 0.0)) {
        throw GeometryError("noise sigmas must be >= 0");
    }
    const double z_final = distance_at(duration_s);
    if (!(z_final > 0.0)) {
        throw GeometryError("vehicle reaches the camera before the clip ends");
    }
    if (focal_px * vehicle_width_m / z_final > image_width || focal_px * vehicle_height_m / z_final > image_height) {
        throw GeometryError("vehicle exceeds the image at the final distance");
    }
    if (last_frame_index() == 0) {
        throw GeometryError("clip holds a single frame");
    }
    const double w0 = focal_px * vehicle_width_m / initial_distance_m;
    const double h0 = focal_px * vehicle_height_m / initial_distance_m;
    const BBox far{(image_width - w0) / 2.0, image_height - h0, (image_width + w0) / 2.0, double(image_height)};
    if (covered_pixels(far, image_width, image_height).empty()) {
        throw GeometryError("vehicle covers no pixel at the initial distance");
    }
}

Projection project_vehicle(const ScenarioParams& params, double time_s)
{
    if (!(time_s >= 0.0 && time_s <= params.duration_s + 1e-9)) {
        throw GeometryError("time outside the clip");
    }
    const double z = params.distance_at(time_s);
    if (!(z > 0.0)) {
        throw GeometryError("vehicle distance must stay positive");
    }
    const double w = params.focal_px * params.vehicle_width_m / z;
    const double h = params.focal_px * params.vehicle_height_m / z;
    const double cx = params.image_width / 2.0;
    const double bottom = params.image_height;
    return {{cx - w / 2.0, bottom - h, cx + w / 2.0, bottom}, z};
}

RenderedFrame render_frame(const ScenarioParams& params, std::uint64_t frame_index)
{
    const double time_s = static_cast<double>(frame_index) / params.fps;
    const auto proj = project_vehicle(params, time_s);
    const auto w = params.image_width;
    const auto h = params.image_height;
    const bool metric = params.depth_mode == DepthMode::metric;

    SplitMix64 gen(substream_seed(params.rng_seed, frame_index));

    RenderedFrame out;
    out.mask = {w, h, std::vector<std::uint8_t>(std::size_t(w) * h, 0)};
    const auto span = covered_pixels(proj.bbox, w, h);
    for (auto row = span.row_begin; row < span.row_end; ++row) {
        for (auto col = span.col_begin; col < span.col_end; ++col) {
            out.mask.values[std::size_t(row) * w + col] = 1;
        }
    }

    // Background sits well beyond the vehicle's range.
    const double background_z = 4.0 * params.initial_distance_m;
    const float vehicle_value = static_cast<float>(metric ? proj.distance_m : 1.0 / proj.distance_m);
    const float background_value = static_cast<float>(metric ? background_z : 1.0 / background_z);
    out.depth = {w, h, std::vector<float>(std::size_t(w) * h)};
    for (std::size_t i = 0; i < out.depth.values.size(); ++i) {
        out.depth.values[i] = out.mask.values[i] ? vehicle_value : background_value;
    }
    if (params.depth_sigma > 0.0) {
        for (auto& v : out.depth.values) {
            v = static_cast<float>(v + params.depth_sigma * gen.normal());
        }
    }

    BBox box = proj.bbox;
    if (params.bbox_sigma_px > 0.0) {
        box.x1 += params.bbox_sigma_px * gen.normal();
        box.y1 += params.bbox_sigma_px * gen.normal();
        box.x2 += params.bbox_sigma_px * gen.normal();
        box.y2 += params.bbox_sigma_px * gen.normal();
        if (box.x1 > box.x2) {
            std::swap(box.x1, box.x2);
        }
        if (box.y1 > box.y2) {
            std::swap(box.y1, box.y2);
        }
    }
    out.observation.frame_index = frame_index;
    out.observation.detections.push_back({"car", detection_confidence, box});
    return out;
}

void SynthRanges::validate() const
{
    for (const auto* r : {&speed_kmh, &duration_s, &initial_distance_m}) {
        if (!(std::isfinite(r->lo) && std::isfinite(r->hi) && r->lo <= r->hi)) {
            throw ValidationError("ranges need finite lo <= hi");
        }
    }
    if (speed_kmh.lo < 0.0 || duration_s.lo <= 0.0 || initial_distance_m.lo <= 0.0) {
        throw ValidationError("speed must be >= 0, duration and initial distance > 0");
    }
    if (!(fps > 0.0) || frame_stride == 0 || max_retries < 1) {
        throw ValidationError("fps must be > 0, frame_stride >= 1, max_retries >= 1");
    }
}

ScenarioParams sample_scenario(const SynthRanges& ranges, std::uint64_t seed, std::uint64_t index)
{
    ranges.validate();
    SplitMix64 gen(substream_seed(seed, index));
    auto snap = [](double v) { return std::round(v / distance_grid_m) * distance_grid_m; };

    ScenarioParams p;
    p.focal_px = ranges.focal_px;
    p.vehicle_width_m = ranges.vehicle_width_m;
    p.vehicle_height_m = ranges.vehicle_height_m;
    p.fps = ranges.fps;
    p.image_width = ranges.image_width;
    p.image_height = ranges.image_height;
    p.depth_mode = ranges.depth_mode;
    p.bbox_sigma_px = ranges.bbox_sigma_px;
    p.depth_sigma = ranges.depth_sigma;
    p.rng_seed = gen.next();

    for (int attempt = 0; attempt < ranges.max_retries; ++attempt) {
        const double speed = gen.uniform(ranges.speed_kmh.lo, ranges.speed_kmh.hi);
        const double duration = gen.uniform(ranges.duration_s.lo, ranges.duration_s.hi);
        p.initial_distance_m = snap(gen.uniform(ranges.initial_distance_m.lo, ranges.initial_distance_m.hi));

        // Clip ends on a whole frame; travel distance is snapped to the grid
        // and the speed recomputed from it.
        const auto last = static_cast<std::uint64_t>(std::floor(duration * p.fps + 1e-9));
        if (last == 0) {
            continue;
        }
        p.duration_s = static_cast<double>(last) / p.fps;
        const double travel = snap(speed / 3.6 * p.duration_s);
        p.speed_kmh = 3.6 * travel / p.duration_s;
        try {
            p.validate();
            return p;
        } catch (const GeometryError&) {
        }
    }
    throw InfeasibleRangesError("no feasible scenario for sample " + std::to_string(index) + " after " +
                                std::to_string(ranges.max_retries) + " draws");
}

namespace {

std::string sample_name(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "syn_%05zu", i);
    return buf;
}

std::string frame_name(std::uint64_t f)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "f%06llu", static_cast<unsigned long long>(f));
    return buf;
}

} // namespace

DatasetManifest generate_dataset(std::size_t n, const SynthRanges& ranges, std::uint64_t seed, const fs::path& out_dir)
{
    ranges.validate();
    // Draw every scenario first so infeasible ranges fail before any write.
    std::vector<ScenarioParams> scenarios;
    scenarios.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        scenarios.push_back(sample_scenario(ranges, seed, i));
    }

    fs::create_directories(out_dir);
    DatasetManifest manifest;
    manifest.base_dir = out_dir;
    if (ranges.depth_mode == DepthMode::metric) {
        manifest.metadata = {DepthUnits::metric_m, DepthConvention::larger_is_farther};
    } else {
        manifest.metadata = {DepthUnits::relative, DepthConvention::larger_is_nearer};
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = scenarios[i];
        SampleEntry entry;
        entry.sample_id = sample_name(i);
        entry.fps = p.fps;
        entry.ground_truth_speed_kmh = p.speed_kmh;
        entry.perspective = Perspective::front;
        fs::create_directories(out_dir / entry.sample_id);

        const auto last = p.last_frame_index();
        std::vector<std::uint64_t> indices;
        for (std::uint64_t f = 0; f < last; f += ranges.frame_stride) {
            indices.push_back(f);
        }
        indices.push_back(last);
        for (auto f : indices) {
            auto frame = render_frame(p, f);
            const auto stem = entry.sample_id + "/" + frame_name(f);
            frame.observation.depth_path = stem + ".depth";
            frame.observation.mask_path = stem + ".mask";
            write_depth_raster(frame.depth, out_dir / *frame.observation.depth_path);
            write_mask_raster(frame.mask, out_dir / *frame.observation.mask_path);
            entry.frames.push_back(std::move(frame.observation));
        }
        manifest.samples.push_back(std::move(entry));
    }

    write_manifest(manifest, out_dir / "manifest.json");
    std::ofstream(out_dir / "scenario.json", std::ios::trunc) << dump_scenario(ranges, n, seed);
    return manifest;
}

namespace {

using json = nlohmann::ordered_json;

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range parse_range(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 2) {
        throw ParseError("range must be [lo, hi]");
    }
    return {v[0], v[1]};
}

} // namespace

std::string dump_scenario(const SynthRanges& r, std::size_t n, std::uint64_t seed)
{
    json doc;
    doc["n"] = n;
    doc["seed"] = seed;
    doc["speed_kmh"] = range_json(r.speed_kmh);
    doc["duration_s"] = range_json(r.duration_s);
    doc["initial_distance_m"] = range_json(r.initial_distance_m);
    doc["focal_px"] = r.focal_px;
    doc["vehicle_width_m"] = r.vehicle_width_m;
    doc["vehicle_height_m"] = r.vehicle_height_m;
    doc["fps"] = r.fps;
    doc["image_size"] = {r.image_width, r.image_height};
    doc["depth_mode"] = to_string(r.depth_mode);
    doc["bbox_sigma_px"] = r.bbox_sigma_px;
    doc["depth_sigma"] = r.depth_sigma;
    doc["frame_stride"] = r.frame_stride;
    doc["max_retries"] = r.max_retries;
    return doc.dump(2) + "\n";
}

SynthRanges parse_scenario(const std::string& text)
{
    SynthRanges r;
    try {
        const auto doc = json::parse(text);
        if (doc.contains("speed_kmh")) r.speed_kmh = parse_range(doc["speed_kmh"]);
        if (doc.contains("duration_s")) r.duration_s = parse_range(doc["duration_s"]);
        if (doc.contains("initial_distance_m")) r.initial_distance_m = parse_range(doc["initial_distance_m"]);
        r.focal_px = doc.value("focal_px", r.focal_px);
        r.vehicle_width_m = doc.value("vehicle_width_m", r.vehicle_width_m);
        r.vehicle_height_m = doc.value("vehicle_height_m", r.vehicle_height_m);
        r.fps = doc.value("fps", r.fps);
        if (doc.contains("image_size")) {
            const auto size = doc["image_size"].get<std::array<std::uint32_t, 2>>();
            r.image_width = size[0];
            r.image_height = size[1];
        }
        if (doc.contains("depth_mode")) r.depth_mode = parse_depth_mode(doc["depth_mode"].get<std::string>());
        r.bbox_sigma_px = doc.value("bbox_sigma_px", r.bbox_sigma_px);
        r.depth_sigma = doc.value("depth_sigma", r.depth_sigma);
        r.frame_stride = doc.value("frame_stride", r.frame_stride);
        r.max_retries = doc.value("max_retries", r.max_retries);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed scenario file: ") + e.what());
    }
    r.validate();
    return r;
}

} // namespace speedest
