#include "speedest/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "speedest/errors.hpp"

namespace speedest {

std::string to_string(DepthRegion r) { return r == DepthRegion::mask ? "mask" : "bbox"; }

DepthRegion parse_depth_region(const std::string& s)
{
    if (s == "mask") {
        return DepthRegion::mask;
    }
    if (s == "bbox") {
        return DepthRegion::bbox;
    }
    throw ValidationError("depth_region must be 'mask' or 'bbox', got '" + s + "'");
}

void ExtractionConfig::validate() const
{
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
        throw ValidationError("confidence_threshold must lie in [0,1]");
    }
    if (accepted_classes.empty()) {
        throw ValidationError("accepted_classes must be nonempty");
    }
}

double bbox_area(const Detection& d) { return (d.bbox.x2 - d.bbox.x1) * (d.bbox.y2 - d.bbox.y1); }

Detection select_primary_vehicle(std::span<const Detection> detections, const ExtractionConfig& config)
{
    const Detection* best = nullptr;
    // Lexicographic key, larger is better.
    auto key = [&](const Detection& d) {
        const double primary = config.primary_selection == PrimarySelection::max_area ? bbox_area(d) : d.confidence;
        return std::make_tuple(primary, d.confidence, -d.bbox.x1, -d.bbox.y1);
    };
    for (const auto& d : detections) {
        if (!config.accepted_classes.contains(d.class_label) || !(d.confidence > config.confidence_threshold)) {
            continue;
        }
        if (best == nullptr || key(d) > key(*best)) {
            best = &d;
        }
    }
    if (best == nullptr) {
        throw NoVehicleError("no accepted detection above confidence " + format_double(config.confidence_threshold));
    }
    return *best;
}

double region_mean_depth(const DepthRaster& depth, const MaskRaster& mask)
{
    if (mask.width != depth.width || mask.height != depth.height || mask.values.size() != depth.values.size()) {
        throw DimensionMismatchError("mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                     " does not match depth " + std::to_string(depth.width) + "x" +
                                     std::to_string(depth.height));
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < depth.values.size(); ++i) {
        if (mask.values[i] == 1) {
            sum += static_cast<double>(depth.values[i]);
            ++n;
        }
    }
    if (n == 0) {
        throw EmptyRegionError("mask selects no vehicle pixels");
    }
    return sum / static_cast<double>(n);
}

PixelSpan covered_pixels(const BBox& box, std::uint32_t width, std::uint32_t height)
{
    // Pixel c is covered when its centre c + 0.5 lies in [lo, hi).
    auto range = [](double lo, double hi, std::uint32_t size) {
        const double b = std::clamp(std::ceil(lo - 0.5), 0.0, double(size));
        const double e = std::clamp(std::ceil(hi - 0.5), 0.0, double(size));
        return std::pair{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(e)};
    };
    const auto [c0, c1] = range(box.x1, box.x2, width);
    const auto [r0, r1] = range(box.y1, box.y2, height);
    return {c0, c1, r0, r1};
}

double region_mean_depth(const DepthRaster& depth, const BBox& box)
{
    const auto span = covered_pixels(box, depth.width, depth.height);
    if (span.empty()) {
        throw EmptyRegionError("bbox covers no raster pixels");
    }
    double sum = 0.0;
    for (auto row = span.row_begin; row < span.row_end; ++row) {
        for (auto col = span.col_begin; col < span.col_end; ++col) {
            sum += static_cast<double>(depth.at(col, row));
        }
    }
    const auto n = std::size_t(span.col_end - span.col_begin) * (span.row_end - span.row_begin);
    return sum / static_cast<double>(n);
}

RasterLoader manifest_loader(const DatasetManifest& manifest)
{
    return [&manifest](const FrameObservation& f) {
        FrameRasters r;
        if (f.depth_path) {
            r.depth = read_depth_raster(manifest.resolve(*f.depth_path));
        }
        if (f.mask_path) {
            r.mask = read_mask_raster(manifest.resolve(*f.mask_path));
        }
        return r;
    };
}

namespace {

double endpoint_depth(const FrameObservation& frame, const Detection& vehicle, const ExtractionConfig& config,
                      const RasterLoader& loader)
{
    const auto rasters = loader(frame);
    const auto ctx = "frame " + std::to_string(frame.frame_index);
    if (!rasters.depth) {
        throw ValidationError(ctx + " has no depth raster");
    }
    if (config.depth_region == DepthRegion::bbox) {
        return region_mean_depth(*rasters.depth, vehicle.bbox);
    }
    if (!rasters.mask) {
        throw ValidationError(ctx + " has no mask raster");
    }
    try {
        return region_mean_depth(*rasters.depth, *rasters.mask);
    } catch (const EmptyRegionError& e) {
        throw EmptyRegionError(ctx + ": " + e.what());
    }
}

} // namespace

SampleRecord extract_sample(std::span<const FrameObservation> frames, double fps, const ExtractionConfig& config,
                            const RasterLoader& loader)
{
    config.validate();
    if (frames.size() < 2) {
        throw InsufficientFramesError("need at least 2 frames, got " + std::to_string(frames.size()));
    }
    if (!(fps > 0.0)) {
        throw ValidationError("fps must be > 0");
    }
    std::vector<const FrameObservation*> order;
    order.reserve(frames.size());
    for (const auto& f : frames) {
        order.push_back(&f);
    }
    std::sort(order.begin(), order.end(),
              [](const auto* a, const auto* b) { return a->frame_index < b->frame_index; });

    auto usable = [&](const FrameObservation* f) -> std::optional<Detection> {
        try {
            return select_primary_vehicle(f->detections, config);
        } catch (const NoVehicleError&) {
            return std::nullopt;
        }
    };

    std::size_t first = 0;
    std::optional<Detection> first_vehicle;
    for (; first < order.size() && !(first_vehicle = usable(order[first])); ++first) {
    }
    std::size_t last = order.size();
    std::optional<Detection> last_vehicle;
    while (last > first + 1) {
        --last;
        if ((last_vehicle = usable(order[last]))) {
            break;
        }
    }
    if (!first_vehicle || !last_vehicle || last <= first) {
        throw NoVehicleError("no usable pair of frames with a detected vehicle");
    }

    const auto& f0 = *order[first];
    const auto& f1 = *order[last];
    SampleRecord rec;
    rec.first_frame = f0.frame_index;
    rec.last_frame = f1.frame_index;
    rec.t = static_cast<double>(f1.frame_index - f0.frame_index) / fps;
    rec.area_diff = bbox_area(*first_vehicle) - bbox_area(*last_vehicle);
    rec.dist_diff = endpoint_depth(f0, *first_vehicle, config, loader) - endpoint_depth(f1, *last_vehicle, config, loader);
    return rec;
}

SampleRecord extract_sample(const DatasetManifest& manifest, const SampleEntry& sample, const ExtractionConfig& config)
{
    auto rec = extract_sample(sample.frames, sample.fps, config, manifest_loader(manifest));
    rec.sample_id = sample.sample_id;
    rec.speed_kmh = sample.ground_truth_speed_kmh;
    rec.perspective = sample.perspective;
    return rec;
}

// ---------------------------------------------------------------------------
// Features table

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

namespace {

constexpr const char* features_header = "sample_id,t_seconds,area_diff_px2,dist_diff_depth,speed_kmh,perspective";

double parse_double(const std::string& s, std::size_t line, const char* column)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ParseError("features line " + std::to_string(line) + ": bad " + column + " '" + s + "'");
    }
    return v;
}

} // namespace

void write_features(std::ostream& out, std::span<const SampleRecord> records)
{
    std::vector<const SampleRecord*> sorted;
    for (const auto& r : records) {
        sorted.push_back(&r);
    }
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->sample_id < b->sample_id; });
    out << features_header << '\n';
    for (const auto* r : sorted) {
        out << r->sample_id << ',' << format_double(r->t) << ',' << format_double(r->area_diff) << ','
            << format_double(r->dist_diff) << ',' << (r->speed_kmh ? format_double(*r->speed_kmh) : "") << ','
            << to_string(r->perspective) << '\n';
    }
}

void write_features(const std::filesystem::path& path, std::span<const SampleRecord> records)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    write_features(out, records);
}

std::vector<SampleRecord> read_features(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != features_header) {
        throw ParseError(std::string("features table must start with header: ") + features_header);
    }
    std::vector<SampleRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cols.push_back(cell);
        }
        if (line.back() == ',') {
            cols.emplace_back();
        }
        if (cols.size() != 6) {
            throw ParseError("features line " + std::to_string(lineno) + ": expected 6 columns");
        }
        SampleRecord r;
        r.sample_id = cols[0];
        r.t = parse_double(cols[1], lineno, "t_seconds");
        r.area_diff = parse_double(cols[2], lineno, "area_diff_px2");
        r.dist_diff = parse_double(cols[3], lineno, "dist_diff_depth");
        if (!cols[4].empty()) {
            r.speed_kmh = parse_double(cols[4], lineno, "speed_kmh");
        }
        r.perspective = parse_perspective(cols[5]);
        if (!(r.t > 0.0)) {
            throw ValidationError("sample '" + r.sample_id + "': t_seconds must be > 0");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<SampleRecord> read_features(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw MissingFileError("cannot open features table " + path.string());
    }
    return read_features(in);
}

} // namespace speedest
