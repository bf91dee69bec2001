#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "speedest/errors.hpp"
#include "speedest/features.hpp"
#include "speedest/interchange.hpp"
#include "speedest/regression.hpp"
#include "speedest/synth.hpp"

namespace py = pybind11;
using namespace speedest;

namespace {

using DepthArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template<typename T>
std::pair<std::uint32_t, std::uint32_t> shape_of(const py::array_t<T, py::array::c_style | py::array::forcecast>& a)
{
    if (a.ndim() != 2) {
        throw ValueError("raster arrays must be 2-D (height, width)");
    }
    return {static_cast<std::uint32_t>(a.shape(1)), static_cast<std::uint32_t>(a.shape(0))};
}

DepthRaster to_depth(const DepthArray& a)
{
    const auto [w, h] = shape_of(a);
    DepthRaster r{w, h, std::vector<float>(a.data(), a.data() + a.size())};
    validate(r);
    return r;
}

MaskRaster to_mask(const MaskArray& a)
{
    const auto [w, h] = shape_of(a);
    MaskRaster m{w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size())};
    validate(m);
    return m;
}

DepthArray from_depth(const DepthRaster& r)
{
    DepthArray out({py::ssize_t(r.height), py::ssize_t(r.width)});
    std::copy(r.values.begin(), r.values.end(), out.mutable_data());
    return out;
}

MaskArray from_mask(const MaskRaster& m)
{
    MaskArray out({py::ssize_t(m.height), py::ssize_t(m.width)});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

FeatureSet feature_set(const std::optional<std::vector<std::string>>& names)
{
    if (!names) {
        return FeatureSet::all();
    }
    FeatureSet s{{false, false, false}};
    for (const auto& n : *names) {
        s.enabled[static_cast<int>(parse_base_feature(n))] = true;
    }
    return s;
}

} // namespace

PYBIND11_MODULE(_speedest, m)
{
    m.doc() = "Vehicle speed estimation from bounding-box and depth features";

    auto base = py::register_exception<Error>(m, "SpeedestError", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<MissingFileError>(m, "MissingFileError", base.ptr());
    py::register_exception<BadMagicError>(m, "BadMagicError", base.ptr());
    py::register_exception<TruncatedFileError>(m, "TruncatedFileError", base.ptr());
    py::register_exception<NoVehicleError>(m, "NoVehicleError", base.ptr());
    py::register_exception<EmptyRegionError>(m, "EmptyRegionError", base.ptr());
    py::register_exception<RankDeficiencyError>(m, "RankDeficiencyError", base.ptr());
    py::register_exception<InfeasibleRangesError>(m, "InfeasibleRangesError", base.ptr());

    py::class_<BBox>(m, "BBox")
        .def(py::init<double, double, double, double>(), py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"))
        .def_readwrite("x1", &BBox::x1)
        .def_readwrite("y1", &BBox::y1)
        .def_readwrite("x2", &BBox::x2)
        .def_readwrite("y2", &BBox::y2)
        .def("__repr__", [](const BBox& b) {
            return "BBox(" + format_double(b.x1) + ", " + format_double(b.y1) + ", " + format_double(b.x2) + ", " +
                   format_double(b.y2) + ")";
        });

    py::class_<Detection>(m, "Detection")
        .def(py::init([](std::string label, double confidence, BBox box) {
                 return Detection{std::move(label), confidence, box};
             }),
             py::arg("class_label"), py::arg("confidence"), py::arg("bbox"))
        .def_readwrite("class_label", &Detection::class_label)
        .def_readwrite("confidence", &Detection::confidence)
        .def_readwrite("bbox", &Detection::bbox);

    py::class_<SampleRecord>(m, "SampleRecord")
        .def(py::init([](std::string id, double t, double area_diff, double dist_diff, std::optional<double> speed) {
                 SampleRecord r;
                 r.sample_id = std::move(id);
                 r.t = t;
                 r.area_diff = area_diff;
                 r.dist_diff = dist_diff;
                 r.speed_kmh = speed;
                 return r;
             }),
             py::arg("sample_id"), py::arg("t"), py::arg("area_diff"), py::arg("dist_diff"),
             py::arg("speed_kmh") = py::none())
        .def_readwrite("sample_id", &SampleRecord::sample_id)
        .def_readwrite("t", &SampleRecord::t)
        .def_readwrite("area_diff", &SampleRecord::area_diff)
        .def_readwrite("dist_diff", &SampleRecord::dist_diff)
        .def_readwrite("speed_kmh", &SampleRecord::speed_kmh)
        .def_readonly("first_frame", &SampleRecord::first_frame)
        .def_readonly("last_frame", &SampleRecord::last_frame);

    m.def("bbox_area", &bbox_area, py::arg("detection"));
    m.def(
        "select_primary_vehicle",
        [](const std::vector<Detection>& dets, double threshold, std::set<std::string> classes) {
            ExtractionConfig cfg;
            cfg.confidence_threshold = threshold;
            cfg.accepted_classes = std::move(classes);
            return select_primary_vehicle(dets, cfg);
        },
        py::arg("detections"), py::arg("confidence_threshold") = 0.7,
        py::arg("accepted_classes") = std::set<std::string>{"car"});
    m.def(
        "region_mean_depth",
        [](const DepthArray& depth, const MaskArray& mask) { return region_mean_depth(to_depth(depth), to_mask(mask)); },
        py::arg("depth"), py::arg("mask"), "Mean depth over pixels where mask == 1.");
    m.def(
        "region_mean_depth_bbox",
        [](const DepthArray& depth, const BBox& box) { return region_mean_depth(to_depth(depth), box); },
        py::arg("depth"), py::arg("bbox"));

    m.def("read_depth_raster", [](const std::filesystem::path& p) { return from_depth(read_depth_raster(p)); });
    m.def("write_depth_raster", [](const DepthArray& a, const std::filesystem::path& p) {
        write_depth_raster(to_depth(a), p);
    });
    m.def("read_mask_raster", [](const std::filesystem::path& p) { return from_mask(read_mask_raster(p)); });
    m.def("write_mask_raster", [](const MaskArray& a, const std::filesystem::path& p) { write_mask_raster(to_mask(a), p); });

    m.def(
        "extract_features",
        [](const std::filesystem::path& manifest_path, double threshold, const std::string& region) {
            ExtractionConfig cfg;
            cfg.confidence_threshold = threshold;
            cfg.depth_region = parse_depth_region(region);
            const auto manifest = read_manifest(manifest_path);
            std::vector<SampleRecord> records;
            std::vector<std::pair<std::string, std::string>> skipped;
            for (const auto& s : manifest.samples) {
                try {
                    records.push_back(extract_sample(manifest, s, cfg));
                } catch (const Error& e) {
                    skipped.emplace_back(s.sample_id, e.what());
                }
            }
            return py::make_tuple(records, skipped);
        },
        py::arg("manifest_path"), py::arg("confidence_threshold") = 0.7, py::arg("depth_region") = "mask",
        "Returns (records, [(sample_id, reason), ...]) for a manifest.");

    m.def(
        "expand_polynomial",
        [](double t, double area_diff, double dist_diff, int degree) {
            SampleRecord r;
            r.t = t;
            r.area_diff = area_diff;
            r.dist_diff = dist_diff;
            const auto ex = expand_polynomial(r, degree);
            std::vector<std::string> names;
            for (const auto& mono : ex.monomials) {
                names.push_back(mono.display_name);
            }
            return py::make_tuple(names, ex.values);
        },
        py::arg("t"), py::arg("area_diff"), py::arg("dist_diff"), py::arg("degree"));

    py::class_<RegressionModel>(m, "RegressionModel")
        .def_readonly("degree", &RegressionModel::degree)
        .def_readonly("intercept", &RegressionModel::intercept)
        .def_readonly("coefficients", &RegressionModel::coefficients)
        .def_readonly("feature_stds", &RegressionModel::feature_stds)
        .def_property_readonly("monomials",
                               [](const RegressionModel& model) {
                                   std::vector<std::string> names;
                                   for (const auto& mono : model.monomials) {
                                       names.push_back(mono.display_name);
                                   }
                                   return names;
                               })
        .def("predict", &predict, py::arg("record"))
        .def("to_json", &dump_model)
        .def_static("from_json", &parse_model)
        .def("feature_importance", [](const RegressionModel& model) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& fi : feature_importance(model)) {
                out.emplace_back(fi.name, fi.importance);
            }
            return out;
        });

    m.def(
        "fit",
        [](const std::vector<SampleRecord>& records, int degree, std::optional<std::vector<std::string>> base) {
            return fit_model(records, degree, feature_set(base));
        },
        py::arg("records"), py::arg("degree") = 1, py::arg("base_features") = py::none());
    m.def("r_squared", [](const std::vector<double>& a, const std::vector<double>& p) { return r_squared(a, p); });
    m.def("adjusted_r_squared", &adjusted_r_squared, py::arg("r2"), py::arg("n"), py::arg("p"));
    m.def("rmse", [](const std::vector<double>& a, const std::vector<double>& p) { return rmse(a, p); });
    m.def(
        "train_test_split",
        [](const std::vector<SampleRecord>& records, double test_fraction, std::uint64_t seed) {
            auto s = train_test_split(records, test_fraction, seed);
            return py::make_tuple(s.train, s.test);
        },
        py::arg("records"), py::arg("test_fraction") = 0.2, py::arg("seed") = 42);

    m.def(
        "project_vehicle",
        [](double focal_px, double width_m, double height_m, double initial_distance_m, double speed_kmh,
           double time_s, std::uint32_t image_width, std::uint32_t image_height) {
            ScenarioParams p;
            p.focal_px = focal_px;
            p.vehicle_width_m = width_m;
            p.vehicle_height_m = height_m;
            p.initial_distance_m = initial_distance_m;
            p.speed_kmh = speed_kmh;
            p.duration_s = std::max(time_s, 1e-9);
            p.image_width = image_width;
            p.image_height = image_height;
            const auto proj = project_vehicle(p, time_s);
            return py::make_tuple(proj.bbox, proj.distance_m);
        },
        py::arg("focal_px"), py::arg("vehicle_width_m"), py::arg("vehicle_height_m"), py::arg("initial_distance_m"),
        py::arg("speed_kmh"), py::arg("time_s"), py::arg("image_width") = 640, py::arg("image_height") = 480);

    m.def(
        "generate_dataset",
        [](std::size_t n, const std::filesystem::path& out_dir, std::uint64_t seed, std::pair<double, double> speed,
           std::pair<double, double> duration, std::pair<double, double> distance, std::uint64_t frame_stride,
           const std::string& depth_mode) {
            SynthRanges r;
            r.speed_kmh = {speed.first, speed.second};
            r.duration_s = {duration.first, duration.second};
            r.initial_distance_m = {distance.first, distance.second};
            r.frame_stride = frame_stride;
            r.depth_mode = parse_depth_mode(depth_mode);
            return generate_dataset(n, r, seed, out_dir).samples.size();
        },
        py::arg("n"), py::arg("out_dir"), py::arg("seed") = 0, py::arg("speed_kmh") = std::pair{5.0, 60.0},
        py::arg("duration_s") = std::pair{2.0, 6.0}, py::arg("initial_distance_m") = std::pair{40.0, 140.0},
        py::arg("frame_stride") = 30, py::arg("depth_mode") = "metric",
        "Writes a synthetic dataset and returns the sample count.");

#ifdef VERSION_INFO
    m.attr("__version__") = VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}
