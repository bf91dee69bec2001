#include <doctest.h>

#include <map>
#include <random>

#include "speedest/errors.hpp"
#include "speedest/features.hpp"
#include "speedest/synth.hpp"
#include "test_util.hpp"

using namespace speedest;
using speedest::testing::TempDir;

namespace {

SynthRanges fixed_ranges(double speed, double duration, double z0)
{
    SynthRanges r;
    r.speed_kmh = {speed, speed};
    r.duration_s = {duration, duration};
    r.initial_distance_m = {z0, z0};
    return r;
}

std::map<std::string, std::vector<std::uint8_t>> tree(const std::filesystem::path& root)
{
    std::map<std::string, std::vector<std::uint8_t>> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out[std::filesystem::relative(e.path(), root).string()] = speedest::testing::slurp(e.path());
        }
    }
    return out;
}

} // namespace

TEST_CASE("pinhole projection")
{
    ScenarioParams p;
    p.initial_distance_m = 10.0;
    p.speed_kmh = 0.0;
    p.image_width = 640;
    p.image_height = 480;
    const auto proj = project_vehicle(p, 0.0);
    CHECK(proj.bbox.x2 - proj.bbox.x1 == doctest::Approx(180.0));
    CHECK(proj.bbox.y2 - proj.bbox.y1 == doctest::Approx(150.0));
    CHECK(bbox_area({"car", 1, proj.bbox}) == doctest::Approx(27000.0));
    CHECK(proj.bbox.y2 == 480.0);
    CHECK((proj.bbox.x1 + proj.bbox.x2) / 2 == 320.0);

    SUBCASE("stationary vehicle keeps its box")
    {
        CHECK(project_vehicle(p, 0.7).bbox == proj.bbox);
    }
    SUBCASE("halving the distance quadruples the area")
    {
        p.initial_distance_m = 20.0;
        p.speed_kmh = 36.0;
        const double a0 = bbox_area({"car", 1, project_vehicle(p, 0.0).bbox});
        const double a1 = bbox_area({"car", 1, project_vehicle(p, 1.0).bbox});
        CHECK(project_vehicle(p, 1.0).distance_m == doctest::Approx(10.0));
        CHECK(a1 / a0 == doctest::Approx(4.0));
    }
    SUBCASE("time outside the clip")
    {
        CHECK_THROWS_AS(project_vehicle(p, -0.1), GeometryError);
        CHECK_THROWS_AS(project_vehicle(p, 2.0), GeometryError);
    }
}

TEST_CASE("scenario validation")
{
    ScenarioParams p;
    CHECK_NOTHROW(p.validate());
    p.speed_kmh = 100.0; // 27.8 m in 1 s from 20 m
    CHECK_THROWS_AS(p.validate(), GeometryError);
    p.speed_kmh = 36.0;
    p.initial_distance_m = 15.0; // 5 m at the end: 360 px wide in a 320 px image
    CHECK_THROWS_AS(p.validate(), GeometryError);
    p.initial_distance_m = 20000.0; // sub-pixel vehicle
    CHECK_THROWS_AS(p.validate(), GeometryError);
}

TEST_CASE("render_frame")
{
    ScenarioParams p;
    SUBCASE("noiseless metric depth over the mask is the distance")
    {
        for (std::uint64_t f : {0, 10, 30}) {
            const auto fr = render_frame(p, f);
            CHECK(region_mean_depth(fr.depth, fr.mask) == doctest::Approx(p.distance_at(f / p.fps)).epsilon(1e-7));
            CHECK(region_mean_depth(fr.depth, fr.observation.detections[0].bbox) ==
                  region_mean_depth(fr.depth, fr.mask));
            CHECK(fr.observation.detections[0].confidence == 0.99);
            CHECK(fr.observation.frame_index == f);
        }
    }
    SUBCASE("inverse relative depth is the reciprocal distance")
    {
        p.depth_mode = DepthMode::inverse_relative;
        p.initial_distance_m = 4.0;
        p.speed_kmh = 0.0;
        p.image_width = 640;
        p.image_height = 480;
        const auto fr = render_frame(p, 0);
        CHECK(region_mean_depth(fr.depth, fr.mask) == 0.25);
    }
    SUBCASE("same seed and frame give identical rasters")
    {
        p.depth_sigma = 0.5;
        p.bbox_sigma_px = 2.0;
        p.rng_seed = 77;
        const auto a = render_frame(p, 12);
        const auto b = render_frame(p, 12);
        CHECK(a.depth == b.depth);
        CHECK(a.mask == b.mask);
        CHECK(a.observation == b.observation);
        CHECK_FALSE(render_frame(p, 13).depth == a.depth);
        p.rng_seed = 78;
        CHECK_FALSE(render_frame(p, 12).depth == a.depth);
    }
}

TEST_CASE("generate_dataset kinematics example")
{
    TempDir dir;
    const auto m = generate_dataset(1, fixed_ranges(36.0, 1.0, 20.0), 5, dir.path());
    REQUIRE(m.samples.size() == 1);
    CHECK(*m.samples[0].ground_truth_speed_kmh == 36.0);
    const auto loaded = read_manifest(dir / "manifest.json");
    CHECK(loaded == m);
    const auto rec = extract_sample(loaded, loaded.samples[0], {});
    CHECK(rec.t == 1.0);
    CHECK(rec.dist_diff == 10.0);
    CHECK(rec.speed_kmh == 36.0);
    CHECK(std::filesystem::exists(dir / "scenario.json"));
}

TEST_CASE("generate_dataset with n = 0 writes an empty manifest only")
{
    TempDir dir;
    const auto m = generate_dataset(0, SynthRanges{}, 1, dir.path());
    CHECK(m.samples.empty());
    CHECK(read_manifest(dir / "manifest.json").samples.empty());
    for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
        CHECK_FALSE(e.is_directory());
    }
}

TEST_CASE("generate_dataset is byte-identical for a fixed seed")
{
    TempDir a, b, c;
    SynthRanges r;
    r.depth_sigma = 0.1;
    r.bbox_sigma_px = 0.5;
    r.frame_stride = 45;
    generate_dataset(3, r, 9, a.path());
    generate_dataset(3, r, 9, b.path());
    generate_dataset(3, r, 10, c.path());
    CHECK(tree(a.path()) == tree(b.path()));
    CHECK_FALSE(tree(a.path()) == tree(c.path()));
}

TEST_CASE("infeasible ranges fail after bounded resampling")
{
    TempDir dir;
    auto r = fixed_ranges(60.0, 6.0, 50.0); // travels 100 m from 50 m
    r.max_retries = 20;
    CHECK_THROWS_AS(generate_dataset(2, r, 1, dir.path()), InfeasibleRangesError);
    CHECK_FALSE(std::filesystem::exists(dir / "manifest.json"));
}

TEST_CASE("noiseless pipeline identity and area law")
{
    TempDir dir;
    SynthRanges r;
    r.frame_stride = 1000;
    const auto m = generate_dataset(20, r, 123, dir.path());
    const double k = r.focal_px * r.focal_px * r.vehicle_width_m * r.vehicle_height_m;
    for (const auto& s : m.samples) {
        const auto rec = extract_sample(m, s, {});
        CHECK(speedest::testing::relative_error(3.6 * rec.dist_diff / rec.t, *s.ground_truth_speed_kmh) <= 1e-9);
        const auto& f0 = s.frames.front();
        const auto& f1 = s.frames.back();
        const auto z0 = read_depth_raster(m.resolve(*f0.depth_path));
        const auto z1 = read_depth_raster(m.resolve(*f1.depth_path));
        const auto m0 = read_mask_raster(m.resolve(*f0.mask_path));
        const auto m1 = read_mask_raster(m.resolve(*f1.mask_path));
        const double d0 = region_mean_depth(z0, m0), d1 = region_mean_depth(z1, m1);
        CHECK(speedest::testing::relative_error(bbox_area(f0.detections[0]) * d0 * d0, k) <= 1e-6);
        CHECK(speedest::testing::relative_error(bbox_area(f1.detections[0]) * d1 * d1, k) <= 1e-6);
        CHECK(rec.area_diff < 0.0);
        CHECK(rec.dist_diff > 0.0);
    }
}

TEST_CASE("scenario file round-trips")
{
    SynthRanges r;
    r.speed_kmh = {10, 20};
    r.image_width = 100;
    r.depth_mode = DepthMode::inverse_relative;
    r.frame_stride = 7;
    const auto back = parse_scenario(dump_scenario(r, 4, 2));
    CHECK(back.speed_kmh.lo == 10);
    CHECK(back.speed_kmh.hi == 20);
    CHECK(back.image_width == 100);
    CHECK(back.depth_mode == DepthMode::inverse_relative);
    CHECK(back.frame_stride == 7);
    CHECK_THROWS_AS(parse_scenario(R"({"speed_kmh":[5,1]})"), ValidationError);
    CHECK_THROWS_AS(parse_scenario("{"), ParseError);
}
