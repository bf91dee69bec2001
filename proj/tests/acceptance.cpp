// Acceptance suite: one line per criterion, nonzero exit when any fails.
// All data comes from the synthetic pinhole oracle.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "speedest/errors.hpp"
#include "speedest/features.hpp"
#include "speedest/interchange.hpp"
#include "speedest/regression.hpp"
#include "speedest/synth.hpp"
#include "test_util.hpp"

using namespace speedest;
using speedest::testing::relative_error;
using speedest::testing::TempDir;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Criterion {
    std::string name;
    double time_limit_s; // <= 0 means no limit
    std::function<Outcome()> body;
};

// Fails the outcome with a message; returns false so callers can bail early.
bool expect(Outcome& o, bool cond, const std::string& what)
{
    if (!cond && o.pass) {
        o.pass = false;
        o.detail = what;
    }
    return cond;
}

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

constexpr std::uint64_t split_seed = 42;
constexpr double test_fraction = 0.2;

std::vector<SampleRecord> synth_features(const SynthRanges& ranges, std::size_t n, std::uint64_t seed,
                                         const std::filesystem::path& dir, DatasetManifest& manifest)
{
    manifest = generate_dataset(n, ranges, seed, dir);
    manifest = read_manifest(dir / "manifest.json");
    std::vector<SampleRecord> out;
    for (const auto& s : manifest.samples) {
        out.push_back(extract_sample(manifest, s, {}));
    }
    return out;
}

MetricBlock held_out(const Split& split, int degree, const FeatureSet& features)
{
    const auto model = fit_model(split.train, degree, features);
    return evaluate(model, split.test).metrics;
}

Outcome ols_oracle()
{
    Outcome o;
    std::mt19937_64 gen(20240601);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int p = 1 + int(gen() % 19);
        const int n_min = std::max(10, 2 * p + 2);
        const int n = n_min + int(gen() % std::uint64_t(200 - n_min + 1));
        Eigen::MatrixXd x(n, p);
        Eigen::VectorXd y(n);
        std::vector<std::vector<double>> rows(n, std::vector<double>(p));
        std::vector<double> ys(n);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < p; ++j) {
                rows[i][j] = x(i, j) = z(gen);
                s += (j + 1) * x(i, j);
            }
            ys[i] = y(i) = 1.5 + s + 0.1 * z(gen);
        }
        const auto fit = fit_least_squares(x, y);
        const auto oracle = speedest::testing::normal_equations_solve(rows, ys);
        double num2 = std::pow(fit.intercept - oracle[0], 2), den2 = oracle[0] * oracle[0];
        for (int j = 0; j < p; ++j) {
            num2 += std::pow(fit.coefficients[j] - oracle[j + 1], 2);
            den2 += oracle[j + 1] * oracle[j + 1];
        }
        worst = std::max(worst, std::sqrt(num2 / den2));
    }
    expect(o, worst <= 1e-8, "max relative deviation " + num(worst));
    o.detail = o.pass ? "max relative deviation " + num(worst) : o.detail;
    return o;
}

Outcome metric_identities()
{
    Outcome o;
    const std::vector<double> a{3, 7, 1, 9, 4};
    std::vector<double> mean(a.size(), 4.8), shifted;
    const double c = -2.75;
    for (double v : a) {
        shifted.push_back(v + c);
    }
    expect(o, r_squared(a, a) == 1.0, "R2 of perfect predictions != 1");
    expect(o, std::abs(r_squared(a, mean)) <= 1e-15, "R2 of mean predictor != 0");
    expect(o, std::abs(rmse(a, shifted) - std::abs(c)) <= 1e-12, "RMSE of constant offset != |c|");
    const double adj = adjusted_r_squared(0.5, 10, 2);
    expect(o, std::abs(adj - 0.357143) <= 1e-6, "adjusted_r_squared(0.5,10,2) = " + num(adj));
    if (o.pass) {
        o.detail = "adj_r2(0.5,10,2)=" + num(adj);
    }
    return o;
}

Outcome pipeline_identity()
{
    Outcome o;
    TempDir dir;
    SynthRanges ranges;
    ranges.duration_s = {4.0, 4.0};
    ranges.speed_kmh = {5.0, 60.0};
    ranges.frame_stride = 1000;
    DatasetManifest manifest;
    const auto recs = synth_features(ranges, 100, 101, dir.path(), manifest);
    if (!expect(o, recs.size() == 100, "extracted " + std::to_string(recs.size()) + " of 100")) {
        return o;
    }
    double worst = 0.0;
    for (const auto& r : recs) {
        worst = std::max(worst, relative_error(3.6 * r.dist_diff / r.t, *r.speed_kmh));
        expect(o, r.t == 4.0, "duration not 4 s for " + r.sample_id);
    }
    expect(o, worst <= 1e-9, "speed identity violated, worst relative error " + num(worst));

    const auto split = train_test_split(recs, test_fraction, split_seed);
    // With t constant, every power of t duplicates the intercept, so the
    // cubic expansion runs on the two varying base features.
    const auto lin = held_out(split, 1, FeatureSet::only(BaseFeature::dist_diff));
    const auto cubic = held_out(split, 3, FeatureSet::without(BaseFeature::t));
    for (const auto& [label, m] : {std::pair{"degree-1 on dist_diff", lin}, std::pair{"degree-3", cubic}}) {
        expect(o, m.r2 && *m.r2 >= 0.999, std::string(label) + " held-out R2 " + num(m.r2.value_or(NAN)));
        expect(o, m.rmse <= 0.2, std::string(label) + " held-out RMSE " + num(m.rmse));
    }
    if (o.pass) {
        o.detail = "worst identity err " + num(worst) + "; deg1 R2=" + num(*lin.r2) + " RMSE=" + num(lin.rmse) +
                   "; deg3 R2=" + num(*cubic.r2) + " RMSE=" + num(cubic.rmse);
    }
    return o;
}

// Shared by the approximation and ablation criteria.
struct VariableDurationSet {
    TempDir dir;
    std::vector<SampleRecord> records;

    VariableDurationSet()
    {
        SynthRanges ranges;
        ranges.duration_s = {2.0, 6.0};
        ranges.speed_kmh = {5.0, 60.0};
        ranges.frame_stride = 1000;
        DatasetManifest manifest;
        records = synth_features(ranges, 200, 202, dir.path(), manifest);
    }
};

VariableDurationSet& variable_set()
{
    static VariableDurationSet set;
    return set;
}

Outcome pipeline_approximation()
{
    Outcome o;
    const auto& recs = variable_set().records;
    if (!expect(o, recs.size() == 200, "extracted " + std::to_string(recs.size()) + " of 200")) {
        return o;
    }
    const auto split = train_test_split(recs, test_fraction, split_seed);
    const auto cubic = held_out(split, 3, FeatureSet::all());
    const auto lin = held_out(split, 1, FeatureSet::all());
    expect(o, cubic.r2 && *cubic.r2 >= 0.95, "degree-3 held-out R2 " + num(cubic.r2.value_or(NAN)));
    expect(o, lin.r2 && cubic.r2 && *lin.r2 < *cubic.r2,
           "degree-1 R2 " + num(lin.r2.value_or(NAN)) + " not below degree-3 " + num(cubic.r2.value_or(NAN)));
    if (o.pass) {
        o.detail = "held-out R2 deg1=" + num(*lin.r2) + " deg3=" + num(*cubic.r2) + " (RMSE " + num(lin.rmse) +
                   " -> " + num(cubic.rmse) + " km/h)";
    }
    return o;
}

Outcome depth_ablation()
{
    Outcome o;
    const auto split = train_test_split(variable_set().records, test_fraction, split_seed);
    const auto full = held_out(split, 3, FeatureSet::all());
    const auto ablated = held_out(split, 3, FeatureSet::without(BaseFeature::dist_diff));
    const double drop = full.r2.value_or(NAN) - ablated.r2.value_or(NAN);
    expect(o, drop >= 0.1, "R2 drop " + num(drop));
    if (o.pass) {
        o.detail = "held-out R2 full=" + num(*full.r2) + " without dist_diff=" + num(*ablated.r2);
    }
    return o;
}

Outcome monotonicity()
{
    Outcome o;
    SynthRanges ranges;
    std::size_t violations = 0, frames_checked = 0;
    for (std::uint64_t i = 0; i < 50; ++i) {
        auto p = sample_scenario(ranges, 303, i);
        if (p.speed_kmh <= 0.0) {
            continue;
        }
        std::map<std::uint64_t, FrameRasters> rasters;
        std::vector<FrameObservation> frames;
        double prev_area = -1.0, prev_depth = 1e300;
        for (std::uint64_t f = 0; f <= p.last_frame_index(); ++f) {
            auto fr = render_frame(p, f);
            const double area = bbox_area(fr.observation.detections[0]);
            const double depth = region_mean_depth(fr.depth, fr.mask);
            violations += !(area > prev_area) + !(depth < prev_depth);
            prev_area = area;
            prev_depth = depth;
            ++frames_checked;
            frames.push_back(fr.observation);
            rasters[f] = {fr.depth, fr.mask};
        }
        const auto rec = extract_sample(frames, p.fps, {}, [&](const FrameObservation& f) { return rasters.at(f.frame_index); });
        violations += !(rec.area_diff < 0.0) + !(rec.dist_diff > 0.0);
    }
    expect(o, violations == 0, std::to_string(violations) + " violations");
    if (o.pass) {
        o.detail = std::to_string(frames_checked) + " frames, 0 violations";
    }
    return o;
}

Outcome masked_mean_brute_force()
{
    Outcome o;
    std::mt19937_64 gen(404);
    std::uniform_int_distribution<std::uint32_t> dim(1, 64);
    std::uniform_real_distribution<float> val(0.001f, 1000.0f);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        DepthRaster d{dim(gen), dim(gen), {}};
        MaskRaster m{d.width, d.height, {}};
        const auto density = 1 + gen() % 4;
        for (std::size_t i = 0; i < std::size_t(d.width) * d.height; ++i) {
            d.values.push_back(val(gen));
            m.values.push_back(static_cast<std::uint8_t>(gen() % density == 0));
        }
        m.values[gen() % m.values.size()] = 1;
        worst = std::max(worst, relative_error(region_mean_depth(d, m), speedest::testing::brute_masked_mean(d, m)));
    }
    expect(o, worst <= 1e-12, "worst relative error " + num(worst));
    if (o.pass) {
        o.detail = "worst relative error " + num(worst);
    }
    return o;
}

template<typename E>
bool throws(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const E&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome interchange_round_trip()
{
    Outcome o;
    TempDir dir;
    std::mt19937_64 gen(505);
    std::uniform_int_distribution<std::uint32_t> dim(1, 48);
    std::uniform_real_distribution<float> val(-1e4f, 1e4f);
    const auto dp = dir / "r.depth";
    const auto mp = dir / "r.mask";
    for (int trial = 0; trial < 500; ++trial) {
        DepthRaster d{dim(gen), dim(gen), {}};
        MaskRaster m{dim(gen), dim(gen), {}};
        for (std::size_t i = 0; i < std::size_t(d.width) * d.height; ++i) {
            d.values.push_back(val(gen));
        }
        for (std::size_t i = 0; i < std::size_t(m.width) * m.height; ++i) {
            m.values.push_back(static_cast<std::uint8_t>(gen() & 1));
        }
        write_depth_raster(d, dp);
        write_mask_raster(m, mp);
        const auto dbytes = speedest::testing::slurp(dp);
        const auto mbytes = speedest::testing::slurp(mp);
        expect(o, read_depth_raster(dp) == d, "depth raster mismatch");
        expect(o, read_mask_raster(mp) == m, "mask raster mismatch");

        // Corruptions must raise the specified error, never succeed.
        auto bad = dbytes;
        bad[gen() % 4] ^= 0x20;
        expect(o, throws<BadMagicError>([&] { decode_depth_raster(bad); }), "depth bad magic not detected");
        bad = mbytes;
        bad[gen() % 4] ^= 0x20;
        expect(o, throws<BadMagicError>([&] { decode_mask_raster(bad); }), "mask bad magic not detected");
        bad = dbytes;
        bad[4] = 0x02;
        expect(o, throws<BadMagicError>([&] { decode_depth_raster(bad); }), "bad version not detected");
        bad = dbytes;
        bad.resize(raster_header_size + gen() % (bad.size() - raster_header_size));
        expect(o, throws<TruncatedFileError>([&] { decode_depth_raster(bad); }), "depth truncation not detected");
        bad = mbytes;
        bad.resize(raster_header_size + gen() % (bad.size() - raster_header_size));
        expect(o, throws<TruncatedFileError>([&] { decode_mask_raster(bad); }), "mask truncation not detected");
        bad = dbytes;
        bad.resize(gen() % raster_header_size);
        expect(o, throws<TruncatedFileError>([&] { decode_depth_raster(bad); }) ||
                      (bad.size() < 4 && throws<BadMagicError>([&] { decode_depth_raster(bad); })),
               "header truncation not detected");
        bad = dbytes;
        const auto at = raster_header_size + 4 * (gen() % d.values.size());
        bad[at + 2] |= 0x80; // exponent all ones -> inf or NaN
        bad[at + 3] |= 0x7F;
        expect(o, throws<NonFiniteValueError>([&] { decode_depth_raster(bad); }), "non-finite payload accepted");
        bad = mbytes;
        bad[raster_header_size + gen() % m.values.size()] = static_cast<std::uint8_t>(2 + gen() % 254);
        expect(o, throws<ValueError>([&] { decode_mask_raster(bad); }), "mask value outside {0,1} accepted");
    }

    const auto manifest_path = dir / "manifest.json";
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        DatasetManifest m;
        m.base_dir = dir.path();
        m.metadata = {gen() & 1 ? DepthUnits::metric_m : DepthUnits::relative,
                      gen() & 1 ? DepthConvention::larger_is_farther : DepthConvention::larger_is_nearer};
        const auto n = gen() % 5;
        for (std::uint64_t s = 0; s < n; ++s) {
            SampleEntry e;
            e.sample_id = "sample-" + std::to_string(s) + "-" + std::to_string(gen() % 1000);
            e.fps = 1.0 + 59.0 * u(gen);
            if (gen() & 1) {
                e.ground_truth_speed_kmh = 100.0 * u(gen);
            }
            e.perspective = static_cast<Perspective>(gen() % 3);
            const auto nf = 2 + gen() % 4;
            std::uint64_t index = gen() % 10;
            for (std::uint64_t f = 0; f < nf; ++f) {
                FrameObservation fo;
                fo.frame_index = index;
                index += 1 + gen() % 7;
                for (std::uint64_t k = 0; k < gen() % 3; ++k) {
                    const double x = 640 * u(gen), y = 480 * u(gen);
                    fo.detections.push_back({k ? "truck" : "car", u(gen), {x, y, x + 100 * u(gen), y + 80 * u(gen)}});
                }
                e.frames.push_back(fo);
            }
            m.samples.push_back(e);
        }
        write_manifest(m, manifest_path);
        expect(o, read_manifest(manifest_path) == m, "manifest round-trip mismatch");
        expect(o, dump_manifest(read_manifest(manifest_path)) == dump_manifest(m), "manifest re-dump differs");
    }
    expect(o, throws<ParseError>([&] { parse_manifest("{\"samples\": [", ".", false); }), "malformed manifest accepted");
    if (o.pass) {
        o.detail = "500 depth + 500 mask rasters, 50 manifests, all corruptions rejected";
    }
    return o;
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

Outcome determinism()
{
    Outcome o;
    TempDir dir;
    std::ostringstream sink;
    for (const char* run : {"a", "b"}) {
        const auto root = dir / run;
        const auto data = (root / "data").string();
        expect(o,
               cli::run({"synth", "--n", "12", "--seed", "7", "--out", data, "--bbox-sigma", "0.5", "--depth-sigma",
                         "0.05", "--frame-stride", "40"},
                        sink, sink) == 0,
               "synth failed");
        expect(o,
               cli::run({"extract", "--manifest", data + "/manifest.json", "--out", (root / "features.csv").string()},
                        sink, sink) == 0,
               "extract failed");
        expect(o,
               cli::run({"fit", "--features", (root / "features.csv").string(), "--model",
                         (root / "model.json").string(), "--degree", "2", "--seed", "42"},
                        sink, sink) == 0,
               "fit failed");
    }
    if (!o.pass) {
        return o;
    }
    const auto a = tree(dir / "a");
    const auto b = tree(dir / "b");
    expect(o, a == b, "runs differ");
    if (o.pass) {
        o.detail = std::to_string(a.size()) + " files byte-identical across runs";
    }
    return o;
}

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {"OLS oracle equivalence", 5.0, ols_oracle},
        {"Metric identities", 1.0, metric_identities},
        {"Pipeline identity (noiseless, fixed duration)", 30.0, pipeline_identity},
        {"Pipeline approximation (noiseless, variable duration)", 60.0, pipeline_approximation},
        {"Depth-feature ablation", 0.0, depth_ablation},
        {"Monotonicity suite", 0.0, monotonicity},
        {"region_mean_depth vs brute force", 0.0, masked_mean_brute_force},
        {"Interchange round-trip", 0.0, interchange_round_trip},
        {"Determinism (synth + fit)", 0.0, determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_limit_s > 0.0 && secs > c.time_limit_s && o.pass) {
            o = {false, "took " + num(secs) + " s, limit " + num(c.time_limit_s) + " s"};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.name << " (" << num(secs) << " s): " << o.detail << '\n';
    }
    std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << '\n';
    return failures ? 1 : 0;
}
