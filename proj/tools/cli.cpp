#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "speedest/errors.hpp"
#include "speedest/features.hpp"
#include "speedest/interchange.hpp"
#include "speedest/regression.hpp"
#include "speedest/synth.hpp"

namespace speedest::cli {

namespace {

namespace fs = std::filesystem;

struct CommandConfig {
    std::string manifest;
    std::string features;
    std::string model;
    std::string out;
    std::string scenario;
    int degree = 3;
    bool degree_given = false;
    double test_fraction = 0.2;
    std::uint64_t seed = 42;
    double confidence_threshold = 0.7;
    std::string depth_region = "mask";
    std::string classes = "car";
    std::string base_features = "t,area_diff,dist_diff";
    std::size_t n = 0;
    SynthRanges ranges;
    std::string depth_mode = "metric";
};

// Raised for bad flag combinations detected after parsing.
struct UsageError : Error {
    using Error::Error;
};

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

FeatureSet parse_feature_set(const std::string& s)
{
    FeatureSet set{{false, false, false}};
    for (const auto& name : split_list(s)) {
        set.enabled[static_cast<int>(parse_base_feature(name))] = true;
    }
    if (set.list().empty()) {
        throw UsageError("--base-features must name at least one feature");
    }
    return set;
}

std::string fmt(double v) { return format_double(v); }

std::string fmt(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

void print_metrics(std::ostream& os, const char* label, const MetricBlock& m)
{
    os << label << ": n=" << m.n << " p=" << m.p << " R2=" << fmt(m.r2) << " AdjR2=" << fmt(m.adj_r2)
       << " RMSE=" << fmt(m.rmse) << '\n';
}

void print_importance(std::ostream& os, const RegressionModel& model)
{
    os << "feature importance (|coefficient| x training std):\n";
    for (const auto& fi : feature_importance(model)) {
        os << "  " << std::left << std::setw(24) << fi.name << ' ' << fmt(fi.importance) << '\n';
    }
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    return f;
}

// Loads a model and verifies it against the optional --degree flag.
RegressionModel load_model(const CommandConfig& cfg)
{
    auto model = read_model(cfg.model);
    check_schema(model);
    if (cfg.degree_given && cfg.degree != model.degree) {
        throw SchemaMismatchError("model degree " + std::to_string(model.degree) + " differs from --degree " +
                                  std::to_string(cfg.degree));
    }
    return model;
}

int cmd_synth(const CommandConfig& cfg, std::ostream& out, std::ostream&)
{
    auto ranges = cfg.ranges;
    if (!cfg.scenario.empty()) {
        std::ifstream in(cfg.scenario);
        if (!in) {
            throw MissingFileError("cannot open scenario file " + cfg.scenario);
        }
        std::stringstream buf;
        buf << in.rdbuf();
        ranges = parse_scenario(buf.str());
    } else {
        ranges.depth_mode = parse_depth_mode(cfg.depth_mode);
    }
    ranges.validate();
    const auto manifest = generate_dataset(cfg.n, ranges, cfg.seed, cfg.out);
    out << "wrote " << manifest.samples.size() << " samples (seed " << cfg.seed << ") to " << cfg.out << '\n';
    return exit_ok;
}

int cmd_extract(const CommandConfig& cfg, std::ostream& out, std::ostream& err)
{
    ExtractionConfig ec;
    ec.confidence_threshold = cfg.confidence_threshold;
    ec.depth_region = parse_depth_region(cfg.depth_region);
    const auto classes = split_list(cfg.classes);
    ec.accepted_classes = {classes.begin(), classes.end()};
    ec.validate();

    const auto manifest = read_manifest(cfg.manifest);
    std::vector<SampleRecord> records;
    std::vector<std::string> skipped;
    for (const auto& s : manifest.samples) {
        try {
            records.push_back(extract_sample(manifest, s, ec));
        } catch (const Error& e) {
            err << "skipped sample '" << s.sample_id << "': " << e.what() << '\n';
            skipped.push_back(s.sample_id);
        }
    }
    if (cfg.out.empty()) {
        write_features(out, records);
    } else {
        write_features(fs::path(cfg.out), records);
    }
    err << "extracted " << records.size() << ", skipped " << skipped.size();
    if (!skipped.empty()) {
        err << " (";
        for (std::size_t i = 0; i < skipped.size(); ++i) {
            err << (i ? ", " : "") << skipped[i];
        }
        err << ")";
    }
    err << '\n';
    return records.empty() ? exit_failure : exit_ok;
}

std::vector<SampleRecord> read_labelled(const std::string& path)
{
    auto records = read_features(fs::path(path));
    for (const auto& r : records) {
        if (!r.speed_kmh) {
            throw ValidationError("sample '" + r.sample_id + "' has no speed_kmh; fitting needs labelled features");
        }
    }
    return records;
}

int cmd_fit(const CommandConfig& cfg, std::ostream& out, std::ostream&)
{
    const auto features = parse_feature_set(cfg.base_features);
    monomial_basis(cfg.degree, features);
    const auto records = read_labelled(cfg.features);
    const auto split = train_test_split(records, cfg.test_fraction, cfg.seed);

    auto model = fit_model(split.train, cfg.degree, features);
    model.split_seed = cfg.seed;
    model.train_fraction = 1.0 - cfg.test_fraction;
    model.train_metrics = evaluate(model, split.train).metrics;
    model.test_metrics = evaluate(model, split.test).metrics;
    write_model(model, cfg.model);

    out << "degree " << model.degree << " model with " << model.coefficients.size()
        << " coefficients + intercept written to " << cfg.model << '\n';
    print_metrics(out, "train", *model.train_metrics);
    print_metrics(out, "test", *model.test_metrics);
    print_importance(out, model);
    return exit_ok;
}

int cmd_eval(const CommandConfig& cfg, std::ostream& out, std::ostream&)
{
    const auto model = load_model(cfg);
    const auto records = read_labelled(cfg.features);
    const auto rep = evaluate(model, records);
    auto table = open_out(cfg.out);
    table << "sample_id,actual_kmh,predicted_kmh,residual_kmh\n";
    for (std::size_t i = 0; i < rep.sample_ids.size(); ++i) {
        table << rep.sample_ids[i] << ',' << fmt(rep.actual[i]) << ',' << fmt(rep.predicted[i]) << ','
              << fmt(rep.residuals[i]) << '\n';
    }
    print_metrics(out, "eval", rep.metrics);
    return exit_ok;
}

int cmd_predict(const CommandConfig& cfg, std::ostream& out, std::ostream& err)
{
    const auto model = load_model(cfg);
    const auto records = read_features(fs::path(cfg.features));
    std::ofstream file;
    if (!cfg.out.empty()) {
        file = open_out(cfg.out);
    }
    std::ostream& os = cfg.out.empty() ? out : file;
    os << "sample_id,predicted_kmh,flag\n";
    std::size_t negative = 0;
    for (const auto& r : records) {
        const double y = predict(model, r);
        negative += y < 0.0;
        os << r.sample_id << ',' << fmt(y) << ',' << (y < 0.0 ? "negative" : "") << '\n';
    }
    if (negative > 0) {
        err << negative << " negative prediction(s) flagged\n";
    }
    return exit_ok;
}

int cmd_report(const CommandConfig& cfg, std::ostream& out, std::ostream&)
{
    const auto model = load_model(cfg);
    const auto records = read_labelled(cfg.features);
    std::ofstream file;
    if (!cfg.out.empty()) {
        file = open_out(cfg.out);
    }
    std::ostream& os = cfg.out.empty() ? out : file;

    os << "# metrics\nsplit,n,p,r2,adj_r2,rmse\n";
    for (const auto& [label, block] : {std::pair{"train", model.train_metrics}, std::pair{"test", model.test_metrics}}) {
        if (block) {
            os << label << ',' << block->n << ',' << block->p << ',' << fmt(block->r2) << ',' << fmt(block->adj_r2)
               << ',' << fmt(block->rmse) << '\n';
        }
    }
    os << "\n# importance\nrank,feature,importance\n";
    int rank = 1;
    for (const auto& fi : feature_importance(model)) {
        os << rank++ << ',' << fi.name << ',' << fmt(fi.importance) << '\n';
    }

    // Reproduce the fit-time partition to label each row.
    std::set<std::string> test_ids;
    const double test_fraction = 1.0 - model.train_fraction;
    if (test_fraction > 0.0 && test_fraction < 1.0 && records.size() >= 2) {
        for (const auto& r : train_test_split(records, test_fraction, model.split_seed).test) {
            test_ids.insert(r.sample_id);
        }
    }
    os << "\n# predictions\nsample_id,split,actual_kmh,predicted_kmh,residual_kmh\n";
    const auto rep = evaluate(model, records);
    for (std::size_t i = 0; i < rep.sample_ids.size(); ++i) {
        os << rep.sample_ids[i] << ',' << (test_ids.contains(rep.sample_ids[i]) ? "test" : "train") << ','
           << fmt(rep.actual[i]) << ',' << fmt(rep.predicted[i]) << ',' << fmt(rep.residuals[i]) << '\n';
    }
    return exit_ok;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Vehicle speed estimation from detection and depth features"};
    app.require_subcommand(1);
    CommandConfig cfg;

    auto* synth = app.add_subcommand("synth", "generate a synthetic pinhole-camera dataset");
    synth->add_option("--n", cfg.n, "number of samples")->required();
    synth->add_option("--seed", cfg.seed, "generator seed");
    synth->add_option("--out", cfg.out, "output directory")->required();
    synth->add_option("--scenario", cfg.scenario, "scenario file with sampling ranges (overrides range flags)");
    synth->add_option("--speed-min", cfg.ranges.speed_kmh.lo, "km/h")->check(CLI::NonNegativeNumber);
    synth->add_option("--speed-max", cfg.ranges.speed_kmh.hi, "km/h")->check(CLI::NonNegativeNumber);
    synth->add_option("--duration-min", cfg.ranges.duration_s.lo, "seconds")->check(CLI::PositiveNumber);
    synth->add_option("--duration-max", cfg.ranges.duration_s.hi, "seconds")->check(CLI::PositiveNumber);
    synth->add_option("--distance-min", cfg.ranges.initial_distance_m.lo, "initial distance, m")
        ->check(CLI::PositiveNumber);
    synth->add_option("--distance-max", cfg.ranges.initial_distance_m.hi, "initial distance, m")
        ->check(CLI::PositiveNumber);
    synth->add_option("--fps", cfg.ranges.fps)->check(CLI::PositiveNumber);
    synth->add_option("--focal", cfg.ranges.focal_px, "focal length, px")->check(CLI::PositiveNumber);
    synth->add_option("--image-width", cfg.ranges.image_width)->check(CLI::PositiveNumber);
    synth->add_option("--image-height", cfg.ranges.image_height)->check(CLI::PositiveNumber);
    synth->add_option("--depth-mode", cfg.depth_mode)->check(CLI::IsMember({"metric", "inverse_relative"}));
    synth->add_option("--bbox-sigma", cfg.ranges.bbox_sigma_px, "bbox noise, px")->check(CLI::NonNegativeNumber);
    synth->add_option("--depth-sigma", cfg.ranges.depth_sigma, "depth noise")->check(CLI::NonNegativeNumber);
    synth->add_option("--frame-stride", cfg.ranges.frame_stride, "render every k-th frame plus the last")
        ->check(CLI::PositiveNumber);

    auto* extract = app.add_subcommand("extract", "reduce a manifest to a features table");
    extract->add_option("--manifest", cfg.manifest)->required();
    extract->add_option("--out", cfg.out, "features table (stdout when omitted)");
    extract->add_option("--confidence-threshold", cfg.confidence_threshold)->check(CLI::Range(0.0, 1.0));
    extract->add_option("--depth-region", cfg.depth_region)->check(CLI::IsMember({"mask", "bbox"}));
    extract->add_option("--classes", cfg.classes, "comma-separated accepted class labels");

    auto* fit = app.add_subcommand("fit", "fit a polynomial speed model");
    fit->add_option("--features", cfg.features)->required();
    fit->add_option("--model", cfg.model, "output model file")->required();
    fit->add_option("--degree", cfg.degree)->check(CLI::Range(1, 3));
    fit->add_option("--test-fraction", cfg.test_fraction)->check(CLI::Range(0.0, 1.0));
    fit->add_option("--seed", cfg.seed, "split seed");
    fit->add_option("--base-features", cfg.base_features, "comma-separated subset of t,area_diff,dist_diff");

    auto* eval = app.add_subcommand("eval", "score a model on labelled features");
    auto* predict = app.add_subcommand("predict", "predict speeds for a features table");
    auto* report = app.add_subcommand("report", "delimited summary for external plotting");
    for (auto* sub : {eval, predict, report}) {
        sub->add_option("--model", cfg.model)->required();
        sub->add_option("--features", cfg.features)->required();
        sub->add_option("--degree", cfg.degree, "expected model degree")->check(CLI::Range(1, 3));
    }
    eval->add_option("--out", cfg.out, "actual-vs-predicted table")->required();
    predict->add_option("--out", cfg.out, "predictions table (stdout when omitted)");
    report->add_option("--out", cfg.out, "report file (stdout when omitted)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
    for (auto* sub : {eval, predict, report}) {
        if (sub->parsed()) {
            cfg.degree_given = sub->count("--degree") > 0;
        }
    }
    if (fit->parsed() && !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
        err << "error: --test-fraction must lie strictly between 0 and 1\n";
        return exit_usage;
    }

    try {
        if (synth->parsed()) return cmd_synth(cfg, out, err);
        if (extract->parsed()) return cmd_extract(cfg, out, err);
        if (fit->parsed()) return cmd_fit(cfg, out, err);
        if (eval->parsed()) return cmd_eval(cfg, out, err);
        if (predict->parsed()) return cmd_predict(cfg, out, err);
        if (report->parsed()) return cmd_report(cfg, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const MissingFileError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const SchemaMismatchError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_usage;
}

} // namespace speedest::cli
