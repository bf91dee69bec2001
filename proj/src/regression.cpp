#include "speedest/regression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>
#include <json.hpp>

#include "speedest/errors.hpp"
#include "speedest/rng.hpp"

namespace speedest {

namespace {

constexpr const char* base_names[base_feature_count] = {"t", "area_diff", "dist_diff"};

double ipow(double x, int e)
{
    double r = 1.0;
    for (int i = 0; i < e; ++i) {
        r *= x;
    }
    return r;
}

} // namespace

std::string to_string(BaseFeature f) { return base_names[static_cast<int>(f)]; }

BaseFeature parse_base_feature(const std::string& s)
{
    for (int i = 0; i < base_feature_count; ++i) {
        if (s == base_names[i]) {
            return static_cast<BaseFeature>(i);
        }
    }
    throw ValidationError("unknown base feature '" + s + "' (expected t, area_diff or dist_diff)");
}

std::vector<BaseFeature> FeatureSet::list() const
{
    std::vector<BaseFeature> out;
    for (int i = 0; i < base_feature_count; ++i) {
        if (enabled[i]) {
            out.push_back(static_cast<BaseFeature>(i));
        }
    }
    return out;
}

double MonomialDescriptor::evaluate(double t, double area_diff, double dist_diff) const
{
    return ipow(t, exponents[0]) * ipow(area_diff, exponents[1]) * ipow(dist_diff, exponents[2]);
}

std::string monomial_name(const std::array<int, base_feature_count>& exponents)
{
    const int nonzero = static_cast<int>(std::count_if(exponents.begin(), exponents.end(), [](int e) { return e > 0; }));
    std::string name;
    for (int i = 0; i < base_feature_count; ++i) {
        const int e = exponents[i];
        if (e == 0) {
            continue;
        }
        if (!name.empty()) {
            name += '*';
        }
        name += base_names[i];
        if (nonzero == 1 || e > 1) {
            name += '^' + std::to_string(e);
        }
    }
    return name;
}

std::vector<MonomialDescriptor> monomial_basis(int degree, const FeatureSet& features)
{
    if (degree < 1 || degree > 3) {
        throw ValidationError("degree must be 1, 2 or 3, got " + std::to_string(degree));
    }
    if (features.list().empty()) {
        throw ValidationError("at least one base feature must be enabled");
    }
    std::vector<MonomialDescriptor> out;
    for (int d = 1; d <= degree; ++d) {
        for (int a = d; a >= 0; --a) {
            for (int b = d - a; b >= 0; --b) {
                const int c = d - a - b;
                const std::array<int, 3> e{a, b, c};
                bool ok = true;
                for (int i = 0; i < base_feature_count; ++i) {
                    ok = ok && (e[i] == 0 || features.enabled[i]);
                }
                if (ok) {
                    out.push_back({e, monomial_name(e)});
                }
            }
        }
    }
    return out;
}

ExpandedFeatures expand_polynomial(const SampleRecord& record, int degree, const FeatureSet& features)
{
    ExpandedFeatures out;
    out.monomials = monomial_basis(degree, features);
    out.values.reserve(out.monomials.size());
    for (const auto& m : out.monomials) {
        out.values.push_back(m.evaluate(record.t, record.area_diff, record.dist_diff));
    }
    return out;
}

Eigen::MatrixXd design_matrix(std::span<const SampleRecord> records, std::span<const MonomialDescriptor> monomials)
{
    Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(monomials.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        for (std::size_t j = 0; j < monomials.size(); ++j) {
            x(Eigen::Index(i), Eigen::Index(j)) = monomials[j].evaluate(r.t, r.area_diff, r.dist_diff);
        }
    }
    return x;
}

LinearFit fit_least_squares(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                            std::span<const std::string> column_names)
{
    const auto n = features.rows();
    const auto p = features.cols();
    if (targets.size() != n) {
        throw DimensionMismatchError("targets length differs from feature rows");
    }
    if (n < p + 1) {
        throw TooFewSamplesError("least squares needs n >= p + 1 (n=" + std::to_string(n) +
                                 ", p=" + std::to_string(p) + ")");
    }
    if (!features.allFinite() || !targets.allFinite()) {
        throw NonFiniteValueError("least squares inputs must be finite");
    }

    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = features;

    Eigen::VectorXd scale(p + 1);
    for (Eigen::Index j = 0; j <= p; ++j) {
        const double norm = design.col(j).norm();
        scale(j) = norm > 0.0 ? norm : 1.0;
        design.col(j) /= scale(j);
    }

    auto column_label = [&](Eigen::Index j) -> std::string {
        if (j == 0) {
            return "intercept";
        }
        const auto k = static_cast<std::size_t>(j - 1);
        return k < column_names.size() ? column_names[k] : "column " + std::to_string(k);
    };

    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design);
    const auto& sv = svd.singularValues();
    const double cutoff = sv(0) * rank_tolerance;
    const auto rank = (sv.array() > cutoff).count();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (rank < p + 1) {
        // Pivoted QR orders columns by independence; the trailing ones are the
        // dependent set.
        std::string which;
        for (Eigen::Index k = rank; k <= p; ++k) {
            which += (which.empty() ? "" : ", ") + column_label(qr.colsPermutation().indices()(k));
        }
        throw RankDeficiencyError("design matrix has rank " + std::to_string(rank) + " < " + std::to_string(p + 1) +
                                  "; dependent columns: " + which);
    }
    const Eigen::VectorXd beta = qr.solve(targets).cwiseQuotient(scale);

    LinearFit fit;
    fit.intercept = beta(0);
    fit.coefficients.assign(beta.data() + 1, beta.data() + beta.size());
    return fit;
}

RegressionModel fit_model(std::span<const SampleRecord> train, int degree, const FeatureSet& features)
{
    RegressionModel model;
    model.degree = degree;
    model.base_features = features;
    model.monomials = monomial_basis(degree, features);

    Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (!train[i].speed_kmh) {
            throw ValidationError("sample '" + train[i].sample_id + "' has no ground-truth speed");
        }
        y(Eigen::Index(i)) = *train[i].speed_kmh;
    }
    const Eigen::MatrixXd x = design_matrix(train, model.monomials);

    std::vector<std::string> names;
    for (const auto& m : model.monomials) {
        names.push_back(m.display_name);
    }
    auto fit = fit_least_squares(x, y, names);
    model.intercept = fit.intercept;
    model.coefficients = std::move(fit.coefficients);

    const double n = static_cast<double>(x.rows());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double mean = x.col(j).mean();
        const double var = (x.col(j).array() - mean).square().sum() / n;
        model.feature_means.push_back(mean);
        model.feature_stds.push_back(std::sqrt(var));
    }
    return model;
}

double predict(const RegressionModel& model, const SampleRecord& record)
{
    double y = model.intercept;
    for (std::size_t j = 0; j < model.monomials.size(); ++j) {
        y += model.coefficients[j] * model.monomials[j].evaluate(record.t, record.area_diff, record.dist_diff);
    }
    return y;
}

double r_squared(std::span<const double> actual, std::span<const double> predicted)
{
    if (actual.empty() || actual.size() != predicted.size()) {
        throw DimensionMismatchError("r_squared needs equal nonempty lengths");
    }
    const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
        ss_tot += (actual[i] - mean) * (actual[i] - mean);
    }
    if (ss_tot == 0.0) {
        throw ZeroVarianceError("actual values are constant");
    }
    return 1.0 - ss_res / ss_tot;
}

double adjusted_r_squared(double r2, std::size_t n, std::size_t p)
{
    if (n <= p + 1) {
        throw DegenerateDofError("adjusted R^2 needs n > p + 1 (n=" + std::to_string(n) + ", p=" + std::to_string(p) +
                                 ")");
    }
    return 1.0 - (1.0 - r2) * static_cast<double>(n - 1) / static_cast<double>(n - p - 1);
}

double rmse(std::span<const double> actual, std::span<const double> predicted)
{
    if (actual.empty() || actual.size() != predicted.size()) {
        throw DimensionMismatchError("rmse needs equal nonempty lengths");
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        sse += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    }
    return std::sqrt(sse / static_cast<double>(actual.size()));
}

EvaluationReport evaluate(const RegressionModel& model, std::span<const SampleRecord> records)
{
    EvaluationReport rep;
    for (const auto& r : records) {
        if (!r.speed_kmh) {
            throw ValidationError("sample '" + r.sample_id + "' has no ground-truth speed");
        }
        const double yhat = predict(model, r);
        rep.sample_ids.push_back(r.sample_id);
        rep.actual.push_back(*r.speed_kmh);
        rep.predicted.push_back(yhat);
        rep.residuals.push_back(*r.speed_kmh - yhat);
    }
    rep.metrics.n = records.size();
    rep.metrics.p = model.monomials.size();
    if (records.empty()) {
        return rep;
    }
    rep.metrics.rmse = rmse(rep.actual, rep.predicted);
    try {
        rep.metrics.r2 = r_squared(rep.actual, rep.predicted);
        rep.metrics.adj_r2 = adjusted_r_squared(*rep.metrics.r2, rep.metrics.n, rep.metrics.p);
    } catch (const ZeroVarianceError&) {
    } catch (const DegenerateDofError&) {
    }
    return rep;
}

Split train_test_split(std::span<const SampleRecord> records, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ValidationError("test_fraction must lie strictly between 0 and 1");
    }
    const std::size_t n = records.size();
    if (n < 2) {
        throw TooFewSamplesError("need at least 2 records to split, got " + std::to_string(n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 gen(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[gen.bounded(i + 1)]);
    }
    const auto raw = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    const std::size_t n_test = std::clamp<std::size_t>(raw, 1, n - 1);

    Split s;
    for (std::size_t k = 0; k < n; ++k) {
        (k < n_test ? s.test : s.train).push_back(records[order[k]]);
    }
    return s;
}

std::vector<FeatureImportance> feature_importance(const RegressionModel& model)
{
    std::vector<FeatureImportance> out;
    for (std::size_t j = 0; j < model.monomials.size(); ++j) {
        const double std = j < model.feature_stds.size() ? model.feature_stds[j] : 0.0;
        out.push_back({model.monomials[j].display_name, std == 0.0 ? 0.0 : std::abs(model.coefficients[j]) * std});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.importance > b.importance; });
    return out;
}

void check_schema(const RegressionModel& model)
{
    const auto expected = monomial_basis(model.degree, model.base_features);
    if (model.monomials != expected) {
        throw SchemaMismatchError("model monomials are not the canonical degree-" + std::to_string(model.degree) +
                                  " basis");
    }
    const auto p = model.monomials.size();
    if (model.coefficients.size() != p || model.feature_means.size() != p || model.feature_stds.size() != p) {
        throw SchemaMismatchError("model holds " + std::to_string(model.coefficients.size()) + " coefficients for " +
                                  std::to_string(p) + " monomials");
    }
}

// ---------------------------------------------------------------------------
// Model file

namespace {

using json = nlohmann::ordered_json;

json to_json(const MetricBlock& m)
{
    return {{"n", m.n},
            {"p", m.p},
            {"r2", m.r2 ? json(*m.r2) : json(nullptr)},
            {"adj_r2", m.adj_r2 ? json(*m.adj_r2) : json(nullptr)},
            {"rmse", m.rmse}};
}

MetricBlock metric_block(const json& j)
{
    MetricBlock m;
    m.n = j.at("n").get<std::size_t>();
    m.p = j.at("p").get<std::size_t>();
    if (!j.at("r2").is_null()) {
        m.r2 = j.at("r2").get<double>();
    }
    if (!j.at("adj_r2").is_null()) {
        m.adj_r2 = j.at("adj_r2").get<double>();
    }
    m.rmse = j.at("rmse").get<double>();
    return m;
}

} // namespace

std::string dump_model(const RegressionModel& model)
{
    json doc;
    doc["format"] = "speedest-model";
    doc["version"] = 1;
    doc["degree"] = model.degree;
    doc["base_features"] = json::array();
    for (auto f : model.base_features.list()) {
        doc["base_features"].push_back(to_string(f));
    }
    doc["monomials"] = json::array();
    for (const auto& m : model.monomials) {
        doc["monomials"].push_back({{"exponents", m.exponents}, {"name", m.display_name}});
    }
    doc["intercept"] = model.intercept;
    doc["coefficients"] = model.coefficients;
    doc["feature_means"] = model.feature_means;
    doc["feature_stds"] = model.feature_stds;
    doc["importance_metric"] = "abs(coefficient) * training std";
    doc["split_seed"] = model.split_seed;
    doc["train_fraction"] = model.train_fraction;
    doc["metrics"] = {{"train", model.train_metrics ? to_json(*model.train_metrics) : json(nullptr)},
                      {"test", model.test_metrics ? to_json(*model.test_metrics) : json(nullptr)}};
    return doc.dump(2) + "\n";
}

RegressionModel parse_model(const std::string& text)
{
    RegressionModel model;
    try {
        const auto doc = json::parse(text);
        if (doc.value("format", "") != "speedest-model") {
            throw ParseError("not a speedest model document");
        }
        model.degree = doc.at("degree").get<int>();
        model.base_features.enabled = {false, false, false};
        for (const auto& f : doc.at("base_features")) {
            model.base_features.enabled[static_cast<int>(parse_base_feature(f.get<std::string>()))] = true;
        }
        for (const auto& m : doc.at("monomials")) {
            model.monomials.push_back({m.at("exponents").get<std::array<int, 3>>(), m.at("name").get<std::string>()});
        }
        model.intercept = doc.at("intercept").get<double>();
        model.coefficients = doc.at("coefficients").get<std::vector<double>>();
        model.feature_means = doc.at("feature_means").get<std::vector<double>>();
        model.feature_stds = doc.at("feature_stds").get<std::vector<double>>();
        model.split_seed = doc.at("split_seed").get<std::uint64_t>();
        model.train_fraction = doc.at("train_fraction").get<double>();
        const auto& metrics = doc.at("metrics");
        if (!metrics.at("train").is_null()) {
            model.train_metrics = metric_block(metrics.at("train"));
        }
        if (!metrics.at("test").is_null()) {
            model.test_metrics = metric_block(metrics.at("test"));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed model file: ") + e.what());
    }
    return model;
}

void write_model(const RegressionModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << dump_model(model);
}

RegressionModel read_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw MissingFileError("cannot open model file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

} // namespace speedest
