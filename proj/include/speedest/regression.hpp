#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "speedest/features.hpp"

namespace speedest {

// Base regressors in canonical order.
enum class BaseFeature { t = 0, area_diff = 1, dist_diff = 2 };
inline constexpr int base_feature_count = 3;

std::string to_string(BaseFeature f);
BaseFeature parse_base_feature(const std::string& s);

/// Subset of base features a model is allowed to use.
struct FeatureSet {
    std::array<bool, base_feature_count> enabled{true, true, true};

    static FeatureSet all() { return {}; }
    static FeatureSet without(BaseFeature f)
    {
        FeatureSet s;
        s.enabled[static_cast<int>(f)] = false;
        return s;
    }
    static FeatureSet only(BaseFeature f)
    {
        FeatureSet s{{false, false, false}};
        s.enabled[static_cast<int>(f)] = true;
        return s;
    }
    bool contains(BaseFeature f) const { return enabled[static_cast<int>(f)]; }
    std::vector<BaseFeature> list() const;
    friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

struct MonomialDescriptor {
    std::array<int, base_feature_count> exponents{}; // (e_t, e_area, e_dist)
    std::string display_name;

    int total_degree() const { return exponents[0] + exponents[1] + exponents[2]; }
    double evaluate(double t, double area_diff, double dist_diff) const;
    friend bool operator==(const MonomialDescriptor&, const MonomialDescriptor&) = default;
};

std::string monomial_name(const std::array<int, base_feature_count>& exponents);

/// All monomials of the enabled features with total degree in [1, degree],
/// graded lexicographic order (degree ascending, then exponent tuples
/// descending: t before area_diff before dist_diff).
std::vector<MonomialDescriptor> monomial_basis(int degree, const FeatureSet& features = {});

struct ExpandedFeatures {
    std::vector<MonomialDescriptor> monomials;
    std::vector<double> values;
};

ExpandedFeatures expand_polynomial(const SampleRecord& record, int degree, const FeatureSet& features = {});

/// Design matrix (no intercept column) for the given monomials.
Eigen::MatrixXd design_matrix(std::span<const SampleRecord> records, std::span<const MonomialDescriptor> monomials);

struct LinearFit {
    double intercept = 0.0;
    std::vector<double> coefficients;
};

/// Relative singular-value cutoff for declaring the design rank deficient.
inline constexpr double rank_tolerance = 1e-10;

/// Ordinary least squares with an intercept. Columns are equilibrated to
/// unit norm, the rank is checked on the singular values of the equilibrated
/// design and the system is solved with a column-pivoted Householder QR.
/// Throws RankDeficiencyError naming the dependent columns.
LinearFit fit_least_squares(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                            std::span<const std::string> column_names = {});

struct MetricBlock {
    std::size_t n = 0;
    std::size_t p = 0;
    std::optional<double> r2;     // undefined for constant actuals
    std::optional<double> adj_r2; // undefined when n <= p + 1
    double rmse = 0.0;
    friend bool operator==(const MetricBlock&, const MetricBlock&) = default;
};

struct RegressionModel {
    int degree = 1;
    FeatureSet base_features;
    std::vector<MonomialDescriptor> monomials;
    std::vector<double> coefficients;
    double intercept = 0.0;
    std::vector<double> feature_means;
    std::vector<double> feature_stds;
    std::uint64_t split_seed = 0;
    double train_fraction = 1.0;
    std::optional<MetricBlock> train_metrics;
    std::optional<MetricBlock> test_metrics;

    friend bool operator==(const RegressionModel&, const RegressionModel&) = default;
};

/// Fits a degree-`degree` polynomial model on labelled records.
RegressionModel fit_model(std::span<const SampleRecord> train, int degree, const FeatureSet& features = {});

double predict(const RegressionModel& model, const SampleRecord& record);

double r_squared(std::span<const double> actual, std::span<const double> predicted);
double adjusted_r_squared(double r2, std::size_t n, std::size_t p);
double rmse(std::span<const double> actual, std::span<const double> predicted);

struct EvaluationReport {
    MetricBlock metrics;
    std::vector<std::string> sample_ids;
    std::vector<double> actual;
    std::vector<double> predicted;
    std::vector<double> residuals; // actual - predicted
};

EvaluationReport evaluate(const RegressionModel& model, std::span<const SampleRecord> records);

struct Split {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> test;
};

/// Seeded Fisher-Yates shuffle (SplitMix64) followed by a partition: the
/// first round(n * test_fraction) shuffled records, clamped to [1, n-1],
/// form the test set.
Split train_test_split(std::span<const SampleRecord> records, double test_fraction, std::uint64_t seed);

struct FeatureImportance {
    std::string name;
    double importance = 0.0;
};

/// |coefficient| x training std per monomial, sorted descending; ties keep
/// canonical monomial order.
std::vector<FeatureImportance> feature_importance(const RegressionModel& model);

/// Throws SchemaMismatchError unless the model's monomials are the
/// canonical basis for its degree and feature set.
void check_schema(const RegressionModel& model);

std::string dump_model(const RegressionModel& model);
RegressionModel parse_model(const std::string& text);
void write_model(const RegressionModel& model, const std::filesystem::path& path);
RegressionModel read_model(const std::filesystem::path& path);

} // namespace speedest
