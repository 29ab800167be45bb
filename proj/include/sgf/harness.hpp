#pragma once

// Experiment runner: JSON configs, filter x replicate grids over a shared
// truth per replicate, RMSE aggregation and CSV output.

#include "sgf/error.hpp"
#include "sgf/filters.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/rng.hpp"
#include "sgf/testbeds.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace sgf {

using Json = nlohmann::ordered_json;

// --- RMSE -------------------------------------------------------------------

/// sqrt(1/N sum_i |a_i - b_i|^2).
inline double rmse(const std::vector<Vector>& a, const std::vector<Vector>& b)
{
    require(a.size() == b.size(), ErrorKind::LengthMismatch,
            "rmse inputs have " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " elements");
    require(!a.empty(), ErrorKind::LengthMismatch, "rmse needs at least one element");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i].size() == b[i].size(), ErrorKind::LengthMismatch, "rmse elements differ in dimension");
        acc += (a[i] - b[i]).squaredNorm();
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

// --- configuration ----------------------------------------------------------

enum class TestbedType { Bistable, Lorenz63, Tracking };

struct TestbedConfig {
    TestbedType type = TestbedType::Bistable;
    BistableSpec bistable;
    Lorenz63Spec lorenz63;
    TurnModelSpec tracking;
    /// Fixed initial truth; when absent each replicate draws it from the prior.
    std::optional<Vector> x0;
    /// Bistable only: force a well switch inside this time window.
    std::optional<std::pair<double, double>> forced_transition;

    double interval() const noexcept
    {
        switch (type) {
        case TestbedType::Bistable: return bistable.interval();
        case TestbedType::Lorenz63: return lorenz63.interval();
        case TestbedType::Tracking: return tracking.interval();
        }
        return 0.0;
    }

    Index state_dim() const noexcept
    {
        switch (type) {
        case TestbedType::Bistable: return 1;
        case TestbedType::Lorenz63: return 3;
        case TestbedType::Tracking: return 5;
        }
        return 0;
    }
};

struct FilterConfig {
    FilterKind kind;
    std::string label;
};

struct ExperimentConfig {
    std::string name;
    TestbedConfig testbed;
    std::vector<FilterConfig> filters;
    std::size_t replicates = 1;
    std::size_t steps = 1;
    std::uint64_t seed = 0;
    Gaussian prior;
    std::string output_dir = "out";
    /// Inclusive step range for time-averaged RMSE.
    std::pair<std::size_t, std::size_t> rmse_window{1, 1};
    unsigned threads = 0; // 0: hardware concurrency
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what)
{
    throw Error(ErrorKind::ConfigError, what);
}

inline Vector json_vector(const Json& j, const std::string& what)
{
    if (!j.is_array()) {
        config_error(what + " must be an array of numbers");
    }
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            config_error(what + " must contain only numbers");
        }
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline Matrix json_matrix(const Json& j, const std::string& what)
{
    if (!j.is_array() || j.empty()) {
        config_error(what + " must be a non-empty array of rows");
    }
    const auto rows = static_cast<Index>(j.size());
    Matrix m(rows, rows);
    for (Index r = 0; r < rows; ++r) {
        const Vector row = json_vector(j[static_cast<std::size_t>(r)], what + " row");
        if (row.size() != rows) {
            config_error(what + " must be square");
        }
        m.row(r) = row.transpose();
    }
    return m;
}

inline Json vector_json(const Vector& v)
{
    Json j = Json::array();
    for (Index i = 0; i < v.size(); ++i) {
        j.push_back(v(i));
    }
    return j;
}

inline Json matrix_json(const Matrix& m)
{
    Json j = Json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        j.push_back(vector_json(m.row(r).transpose()));
    }
    return j;
}

template <typename T>
T get_or(const Json& obj, const char* key, T fallback)
{
    if (!obj.contains(key)) {
        return fallback;
    }
    try {
        return obj.at(key).get<T>();
    }
    catch (const nlohmann::json::exception&) {
        config_error(std::string("field '") + key + "' has the wrong type");
    }
}

inline const Json& require_field(const Json& obj, const char* key)
{
    if (!obj.contains(key)) {
        config_error(std::string("missing field '") + key + "'");
    }
    return obj.at(key);
}

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& where)
{
    for (const auto& item : obj.items()) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return item.key() == k; }) ==
            known.end()) {
            config_error("unknown field '" + item.key() + "' in " + where);
        }
    }
}

inline TestbedConfig parse_testbed(const Json& j)
{
    if (!j.is_object()) {
        config_error("testbed must be an object");
    }
    TestbedConfig tb;
    const auto type = get_or<std::string>(j, "type", "");
    if (type == "bistable") {
        reject_unknown(j, {"type", "beta", "sigma", "dt", "substeps", "obs_kind", "obs_shift", "obs_var", "x0",
                           "forced_transition"},
                       "bistable testbed");
        tb.type = TestbedType::Bistable;
        auto& s = tb.bistable;
        s.beta = get_or(j, "beta", s.beta);
        s.sigma = get_or(j, "sigma", s.sigma);
        s.dt = get_or(j, "dt", s.dt);
        s.substeps = get_or(j, "substeps", s.substeps);
        const auto kind = get_or<std::string>(j, "obs_kind", "identity");
        if (kind == "identity") {
            s.obs_kind = BistableObservation::Identity;
        }
        else if (kind == "shifted_quadratic") {
            s.obs_kind = BistableObservation::ShiftedQuadratic;
        }
        else {
            config_error("obs_kind must be 'identity' or 'shifted_quadratic'");
        }
        s.obs_shift = get_or(j, "obs_shift", s.obs_shift);
        s.obs_var = get_or(j, "obs_var", s.obs_var);
        if (j.contains("forced_transition")) {
            const Vector w = json_vector(j.at("forced_transition"), "forced_transition");
            if (w.size() != 2 || !(w(0) < w(1))) {
                config_error("forced_transition must be [start, end] with start < end");
            }
            tb.forced_transition = std::make_pair(w(0), w(1));
        }
    }
    else if (type == "lorenz63") {
        reject_unknown(j, {"type", "sigma", "rho", "beta", "g", "dt", "substeps", "obs_shift", "obs_var", "x0"},
                       "lorenz63 testbed");
        tb.type = TestbedType::Lorenz63;
        auto& s = tb.lorenz63;
        s.sigma = get_or(j, "sigma", s.sigma);
        s.rho = get_or(j, "rho", s.rho);
        s.beta = get_or(j, "beta", s.beta);
        if (j.contains("g")) {
            const Vector g = json_vector(j.at("g"), "g");
            if (g.size() != 3) {
                config_error("g must have three entries");
            }
            s.g = g;
        }
        s.dt = get_or(j, "dt", s.dt);
        s.substeps = get_or(j, "substeps", s.substeps);
        s.obs_shift = get_or(j, "obs_shift", s.obs_shift);
        s.obs_var = get_or(j, "obs_var", s.obs_var);
    }
    else if (type == "tracking") {
        reject_unknown(j, {"type", "dt", "q", "range_var", "bearing_var", "substeps", "x0"}, "tracking testbed");
        tb.type = TestbedType::Tracking;
        auto& s = tb.tracking;
        s.dt = get_or(j, "dt", s.dt);
        s.q = get_or(j, "q", s.q);
        s.range_var = get_or(j, "range_var", s.range_var);
        s.bearing_var = get_or(j, "bearing_var", s.bearing_var);
        s.substeps = get_or(j, "substeps", s.substeps);
    }
    else {
        config_error("testbed.type must be 'bistable', 'lorenz63' or 'tracking'");
    }
    if (j.contains("x0")) {
        tb.x0 = json_vector(j.at("x0"), "x0");
        if (tb.x0->size() != tb.state_dim()) {
            config_error("x0 has the wrong dimension for this testbed");
        }
    }
    try {
        tb.bistable.validate();
        tb.lorenz63.validate();
        tb.tracking.validate();
    }
    catch (const Error& e) {
        config_error(e.what());
    }
    return tb;
}

inline FilterConfig parse_filter(const Json& j)
{
    if (!j.is_object()) {
        config_error("each filter must be an object");
    }
    reject_unknown(j, {"family", "rule_degree", "sample_count", "label", "grad_tol", "max_iter"}, "filter");
    FilterConfig fc;
    const auto family = parse_family(get_or<std::string>(require_field(j, "family").is_string() ? j : Json::object(),
                                                         "family", ""));
    if (!family) {
        config_error("filter family must be one of LGF, VGF, CGF, PGF, LGSF, VGSF, CGSF, PGSF");
    }
    fc.kind.family = *family;
    fc.kind.rule_degree = get_or(j, "rule_degree", fc.kind.rule_degree);
    fc.kind.sample_count = get_or(j, "sample_count", fc.kind.sample_count);
    fc.kind.variational.grad_tol = get_or(j, "grad_tol", fc.kind.variational.grad_tol);
    fc.kind.variational.max_iter = get_or(j, "max_iter", fc.kind.variational.max_iter);
    try {
        fc.kind.validate();
        require(fc.kind.variational.grad_tol > 0.0 && fc.kind.variational.max_iter >= 1,
                ErrorKind::InvalidArgument, "grad_tol must be > 0 and max_iter >= 1");
    }
    catch (const Error& e) {
        config_error(e.what());
    }
    fc.label = get_or<std::string>(j, "label", fc.kind.label());
    if (fc.label.empty() || fc.label.find_first_of(",\"\n\r") != std::string::npos) {
        config_error("filter label must be non-empty and free of commas, quotes and newlines");
    }
    return fc;
}

} // namespace detail

/// Parses and validates a config document. Throws Error(ConfigError).
inline ExperimentConfig parse_config(const Json& j)
{
    using namespace detail;
    if (!j.is_object()) {
        config_error("config must be a JSON object");
    }
    reject_unknown(j, {"name", "testbed", "filters", "replicates", "steps", "seed", "prior", "output_dir",
                       "rmse_window", "threads"},
                   "config");
    ExperimentConfig c;
    c.name = get_or<std::string>(j, "name", "experiment");
    c.testbed = parse_testbed(require_field(j, "testbed"));

    const Json& filters = require_field(j, "filters");
    if (!filters.is_array() || filters.empty()) {
        config_error("filters must be a non-empty array");
    }
    for (const auto& f : filters) {
        c.filters.push_back(parse_filter(f));
    }
    for (std::size_t a = 0; a < c.filters.size(); ++a) {
        for (std::size_t b = a + 1; b < c.filters.size(); ++b) {
            if (c.filters[a].label == c.filters[b].label) {
                config_error("duplicate filter label '" + c.filters[a].label + "'");
            }
        }
    }

    const auto replicates = get_or<std::int64_t>(j, "replicates", 1);
    const auto steps = get_or<std::int64_t>(require_field(j, "steps").is_number_integer() ? j : Json::object(),
                                            "steps", 0);
    if (replicates < 1) {
        config_error("replicates must be >= 1");
    }
    if (steps < 1) {
        config_error("steps must be an integer >= 1");
    }
    c.replicates = static_cast<std::size_t>(replicates);
    c.steps = static_cast<std::size_t>(steps);
    if (j.contains("seed") && !j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
        config_error("seed must be an unsigned integer");
    }
    c.seed = get_or<std::uint64_t>(j, "seed", 0);

    const Json& prior = require_field(j, "prior");
    if (!prior.is_object()) {
        config_error("prior must be an object with mean and cov");
    }
    reject_unknown(prior, {"mean", "cov"}, "prior");
    c.prior.mean = json_vector(require_field(prior, "mean"), "prior.mean");
    c.prior.cov = json_matrix(require_field(prior, "cov"), "prior.cov");
    if (c.prior.mean.size() != c.testbed.state_dim() || c.prior.cov.rows() != c.testbed.state_dim()) {
        config_error("prior dimension does not match the testbed state dimension");
    }
    if ((c.prior.cov - c.prior.cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + c.prior.cov.cwiseAbs().maxCoeff()) ||
        Eigen::SelfAdjointEigenSolver<Matrix>(c.prior.cov).eigenvalues().minCoeff() < 0.0) {
        config_error("prior.cov must be symmetric positive semi-definite");
    }
    c.output_dir = get_or<std::string>(j, "output_dir", "out/" + c.name);

    const std::size_t window_start = c.testbed.type == TestbedType::Tracking ? std::min<std::size_t>(50, c.steps) : 1;
    c.rmse_window = {window_start, c.steps};
    if (j.contains("rmse_window")) {
        const Vector w = json_vector(j.at("rmse_window"), "rmse_window");
        if (w.size() != 2 || w(0) < 1 || w(1) < w(0) || w(1) > static_cast<double>(c.steps) ||
            w(0) != std::floor(w(0)) || w(1) != std::floor(w(1))) {
            config_error("rmse_window must be [first, last] integer steps within 1..steps");
        }
        c.rmse_window = {static_cast<std::size_t>(w(0)), static_cast<std::size_t>(w(1))};
    }
    c.threads = get_or<unsigned>(j, "threads", 0);

    if (c.testbed.forced_transition) {
        if (c.testbed.type != TestbedType::Bistable) {
            config_error("forced_transition applies to the bistable testbed only");
        }
        if (!c.testbed.x0 || (*c.testbed.x0)(0) == 0.0) {
            config_error("forced_transition needs a non-zero x0");
        }
        if (c.testbed.forced_transition->second > c.testbed.interval() * static_cast<double>(c.steps)) {
            config_error("forced_transition window extends past the simulated horizon");
        }
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::ConfigError, "cannot open config file '" + path + "'");
    }
    Json j;
    try {
        j = Json::parse(in);
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

/// Resolved config with every default filled in.
inline Json config_to_json(const ExperimentConfig& c)
{
    using detail::matrix_json;
    using detail::vector_json;
    Json tb;
    switch (c.testbed.type) {
    case TestbedType::Bistable: {
        const auto& s = c.testbed.bistable;
        tb = {{"type", "bistable"}, {"beta", s.beta}, {"sigma", s.sigma}, {"dt", s.dt}, {"substeps", s.substeps},
              {"obs_kind", s.obs_kind == BistableObservation::Identity ? "identity" : "shifted_quadratic"},
              {"obs_shift", s.obs_shift}, {"obs_var", s.obs_var}};
        if (c.testbed.forced_transition) {
            tb["forced_transition"] = {c.testbed.forced_transition->first, c.testbed.forced_transition->second};
        }
        break;
    }
    case TestbedType::Lorenz63: {
        const auto& s = c.testbed.lorenz63;
        tb = {{"type", "lorenz63"}, {"sigma", s.sigma}, {"rho", s.rho}, {"beta", s.beta},
              {"g", vector_json(s.g)}, {"dt", s.dt}, {"substeps", s.substeps}, {"obs_shift", s.obs_shift},
              {"obs_var", s.obs_var}};
        break;
    }
    case TestbedType::Tracking: {
        const auto& s = c.testbed.tracking;
        tb = {{"type", "tracking"}, {"dt", s.dt}, {"q", s.q}, {"range_var", s.range_var},
              {"bearing_var", s.bearing_var}, {"substeps", s.substeps}};
        break;
    }
    }
    if (c.testbed.x0) {
        tb["x0"] = vector_json(*c.testbed.x0);
    }
    Json filters = Json::array();
    for (const auto& f : c.filters) {
        Json fj = {{"family", std::string(to_string(f.kind.family))}, {"label", f.label}};
        if (f.kind.random()) {
            fj["sample_count"] = f.kind.sample_count;
        }
        else if (f.kind.style() == UpdateStyle::Points) {
            fj["rule_degree"] = f.kind.rule_degree;
        }
        else if (f.kind.style() == UpdateStyle::Variational) {
            fj["grad_tol"] = f.kind.variational.grad_tol;
            fj["max_iter"] = f.kind.variational.max_iter;
        }
        filters.push_back(std::move(fj));
    }
    return Json{{"name", c.name},
                {"testbed", tb},
                {"filters", filters},
                {"replicates", c.replicates},
                {"steps", c.steps},
                {"seed", c.seed},
                {"prior", {{"mean", vector_json(c.prior.mean)}, {"cov", matrix_json(c.prior.cov)}}},
                {"output_dir", c.output_dir},
                {"rmse_window", {c.rmse_window.first, c.rmse_window.second}}};
}

inline Models testbed_models(const TestbedConfig& tb)
{
    switch (tb.type) {
    case TestbedType::Bistable: return bistable_models(tb.bistable);
    case TestbedType::Lorenz63: return lorenz63_models(tb.lorenz63);
    case TestbedType::Tracking: return turn_models(tb.tracking);
    }
    throw Error(ErrorKind::ConfigError, "unknown testbed");
}

// --- results ----------------------------------------------------------------

/// A named group of state components scored together.
struct Metric {
    std::string name;
    std::vector<Index> components;
    bool post_transition = false;
};

inline std::vector<Metric> metrics_for(const TestbedConfig& tb)
{
    std::vector<Metric> out;
    switch (tb.type) {
    case TestbedType::Bistable:
        out.push_back({"state", {0}, false});
        if (tb.forced_transition) {
            out.push_back({"state_post_transition", {0}, true});
        }
        break;
    case TestbedType::Lorenz63:
        out = {{"state", {0, 1, 2}, false}, {"x1", {0}, false}, {"x2", {1}, false}, {"x3", {2}, false}};
        break;
    case TestbedType::Tracking:
        out = {{"state", {0, 1, 2, 3, 4}, false},
               {"position", {0, 2}, false},
               {"velocity", {1, 3}, false},
               {"turn_rate", {4}, false}};
        break;
    }
    return out;
}

struct FilterRun {
    /// Posterior means for steps 0..steps; NaN after a failure.
    std::vector<Vector> estimates;
    std::vector<NumericEvents> events;
    std::optional<std::string> failure;
};

struct ReplicateResult {
    std::uint64_t seed = 0;
    TruthRun truth;
    std::optional<double> transition_time;
    std::vector<FilterRun> runs; // parallel to config.filters
};

struct SummaryRow {
    std::string filter;
    std::string metric;
    double mean_rmse = 0.0;
    double var_rmse = 0.0;
};

struct RunResult {
    ExperimentConfig config;
    std::vector<Metric> metrics;
    std::vector<ReplicateResult> replicates;

    double interval() const noexcept { return config.testbed.interval(); }

    const Metric& metric(const std::string& name) const
    {
        for (const auto& m : metrics) {
            if (m.name == name) {
                return m;
            }
        }
        throw Error(ErrorKind::InvalidArgument, "unknown metric '" + name + "'");
    }

    std::size_t filter_index(const std::string& label) const
    {
        for (std::size_t f = 0; f < config.filters.size(); ++f) {
            if (config.filters[f].label == label) {
                return f;
            }
        }
        throw Error(ErrorKind::InvalidArgument, "unknown filter '" + label + "'");
    }

    Vector project(const Vector& v, const Metric& m) const
    {
        Vector out(static_cast<Index>(m.components.size()));
        for (std::size_t i = 0; i < m.components.size(); ++i) {
            out(static_cast<Index>(i)) = v(m.components[i]);
        }
        return out;
    }

    /// |estimate - truth| on the metric's components at one step.
    double step_error(std::size_t r, std::size_t f, std::size_t step, const Metric& m) const
    {
        const auto& rep = replicates[r];
        return (project(rep.runs[f].estimates[step], m) - project(rep.truth.truth[step], m)).norm();
    }

    /// Steps the metric averages over for replicate r.
    std::vector<std::size_t> window(std::size_t r, const Metric& m) const
    {
        std::vector<std::size_t> steps;
        for (std::size_t n = config.rmse_window.first; n <= config.rmse_window.second; ++n) {
            if (m.post_transition) {
                const auto& t = replicates[r].transition_time;
                if (!t || static_cast<double>(n) * interval() < *t) {
                    continue;
                }
            }
            steps.push_back(n);
        }
        return steps;
    }

    /// RMSE over time steps of one replicate's estimates.
    double time_averaged_rmse(std::size_t r, std::size_t f, const Metric& m) const
    {
        std::vector<Vector> est;
        std::vector<Vector> truth;
        for (const std::size_t n : window(r, m)) {
            est.push_back(project(replicates[r].runs[f].estimates[n], m));
            truth.push_back(project(replicates[r].truth.truth[n], m));
        }
        if (est.empty()) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return rmse(est, truth);
    }

    /// RMSE over the completed replicates at each step 1..steps.
    std::vector<double> rmse_curve(std::size_t f, const Metric& m) const
    {
        std::vector<double> curve;
        for (std::size_t n = 1; n <= config.steps; ++n) {
            std::vector<Vector> est;
            std::vector<Vector> truth;
            for (const auto& rep : replicates) {
                if (rep.runs[f].failure) {
                    continue;
                }
                est.push_back(project(rep.runs[f].estimates[n], m));
                truth.push_back(project(rep.truth.truth[n], m));
            }
            curve.push_back(est.empty() ? std::numeric_limits<double>::quiet_NaN() : rmse(est, truth));
        }
        return curve;
    }

    /// Mean and sample variance over replicates of the time-averaged RMSE.
    std::vector<SummaryRow> summary() const
    {
        std::vector<SummaryRow> rows;
        for (std::size_t f = 0; f < config.filters.size(); ++f) {
            for (const auto& m : metrics) {
                std::vector<double> values;
                for (std::size_t r = 0; r < replicates.size(); ++r) {
                    // Trajectories that stopped early are counted in
                    // per_step.csv but left out of the aggregate.
                    if (!window(r, m).empty() && !replicates[r].runs[f].failure) {
                        values.push_back(time_averaged_rmse(r, f, m));
                    }
                }
                SummaryRow row{config.filters[f].label, m.name, std::numeric_limits<double>::quiet_NaN(), 0.0};
                if (!values.empty()) {
                    double sum = 0.0;
                    for (const double v : values) {
                        sum += v;
                    }
                    row.mean_rmse = sum / static_cast<double>(values.size());
                    if (values.size() > 1) {
                        double ss = 0.0;
                        for (const double v : values) {
                            ss += (v - row.mean_rmse) * (v - row.mean_rmse);
                        }
                        row.var_rmse = ss / static_cast<double>(values.size() - 1);
                    }
                }
                rows.push_back(std::move(row));
            }
        }
        return rows;
    }

    std::size_t failures() const
    {
        std::size_t count = 0;
        for (const auto& rep : replicates) {
            for (const auto& run : rep.runs) {
                count += run.failure ? 1 : 0;
            }
        }
        return count;
    }
};

namespace detail {

inline ReplicateResult run_replicate(const ExperimentConfig& config, const Models& models, std::size_t r)
{
    ReplicateResult rep;
    rep.seed = replicate_seed(config.seed, r);
    Rng truth_rng(rep.seed);
    const Vector x0 = config.testbed.x0 ? *config.testbed.x0 : sample_gaussian(config.prior, truth_rng);
    if (config.testbed.forced_transition) {
        auto run = simulate_bistable_transition(config.testbed.bistable, models.observation, x0(0), config.steps,
                                                config.testbed.forced_transition->first,
                                                config.testbed.forced_transition->second, truth_rng);
        rep.truth = std::move(run.run);
        rep.transition_time = run.transition_time;
    }
    else {
        rep.truth = simulate_truth(models.process, models.observation, x0, config.steps, truth_rng);
    }

    const Index d = config.testbed.state_dim();
    for (const auto& filter : config.filters) {
        Rng filter_rng(stream_seed(rep.seed, filter.label));
        const FilterTrajectory traj =
            run_filter(filter.kind, models.process, models.observation, config.prior, rep.truth.observations,
                       &filter_rng);
        FilterRun run;
        for (const auto& rec : traj.records) {
            run.estimates.push_back(rec.posterior.mean);
            run.events.push_back(rec.events);
        }
        while (run.estimates.size() < config.steps + 1) {
            run.estimates.push_back(Vector::Constant(d, std::numeric_limits<double>::quiet_NaN()));
            run.events.emplace_back();
        }
        if (traj.failure) {
            run.failure = traj.failure->what();
        }
        rep.runs.push_back(std::move(run));
    }
    return rep;
}

} // namespace detail

/// Runs every filter on every replicate. Each replicate simulates one truth
/// that all filters share; random filters draw from a stream keyed by their
/// label. Output is independent of thread count and completion order.
inline RunResult run_experiment(const ExperimentConfig& config)
{
    const Models models = testbed_models(config.testbed);
    RunResult result;
    result.config = config;
    result.metrics = metrics_for(config.testbed);
    result.replicates.resize(config.replicates);

    unsigned threads = config.threads != 0 ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, config.replicates));

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t r = next++; r < config.replicates; r = next++) {
            try {
                result.replicates[r] = detail::run_replicate(config, models, r);
            }
            catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    if (threads <= 1) {
        worker();
    }
    else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    return result;
}

// --- output -----------------------------------------------------------------

/// Shortest decimal that round-trips; "nan"/"inf" for non-finite values.
inline std::string format_number(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Writes per_step.csv, summary.csv, metrics.csv, rmse_curve.csv and
/// config_echo into `dir`.
inline void write_results(const RunResult& result, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorKind::IoError, "cannot create '" + dir.string() + "': " + ec.message());
    }
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::IoError, "cannot write '" + (dir / name).string() + "'");
        }
        return out;
    };
    const auto& cfg = result.config;
    const Metric& state = result.metric("state");
    const double dt = result.interval();

    {
        auto out = open("per_step.csv");
        out << "replicate,filter,step,time,rmse,fallbacks,jitters\n";
        for (std::size_t r = 0; r < result.replicates.size(); ++r) {
            for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
                const auto& run = result.replicates[r].runs[f];
                for (std::size_t n = 1; n <= cfg.steps; ++n) {
                    out << r << ',' << cfg.filters[f].label << ',' << n << ','
                        << format_number(static_cast<double>(n) * dt) << ','
                        << format_number(result.step_error(r, f, n, state)) << ',' << run.events[n].fallbacks << ','
                        << run.events[n].jitters << '\n';
                }
            }
        }
    }
    {
        auto out = open("metrics.csv");
        out << "replicate,filter,step,time,metric,rmse\n";
        for (std::size_t r = 0; r < result.replicates.size(); ++r) {
            for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
                for (std::size_t n = 1; n <= cfg.steps; ++n) {
                    for (const auto& m : result.metrics) {
                        if (m.post_transition) {
                            continue;
                        }
                        out << r << ',' << cfg.filters[f].label << ',' << n << ','
                            << format_number(static_cast<double>(n) * dt) << ',' << m.name << ','
                            << format_number(result.step_error(r, f, n, m)) << '\n';
                    }
                }
            }
        }
    }
    {
        auto out = open("rmse_curve.csv");
        out << "filter,metric,step,time,rmse\n";
        for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
            for (const auto& m : result.metrics) {
                if (m.post_transition) {
                    continue;
                }
                const auto curve = result.rmse_curve(f, m);
                for (std::size_t n = 1; n <= cfg.steps; ++n) {
                    out << cfg.filters[f].label << ',' << m.name << ',' << n << ','
                        << format_number(static_cast<double>(n) * dt) << ',' << format_number(curve[n - 1]) << '\n';
                }
            }
        }
    }
    {
        auto out = open("summary.csv");
        out << "filter,metric,mean_rmse,var_rmse\n";
        for (const auto& row : result.summary()) {
            out << row.filter << ',' << row.metric << ',' << format_number(row.mean_rmse) << ','
                << format_number(row.var_rmse) << '\n';
        }
    }
    {
        auto out = open("config_echo");
        out << config_to_json(cfg).dump(2) << '\n';
    }
}

} // namespace sgf
