#include "godeflow/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "godeflow/csv.hpp"
#include "godeflow/errors.hpp"
#include "godeflow/rng.hpp"

namespace godeflow::train {

using csv::format_double;

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

std::size_t bucket_index(std::size_t degree) {
    std::size_t k = 0;
    for (std::size_t bound : kDegreeBounds) {
        if (degree <= bound) return k;
        ++k;
    }
    return k;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

// Column means and standard deviations over the listed rows.
void fit_standardizer(const Matrix& x, const std::vector<std::size_t>& rows, Vector& mean, Vector& scale) {
    const auto d = x.cols();
    mean = Vector::Zero(d);
    scale = Vector::Zero(d);
    for (std::size_t r : rows) mean += x.row(static_cast<Eigen::Index>(r)).transpose();
    mean /= static_cast<double>(rows.size());
    for (std::size_t r : rows) {
        scale += (x.row(static_cast<Eigen::Index>(r)).transpose() - mean).array().square().matrix();
    }
    scale = (scale / static_cast<double>(rows.size())).cwiseSqrt();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (scale(j) < 1e-12) scale(j) = 1.0;
    }
}

// Standardized rows with a leading intercept column.
Matrix design(const Matrix& x, const std::vector<std::size_t>& rows, const Vector& mean, const Vector& scale) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols() + 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(rows[k]);
        out(static_cast<Eigen::Index>(k), 0) = 1.0;
        out.row(static_cast<Eigen::Index>(k)).tail(x.cols()) =
            ((x.row(r).transpose() - mean).array() / scale.array()).matrix().transpose();
    }
    return out;
}

Vector fit_logistic(const Matrix& x, const Vector& y) {
    const double lambda = 1e-4 * static_cast<double>(x.rows());
    Vector beta = Vector::Zero(x.cols());
    for (int iter = 0; iter < 100; ++iter) {
        const Vector eta = x * beta;
        const Vector p = eta.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        const Vector w = (p.array() * (1.0 - p.array())).matrix();
        Matrix h = x.transpose() * w.asDiagonal() * x;
        h.diagonal().array() += lambda;
        const Vector g = x.transpose() * (y - p) - lambda * beta;
        const Vector delta = h.ldlt().solve(g);
        beta += delta;
        if (delta.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }
    return beta;
}

Vector fit_ridge(const Matrix& x, const Vector& y) {
    const double lambda = 1e-6 * static_cast<double>(x.rows());
    Matrix h = x.transpose() * x;
    h.diagonal().array() += lambda;
    return h.ldlt().solve(x.transpose() * y);
}

}  // namespace

std::string DegreeBucket::label() const {
    if (!upper) return ">" + std::to_string(lower);
    return "(" + std::to_string(lower) + "," + std::to_string(*upper) + "]";
}

RealGrid ModelPredictor::predict(const sim::ObservationalDataset& ds, const BinaryGrid& treatments,
                                 std::size_t start_time, std::size_t horizon) const {
    ad::NoGradGuard no_grad;
    const auto graph = model::GraphOperator::from_graph(ds.graph);
    const auto z0 = model::encode_initial(params_, ds.covariates.row(0), ds.static_covariates);
    // Rows before start_time are the factual path, so this is the factual
    // solve up to start_time followed by the counterfactual continuation.
    const auto traj = model::solve_trajectory(params_, z0, treatments, graph, 0, start_time + horizon,
                                              params_.config.substeps);
    RealGrid out(horizon, ds.num_nodes());
    for (std::size_t k = 0; k < horizon; ++k) {
        const auto y = model::decode_outcome(params_, traj.states[start_time + 1 + k]);
        std::copy(y.values().begin(), y.values().end(), out.row(k).begin());
    }
    return out;
}

RealGrid OraclePredictor::predict(const sim::ObservationalDataset& ds, const BinaryGrid& treatments,
                                  std::size_t start_time, std::size_t horizon) const {
    const auto cf = sim::replay_treatments(ds, treatments, start_time);
    RealGrid out(horizon, ds.num_nodes());
    for (std::size_t k = 0; k < horizon; ++k) {
        const auto row = cf.covariates.row(start_time + 1 + k);
        std::copy(row.begin(), row.end(), out.row(k).begin());
    }
    return out;
}

RealGrid ConstantPredictor::predict(const sim::ObservationalDataset& ds, const BinaryGrid&, std::size_t,
                                    std::size_t horizon) const {
    return RealGrid(horizon, ds.num_nodes(), value_);
}

EvalReport evaluate_counterfactual(const CounterfactualPredictor& predictor, const sim::ObservationalDataset& ds,
                                   const sim::InterventionSpec& spec, std::size_t horizon) {
    if (horizon < 1) throw ParameterError("evaluate: horizon must be at least 1");
    if (spec.start_time + horizon > ds.horizon()) {
        throw ParameterError("evaluate: start_time " + std::to_string(spec.start_time) + " + horizon " +
                             std::to_string(horizon) + " exceeds T = " + std::to_string(ds.horizon()));
    }
    const auto oracle = sim::counterfactual_oracle(ds, spec);
    const auto pred = predictor.predict(ds, oracle.treatments, spec.start_time, horizon);
    const std::size_t n = ds.num_nodes();
    if (pred.rows() != horizon || pred.cols() != n) throw DimensionError("evaluate: predictor returned wrong shape");

    EvalReport report;
    report.flip_ratio = spec.flip_mask ? std::numeric_limits<double>::quiet_NaN() : spec.flip_ratio;
    report.start_time = spec.start_time;
    report.seed = spec.seed;

    const std::size_t num_buckets = std::size(kDegreeBounds) + 1;
    std::vector<double> bucket_sum(num_buckets, 0.0);
    std::vector<std::size_t> bucket_nodes(num_buckets, 0);
    std::vector<std::size_t> node_bucket(n);
    for (std::size_t i = 0; i < n; ++i) {
        node_bucket[i] = bucket_index(ds.graph.degree(i));
        ++bucket_nodes[node_bucket[i]];
    }

    report.per_step_mse.assign(horizon, 0.0);
    for (std::size_t k = 0; k < horizon; ++k) {
        const auto truth = oracle.covariates.row(spec.start_time + 1 + k);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = pred(k, i) - truth[i];
            sum += e * e;
            bucket_sum[node_bucket[i]] += e * e;
        }
        report.per_step_mse[k] = sum / static_cast<double>(n);
    }
    report.overall_mse = std::accumulate(report.per_step_mse.begin(), report.per_step_mse.end(), 0.0) /
                         static_cast<double>(horizon);

    std::size_t lower = 0;
    for (std::size_t b = 0; b < num_buckets; ++b) {
        DegreeBucket bucket;
        bucket.lower = lower;
        if (b < std::size(kDegreeBounds)) {
            bucket.upper = kDegreeBounds[b];
            lower = kDegreeBounds[b];
        }
        bucket.node_count = bucket_nodes[b];
        bucket.mse = bucket_nodes[b] == 0
                         ? std::numeric_limits<double>::quiet_NaN()
                         : bucket_sum[b] / static_cast<double>(bucket_nodes[b] * horizon);
        report.degree_buckets.push_back(bucket);
    }
    return report;
}

EvalReport evaluate_counterfactual(const model::ModelParams& params, const sim::ObservationalDataset& ds,
                                   const sim::InterventionSpec& spec, std::size_t horizon) {
    return evaluate_counterfactual(ModelPredictor(params), ds, spec, horizon);
}

BalanceReport balance_from_features(const RealGrid& features, std::span<const int> treatments,
                                    std::span<const double> interference, double holdout_fraction,
                                    std::uint64_t seed) {
    const std::size_t rows = features.rows();
    if (treatments.size() != rows || interference.size() != rows) {
        throw DimensionError("balance: features have " + std::to_string(rows) + " rows, labels " +
                             std::to_string(treatments.size()) + " and " + std::to_string(interference.size()));
    }
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ParameterError("balance: holdout_fraction must lie in (0, 1)");
    }
    const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(rows)));
    if (n_hold == 0 || n_hold >= rows) throw ParameterError("balance: split leaves an empty train or holdout set");

    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(seed, RngStream::diagnostics);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());

    std::size_t treated = 0;
    for (std::size_t r : fit) treated += treatments[r] != 0;
    if (treated == 0 || treated == fit.size()) throw ParameterError("balance: training split has a single class");

    const auto d = static_cast<Eigen::Index>(features.cols());
    Matrix z = Eigen::Map<const Matrix>(features.data().data(), static_cast<Eigen::Index>(rows), d);

    BalanceReport report;
    {
        Vector mean, scale;
        fit_standardizer(z, fit, mean, scale);
        const Matrix x_fit = design(z, fit, mean, scale);
        Vector y(static_cast<Eigen::Index>(fit.size()));
        for (std::size_t k = 0; k < fit.size(); ++k) y(static_cast<Eigen::Index>(k)) = treatments[fit[k]];
        const Vector beta = fit_logistic(x_fit, y);
        const Vector eta = design(z, hold, mean, scale) * beta;
        std::size_t correct = 0;
        for (std::size_t k = 0; k < hold.size(); ++k) {
            correct += (eta(static_cast<Eigen::Index>(k)) > 0.0 ? 1 : 0) == (treatments[hold[k]] != 0 ? 1 : 0);
        }
        report.treatment_accuracy = static_cast<double>(correct) / static_cast<double>(hold.size());
    }
    {
        Matrix za(static_cast<Eigen::Index>(rows), d + 1);
        za.leftCols(d) = z;
        for (std::size_t r = 0; r < rows; ++r) za(static_cast<Eigen::Index>(r), d) = treatments[r];
        Vector mean, scale;
        fit_standardizer(za, fit, mean, scale);
        const Matrix x_fit = design(za, fit, mean, scale);
        Vector y(static_cast<Eigen::Index>(fit.size()));
        for (std::size_t k = 0; k < fit.size(); ++k) y(static_cast<Eigen::Index>(k)) = interference[fit[k]];
        const Vector beta = fit_ridge(x_fit, y);
        const Vector pred = design(za, hold, mean, scale) * beta;
        double mean_hold = 0.0;
        for (std::size_t r : hold) mean_hold += interference[r];
        mean_hold /= static_cast<double>(hold.size());
        double sse = 0.0, sst = 0.0;
        for (std::size_t k = 0; k < hold.size(); ++k) {
            const double g = interference[hold[k]];
            sse += (g - pred(static_cast<Eigen::Index>(k))) * (g - pred(static_cast<Eigen::Index>(k)));
            sst += (g - mean_hold) * (g - mean_hold);
        }
        report.interference_r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
    }
    return report;
}

RealGrid latent_features(const model::ModelParams& params, const sim::ObservationalDataset& ds) {
    ad::NoGradGuard no_grad;
    const auto graph = model::GraphOperator::from_graph(ds.graph);
    const auto z0 = model::encode_initial(params, ds.covariates.row(0), ds.static_covariates);
    const auto traj =
        model::solve_trajectory(params, z0, ds.treatments, graph, 0, ds.horizon(), params.config.substeps);
    const std::size_t n = ds.num_nodes();
    const std::size_t d = params.config.latent_dim;
    RealGrid out(traj.states.size() * n, d);
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        const auto v = traj.states[t].values();
        std::copy(v.begin(), v.end(), out.row(t * n).begin());
    }
    return out;
}

BalanceReport balance_diagnostics(const model::ModelParams& params, const sim::ObservationalDataset& ds,
                                  double holdout_fraction, std::uint64_t seed) {
    const auto features = latent_features(params, ds);
    return balance_from_features(features, ds.treatments.data(), ds.interference.data(), holdout_fraction, seed);
}

EvalReport evaluate_on_graph(const model::ModelParams& params, const graph::Graph& graph,
                             const sim::SimParams& sim_params, const sim::InterventionSpec& spec,
                             std::size_t horizon) {
    const auto ds = sim::simulate_trajectory(graph, sim_params);
    return evaluate_counterfactual(params, ds, spec, horizon);
}

EvalReport generalization_eval(const model::ModelParams& params, const graph::GraphPartition& partition,
                               const sim::SimParams& sim_params, const sim::InterventionSpec& spec,
                               std::size_t horizon) {
    const std::size_t n = partition.train_nodes.size() + partition.valid_nodes.size() + partition.test_nodes.size();
    graph::check_disjoint(partition, n);
    if (partition.test_graph.num_nodes() != partition.test_nodes.size()) {
        throw ParameterError("generalization: test subgraph does not match the test node list");
    }
    return evaluate_on_graph(params, partition.test_graph, sim_params, spec, horizon);
}

void export_latents(const model::ModelParams& params, const sim::ObservationalDataset& ds,
                    const std::filesystem::path& path) {
    const auto features = latent_features(params, ds);
    const std::size_t n = ds.num_nodes();
    const std::size_t d = features.cols();
    auto out = open_output(path);
    out << "node,timestamp";
    for (std::size_t k = 0; k < d; ++k) out << ",z" << k;
    out << ",A,G\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t <= ds.horizon(); ++t) {
            out << i << ',' << t;
            for (double v : features.row(t * n + i)) out << ',' << format_double(v);
            out << ',' << ds.treatments(t, i) << ',' << format_double(ds.interference(t, i)) << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::string report_csv_header(std::size_t horizon) {
    std::string h = "flip_ratio,start_time";
    for (std::size_t k = 1; k <= horizon; ++k) h += ",step_" + std::to_string(k);
    return h + ",overall_mse,treatment_accuracy,interference_r2";
}

std::string report_csv_row(const EvalReport& r) {
    std::ostringstream row;
    row << format_double(r.flip_ratio) << ',' << r.start_time;
    for (double v : r.per_step_mse) row << ',' << format_double(v);
    row << ',' << format_double(r.overall_mse) << ',';
    if (r.balance) row << format_double(r.balance->treatment_accuracy);
    row << ',';
    if (r.balance) row << format_double(r.balance->interference_r2);
    return row.str();
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    auto out = open_output(path);
    out << report_csv_header(report.per_step_mse.size()) << '\n' << report_csv_row(report) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void write_degree_report(const std::filesystem::path& path, const EvalReport& report) {
    auto out = open_output(path);
    out << "degree_range,node_count,mse\n";
    for (const auto& b : report.degree_buckets) {
        out << '"' << b.label() << "\"," << b.node_count << ',' << format_double(b.mse) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history) {
    auto out = open_output(path);
    out << "iteration,loss,value,outcome,treatment,interference,validation\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : history) {
        out << r.iteration << ',' << (r.kind == StepKind::full ? "L" : "L_Y") << ',' << format_double(r.value)
            << ',' << format_double(r.outcome) << ',' << opt(r.treatment) << ',' << opt(r.interference) << ','
            << opt(r.validation) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace godeflow::train
