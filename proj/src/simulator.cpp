#include "godeflow/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "godeflow/csv.hpp"
#include "godeflow/errors.hpp"
#include "godeflow/rng.hpp"

namespace godeflow::sim {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> project(const RealGrid& v, const std::vector<double>& w) {
    std::vector<double> out(v.rows(), 0.0);
    for (std::size_t i = 0; i < v.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < v.cols(); ++k) acc += v(i, k) * w[k];
        out[i] = acc;
    }
    return out;
}

std::vector<double> neighbor_means(const graph::Graph& g, std::span<const double> values) {
    std::vector<double> out(g.num_nodes(), 0.0);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        const auto nbrs = g.neighbors(i);
        if (nbrs.empty()) continue;
        double acc = 0.0;
        for (std::size_t j : nbrs) acc += values[j];
        out[i] = acc / static_cast<double>(nbrs.size());
    }
    return out;
}

// Static quantities shared by the factual run and every counterfactual replay.
struct StaticEffects {
    std::vector<double> treatment;      // E_i = w_a . V_i
    std::vector<double> outcome;        // O_i = w_x . V_i
    std::vector<double> nbr_treatment;  // mean of E_j over neighbors
    std::vector<double> nbr_outcome;    // mean of O_j over neighbors
};

StaticEffects static_effects(const graph::Graph& g, const RealGrid& v, const SimParams& params) {
    StaticEffects s;
    s.treatment = project(v, params.w_a);
    s.outcome = project(v, params.w_x);
    s.nbr_treatment = neighbor_means(g, s.treatment);
    s.nbr_outcome = neighbor_means(g, s.outcome);
    return s;
}

// Euler-integrates X over one unit observation interval with doses and noise
// held constant; X is clamped to [x_min, x_max] after every substep.
void advance_interval(const graph::Graph& g, const SimParams& params, const StaticEffects& statics,
                      std::span<double> x, std::span<const double> dose, std::span<const double> noise,
                      std::size_t t, std::size_t& clamp_count) {
    const std::size_t n = g.num_nodes();
    const std::size_t steps = params.substeps();
    const double h = params.dt;
    const auto nbr_dose = neighbor_means(g, dose);
    std::vector<double> dx(n);
    for (std::size_t step = 0; step < steps; ++step) {
        const auto nbr_x = neighbor_means(g, x);
        for (std::size_t i = 0; i < n; ++i) {
            NeighborTerms nbr;
            nbr.has_neighbors = g.degree(i) > 0;
            nbr.mean_x = nbr_x[i];
            nbr.mean_static = statics.nbr_outcome[i];
            nbr.mean_dose = nbr_dose[i];
            dx[i] = pkpd_derivative(x[i], statics.outcome[i], dose[i], noise[i], nbr, params);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double next = x[i] + h * dx[i];
            if (!std::isfinite(next)) {
                std::ostringstream msg;
                msg << "non-finite state at node " << i << ", interval starting t=" << t << ", substep " << step;
                throw SimulationError(msg.str());
            }
            if (next < params.x_min || next > params.x_max) ++clamp_count;
            x[i] = std::clamp(next, params.x_min, params.x_max);
        }
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ParameterError("SimParams: " + what);
}

}  // namespace

void SimParams::validate() const {
    require(std::isfinite(x_min) && x_min > 0.0, "x_min must be positive");
    require(std::isfinite(x_max) && x_max > x_min, "x_max must exceed x_min");
    require(std::isfinite(carrying_capacity) && carrying_capacity > 0.0, "carrying_capacity must be positive");
    require(std::isfinite(dt) && dt > 0.0 && dt <= 1.0, "dt must lie in (0, 1]");
    const double steps = 1.0 / dt;
    require(std::abs(steps - std::round(steps)) < 1e-9, "1/dt must be an integer");
    require(horizon >= 1, "horizon must be at least 1");
    require(noise_std >= 0.0, "noise_std must be non-negative");
    require(full_dose >= 0.0, "full_dose must be non-negative");
    require(static_dim >= 1, "static_dim must be at least 1");
    require(w_a.size() == static_dim && w_x.size() == static_dim,
            "w_a and w_x must have static_dim entries (call draw_mechanisms)");
}

std::size_t SimParams::substeps() const { return static_cast<std::size_t>(std::llround(1.0 / dt)); }

void draw_mechanisms(SimParams& params) {
    auto rng = make_rng(params.seed, RngStream::mechanisms);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(params.static_dim)));
    params.w_a.resize(params.static_dim);
    params.w_x.resize(params.static_dim);
    for (double& w : params.w_a) w = dist(rng);
    for (double& w : params.w_x) w = dist(rng);
}

SimParams default_params(std::uint64_t seed) {
    SimParams p;
    p.seed = seed;
    draw_mechanisms(p);
    return p;
}

nlohmann::json to_json(const SimParams& p) {
    return {{"gamma_a", p.gamma_a},
            {"gamma_n", p.gamma_n},
            {"gamma_f", p.gamma_f},
            {"gamma_g", p.gamma_g},
            {"delta_a", p.delta_a},
            {"delta_n", p.delta_n},
            {"rho_u", p.rho_u},
            {"rho_n", p.rho_n},
            {"rho_f", p.rho_f},
            {"rho_g", p.rho_g},
            {"beta_a", p.beta_a},
            {"beta_n", p.beta_n},
            {"carrying_capacity", p.carrying_capacity},
            {"full_dose", p.full_dose},
            {"x_min", p.x_min},
            {"x_max", p.x_max},
            {"noise_std", p.noise_std},
            {"static_dim", p.static_dim},
            {"w_a", p.w_a},
            {"w_x", p.w_x},
            {"dt", p.dt},
            {"horizon", p.horizon},
            {"seed", p.seed}};
}

SimParams sim_params_from_json(const nlohmann::json& j, SimParams p) {
    if (!j.is_object()) throw ParameterError("sim parameters must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "gamma_a") p.gamma_a = value.get<double>();
            else if (key == "gamma_n") p.gamma_n = value.get<double>();
            else if (key == "gamma_f") p.gamma_f = value.get<double>();
            else if (key == "gamma_g") p.gamma_g = value.get<double>();
            else if (key == "delta_a") p.delta_a = value.get<double>();
            else if (key == "delta_n") p.delta_n = value.get<double>();
            else if (key == "rho_u") p.rho_u = value.get<double>();
            else if (key == "rho_n") p.rho_n = value.get<double>();
            else if (key == "rho_f") p.rho_f = value.get<double>();
            else if (key == "rho_g") p.rho_g = value.get<double>();
            else if (key == "beta_a") p.beta_a = value.get<double>();
            else if (key == "beta_n") p.beta_n = value.get<double>();
            else if (key == "carrying_capacity") p.carrying_capacity = value.get<double>();
            else if (key == "full_dose") p.full_dose = value.get<double>();
            else if (key == "x_min") p.x_min = value.get<double>();
            else if (key == "x_max") p.x_max = value.get<double>();
            else if (key == "noise_std") p.noise_std = value.get<double>();
            else if (key == "static_dim") p.static_dim = value.get<std::size_t>();
            else if (key == "w_a") p.w_a = value.get<std::vector<double>>();
            else if (key == "w_x") p.w_x = value.get<std::vector<double>>();
            else if (key == "dt") p.dt = value.get<double>();
            else if (key == "horizon") p.horizon = value.get<std::size_t>();
            else if (key == "seed") p.seed = value.get<std::uint64_t>();
            else throw ParameterError("unknown sim parameter \"" + key + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("sim parameters: ") + e.what());
    }
    return p;
}

RealGrid sample_static_covariates(std::size_t num_nodes, std::size_t static_dim, std::uint64_t seed) {
    if (static_dim < 1) throw ParameterError("sample_static_covariates: static_dim must be at least 1");
    auto rng = make_rng(seed, RngStream::static_covariates);
    std::normal_distribution<double> dist(0.0, 1.0);
    RealGrid v(num_nodes, static_dim);
    for (double& x : v.data()) x = dist(rng);
    return v;
}

double treatment_probability(double xbar_i, double nbr_xbar_mean, double e_i, double nbr_e_mean,
                             const SimParams& params, bool has_neighbors) {
    double z = params.gamma_a * (params.delta_a - xbar_i) + params.gamma_f * e_i;
    if (has_neighbors) z += params.gamma_n * (params.delta_n - nbr_xbar_mean) + params.gamma_g * nbr_e_mean;
    return sigmoid(z);
}

double update_dose(double prev_dose, int treated_now, const SimParams& params) {
    return (treated_now ? params.full_dose : 0.0) + prev_dose / 2.0;
}

double pkpd_derivative(double x_i, double static_term, double dose, double noise, const NeighborTerms& nbr,
                       const SimParams& params) {
    if (!(x_i > 0.0)) throw DomainError("pkpd_derivative: covariate must be positive");
    const double k = params.carrying_capacity;
    double rate = params.rho_u * std::log(k / x_i) + params.rho_f * static_term + params.beta_a * dose + noise;
    if (nbr.has_neighbors) {
        if (!(nbr.mean_x > 0.0)) throw DomainError("pkpd_derivative: neighbor covariate mean must be positive");
        rate += params.rho_n * std::log(k / nbr.mean_x) + params.rho_g * nbr.mean_static +
                params.beta_n * nbr.mean_dose;
    }
    return x_i * rate;
}

std::vector<double> ObservationalDataset::timestamps() const {
    std::vector<double> t(params.horizon + 1);
    std::iota(t.begin(), t.end(), 0.0);
    return t;
}

ObservationalDataset simulate_trajectory(const graph::Graph& graph, const SimParams& params) {
    params.validate();
    const std::size_t n = graph.num_nodes();
    const std::size_t rows = params.horizon + 1;

    ObservationalDataset ds;
    ds.graph = graph;
    ds.params = params;
    ds.static_covariates = sample_static_covariates(n, params.static_dim, params.seed);
    ds.covariates = RealGrid(rows, n);
    ds.treatments = BinaryGrid(rows, n);
    ds.interference = RealGrid(rows, n);
    ds.dose = RealGrid(rows, n);
    ds.noise = RealGrid(rows, n);

    const auto statics = static_effects(graph, ds.static_covariates, params);

    auto init_rng = make_rng(params.seed, RngStream::initial_state);
    std::uniform_real_distribution<double> initial(params.x_min, params.x_max);
    for (double& x : ds.covariates.row(0)) x = initial(init_rng);

    auto noise_rng = make_rng(params.seed, RngStream::noise);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (double& e : ds.noise.data()) e = params.noise_std * noise(noise_rng);

    auto treat_rng = make_rng(params.seed, RngStream::treatment);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> running_sum(n, 0.0);
    std::vector<double> xbar(n);
    std::vector<double> x(ds.covariates.row(0).begin(), ds.covariates.row(0).end());
    for (std::size_t t = 0; t < rows; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            running_sum[i] += ds.covariates(t, i);
            xbar[i] = running_sum[i] / static_cast<double>(t + 1);
        }
        const auto nbr_xbar = neighbor_means(graph, xbar);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = treatment_probability(xbar[i], nbr_xbar[i], statics.treatment[i],
                                                   statics.nbr_treatment[i], params, graph.degree(i) > 0);
            ds.treatments(t, i) = unit(treat_rng) < p ? 1 : 0;
            const double prev = t == 0 ? 0.0 : ds.dose(t - 1, i);
            ds.dose(t, i) = update_dose(prev, ds.treatments(t, i), params);
        }
        const auto g = graph::interference_summary(graph, ds.treatments.row(t));
        std::copy(g.begin(), g.end(), ds.interference.row(t).begin());
        if (t + 1 < rows) {
            advance_interval(graph, params, statics, x, ds.dose.row(t), ds.noise.row(t), t, ds.clamp_count);
            std::copy(x.begin(), x.end(), ds.covariates.row(t + 1).begin());
        }
    }
    return ds;
}

BinaryGrid counterfactual_treatments(const ObservationalDataset& ds, const InterventionSpec& spec) {
    const std::size_t rows = ds.horizon() + 1;
    const std::size_t n = ds.num_nodes();
    if (spec.start_time > ds.horizon()) {
        throw ParameterError("intervention start_time " + std::to_string(spec.start_time) + " exceeds horizon " +
                             std::to_string(ds.horizon()));
    }
    BinaryGrid out = ds.treatments;
    const std::size_t window = rows - spec.start_time;
    if (spec.flip_mask) {
        const auto& mask = *spec.flip_mask;
        if (mask.rows() != window || mask.cols() != n) {
            throw ParameterError("flip_mask must be " + std::to_string(window) + " x " + std::to_string(n));
        }
        for (std::size_t r = 0; r < window; ++r) {
            for (std::size_t i = 0; i < n; ++i) {
                if (mask(r, i)) out(spec.start_time + r, i) = 1 - out(spec.start_time + r, i);
            }
        }
        return out;
    }
    if (!(spec.flip_ratio >= 0.0 && spec.flip_ratio <= 1.0)) {
        throw ParameterError("flip_ratio must lie in [0, 1]");
    }
    const auto flipped = static_cast<std::size_t>(std::llround(spec.flip_ratio * static_cast<double>(n)));
    std::vector<std::size_t> units(n);
    std::iota(units.begin(), units.end(), std::size_t{0});
    auto rng = make_rng(spec.seed, RngStream::intervention);
    std::shuffle(units.begin(), units.end(), rng);
    for (std::size_t k = 0; k < flipped; ++k) {
        for (std::size_t t = spec.start_time; t < rows; ++t) out(t, units[k]) = 1 - out(t, units[k]);
    }
    return out;
}

CounterfactualTrajectory replay_treatments(const ObservationalDataset& ds, const BinaryGrid& treatments,
                                           std::size_t start_time) {
    const std::size_t rows = ds.horizon() + 1;
    const std::size_t n = ds.num_nodes();
    if (start_time > ds.horizon()) throw ParameterError("replay start_time exceeds horizon");
    if (treatments.rows() != rows || treatments.cols() != n) {
        throw DimensionError("replay_treatments: treatment path must be (T+1) x N");
    }

    CounterfactualTrajectory cf;
    cf.start_time = start_time;
    cf.treatments = treatments;
    cf.covariates = ds.covariates;
    cf.dose = ds.dose;
    cf.interference = RealGrid(rows, n);
    for (std::size_t t = 0; t < rows; ++t) {
        const auto g = graph::interference_summary(ds.graph, treatments.row(t));
        std::copy(g.begin(), g.end(), cf.interference.row(t).begin());
    }
    for (std::size_t t = start_time; t < rows; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double prev = t == 0 ? 0.0 : cf.dose(t - 1, i);
            cf.dose(t, i) = update_dose(prev, treatments(t, i), ds.params);
        }
    }

    const auto statics = static_effects(ds.graph, ds.static_covariates, ds.params);
    std::vector<double> x(cf.covariates.row(start_time).begin(), cf.covariates.row(start_time).end());
    for (std::size_t t = start_time; t + 1 < rows; ++t) {
        advance_interval(ds.graph, ds.params, statics, x, cf.dose.row(t), ds.noise.row(t), t, cf.clamp_count);
        std::copy(x.begin(), x.end(), cf.covariates.row(t + 1).begin());
    }
    return cf;
}

CounterfactualTrajectory counterfactual_oracle(const ObservationalDataset& ds, const InterventionSpec& spec) {
    return replay_treatments(ds, counterfactual_treatments(ds, spec), spec.start_time);
}

DatasetSummary summarize(const ObservationalDataset& ds) {
    DatasetSummary s;
    const auto& a = ds.treatments.data();
    const auto& g = ds.interference.data();
    const auto& x = ds.covariates.data();
    s.treatment_rate = static_cast<double>(std::accumulate(a.begin(), a.end(), 0LL)) / static_cast<double>(a.size());
    s.mean_interference = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    s.mean_outcome = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    s.clamp_count = ds.clamp_count;
    return s;
}

void save_dataset(const std::filesystem::path& dir, const ObservationalDataset& ds) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "godeflow-dataset";
    manifest["version"] = 1;
    manifest["num_nodes"] = ds.num_nodes();
    manifest["horizon"] = ds.horizon();
    manifest["static_dim"] = ds.params.static_dim;
    manifest["seed"] = ds.params.seed;
    manifest["clamp_count"] = ds.clamp_count;
    manifest["params"] = to_json(ds.params);
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
    out.close();

    csv::write_grid(dir / "V.csv", ds.static_covariates);
    csv::write_grid(dir / "X.csv", ds.covariates);
    csv::write_grid(dir / "Y.csv", ds.outcomes());
    csv::write_grid(dir / "A.csv", ds.treatments);
    csv::write_grid(dir / "G.csv", ds.interference);
    csv::write_grid(dir / "D.csv", ds.dose);
    csv::write_grid(dir / "noise.csv", ds.noise);
    graph::write_edge_list(dir / "edges.txt", ds.graph);
}

ObservationalDataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
    ObservationalDataset ds;
    std::size_t n = 0;
    try {
        const auto manifest = nlohmann::json::parse(in);
        if (manifest.value("format", "") != "godeflow-dataset") throw IoError("not a dataset manifest");
        n = manifest.at("num_nodes").get<std::size_t>();
        ds.params = sim_params_from_json(manifest.at("params"));
        ds.clamp_count = manifest.at("clamp_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed dataset manifest: ") + e.what());
    } catch (const ParameterError& e) {
        throw IoError(std::string("malformed dataset manifest: ") + e.what());
    }
    ds.params.validate();
    ds.graph = graph::read_edge_list(dir / "edges.txt", n);
    ds.static_covariates = csv::read_real_grid(dir / "V.csv");
    ds.covariates = csv::read_real_grid(dir / "X.csv");
    ds.treatments = csv::read_binary_grid(dir / "A.csv");
    ds.interference = csv::read_real_grid(dir / "G.csv");
    ds.dose = csv::read_real_grid(dir / "D.csv");
    ds.noise = csv::read_real_grid(dir / "noise.csv");

    const std::size_t rows = ds.params.horizon + 1;
    auto check = [&](const auto& grid, std::size_t r, std::size_t c, const char* name) {
        if (grid.rows() != r || grid.cols() != c) {
            throw IoError(std::string("dataset file ") + name + " has the wrong dimensions");
        }
    };
    check(ds.static_covariates, n, ds.params.static_dim, "V.csv");
    check(ds.covariates, rows, n, "X.csv");
    check(ds.treatments, rows, n, "A.csv");
    check(ds.interference, rows, n, "G.csv");
    check(ds.dose, rows, n, "D.csv");
    check(ds.noise, rows, n, "noise.csv");
    return ds;
}

}  // namespace godeflow::sim
