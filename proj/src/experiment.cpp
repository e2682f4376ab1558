#include "godeflow/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "godeflow/csv.hpp"
#include "godeflow/errors.hpp"
#include "godeflow/hash.hpp"

namespace godeflow::experiment {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

template <typename F>
void for_each_key(const nlohmann::json& j, const char* section, F&& handle) {
    if (!j.is_object()) throw ParameterError(std::string(section) + " section must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (!handle(key, value)) throw ParameterError("unknown " + std::string(section) + " key \"" + key + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string(section) + ": " + e.what());
    }
}

}  // namespace

graph::DegreeProfile parse_profile(const std::string& name) {
    const auto n = lower(name);
    if (n == "flickr") return graph::kFlickrProfile;
    if (n == "blogcatalog") return graph::kBlogCatalogProfile;
    throw ParameterError("unknown graph profile \"" + name + "\" (expected flickr or blogcatalog)");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    for_each_key(j, "config", [&](const std::string& key, const nlohmann::json& value) {
        if (key == "seed") {
            c.seed = value.get<std::uint64_t>();
        } else if (key == "graph") {
            for_each_key(value, "graph", [&](const std::string& k, const nlohmann::json& v) {
                if (k == "profile") c.graph.profile = v.get<std::string>();
                else if (k == "num_nodes") c.graph.num_nodes = v.get<std::size_t>();
                else if (k == "seed") c.seeds.graph = v.get<std::uint64_t>();
                else if (k == "edge_list") c.graph.edge_list = v.get<std::string>();
                else return false;
                return true;
            });
        } else if (key == "sim") {
            c.sim = sim::sim_params_from_json(value, c.sim);
            if (value.contains("seed")) c.seeds.sim = c.sim.seed;
        } else if (key == "model") {
            c.model = model::model_config_from_json(value, c.model);
        } else if (key == "train") {
            c.train = train::train_config_from_json(value, c.train);
            if (value.contains("seed")) c.seeds.train = c.train.seed;
        } else if (key == "eval") {
            for_each_key(value, "eval", [&](const std::string& k, const nlohmann::json& v) {
                if (k == "flip_ratio") c.eval.flip_ratio = v.get<double>();
                else if (k == "horizon") c.eval.horizon = v.get<std::size_t>();
                else if (k == "start_time") c.eval.start_time = v.get<std::size_t>();
                else if (k == "seed") c.seeds.eval = v.get<std::uint64_t>();
                else if (k == "holdout_fraction") c.eval.holdout_fraction = v.get<double>();
                else if (k == "balance") c.eval.balance = v.get<bool>();
                else return false;
                return true;
            });
        } else if (key == "output") {
            c.output = value.get<std::string>();
        } else {
            return false;
        }
        return true;
    });
    parse_profile(c.graph.profile);
    if (c.graph.num_nodes < 1) throw ParameterError("graph: num_nodes must be at least 1");
    if (!(c.eval.flip_ratio >= 0.0 && c.eval.flip_ratio <= 1.0)) {
        throw ParameterError("eval: flip_ratio must lie in [0, 1]");
    }
    if (c.eval.horizon < 1) throw ParameterError("eval: horizon must be at least 1");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

void apply_seed_environment(RunConfig& config) {
    const char* env = std::getenv("GODEFLOW_SEED");
    if (!env || !*env) return;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        config.seed = v;
    } catch (const std::exception&) {
        throw ParameterError(std::string("GODEFLOW_SEED is not an unsigned integer: ") + env);
    }
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json graph = {{"profile", c.graph.profile}, {"num_nodes", c.graph.num_nodes}, {"seed", c.graph_seed()}};
    if (c.graph.edge_list) graph["edge_list"] = c.graph.edge_list->string();
    nlohmann::json eval = {{"flip_ratio", c.eval.flip_ratio},
                           {"horizon", c.eval.horizon},
                           {"seed", c.eval_seed()},
                           {"holdout_fraction", c.eval.holdout_fraction},
                           {"balance", c.eval.balance}};
    if (c.eval.start_time) eval["start_time"] = *c.eval.start_time;
    return {{"seed", c.seed},
            {"graph", graph},
            {"sim", sim::to_json(resolved_sim_params(c))},
            {"model", model::to_json(c.model)},
            {"train", train::to_json(resolved_train_config(c))},
            {"eval", eval},
            {"output", c.output}};
}

graph::Graph make_graph(const RunConfig& c) {
    if (c.graph.edge_list) return graph::read_edge_list(*c.graph.edge_list, c.graph.num_nodes);
    return graph::generate_synthetic_graph(c.graph.num_nodes, parse_profile(c.graph.profile), c.graph_seed());
}

sim::SimParams resolved_sim_params(const RunConfig& c) {
    sim::SimParams p = c.sim;
    p.seed = c.sim_seed();
    if (p.w_a.empty() && p.w_x.empty()) sim::draw_mechanisms(p);
    p.validate();
    return p;
}

train::TrainConfig resolved_train_config(const RunConfig& c) {
    train::TrainConfig t = c.train;
    t.seed = c.train_seed();
    return t;
}

sim::InterventionSpec resolved_intervention(const RunConfig& c, std::size_t horizon_t) {
    sim::InterventionSpec spec;
    spec.flip_ratio = c.eval.flip_ratio;
    spec.seed = c.eval_seed();
    if (c.eval.start_time) {
        spec.start_time = *c.eval.start_time;
    } else {
        if (c.eval.horizon > horizon_t) {
            throw ParameterError("eval: horizon " + std::to_string(c.eval.horizon) + " exceeds T = " +
                                 std::to_string(horizon_t));
        }
        spec.start_time = horizon_t - c.eval.horizon;
    }
    return spec;
}

sim::ObservationalDataset make_validation_dataset(const sim::ObservationalDataset& dataset) {
    sim::SimParams p = dataset.params;
    p.seed += 0x9E3779B97F4A7C15ULL;
    return sim::simulate_trajectory(dataset.graph, p);
}

model::ModelParams initial_model(const RunConfig& c, const sim::ObservationalDataset& dataset) {
    model::ModelConfig mc = c.model;
    mc.static_dim = dataset.params.static_dim;
    mc.substeps = c.train.substeps;
    mc = train::fit_outcome_scaling(mc, dataset);
    return model::ModelParams::initialize(mc, c.train_seed());
}

train::EvalReport evaluate_with_config(const model::ModelParams& params, const sim::ObservationalDataset& dataset,
                                       const RunConfig& c) {
    const auto spec = resolved_intervention(c, dataset.horizon());
    auto report = train::evaluate_counterfactual(params, dataset, spec, c.eval.horizon);
    if (c.eval.balance) {
        report.balance = train::balance_diagnostics(params, dataset, c.eval.holdout_fraction, c.eval_seed());
    }
    report.config_hash = blob_hash(to_json(c).dump());
    return report;
}

RunResult run_experiment(const RunConfig& c) {
    const auto graph = make_graph(c);
    RunResult result;
    result.dataset = sim::simulate_trajectory(graph, resolved_sim_params(c));
    const auto validation = make_validation_dataset(result.dataset);
    const auto initial = initial_model(c, result.dataset);
    result.training = train::train(result.dataset, initial, resolved_train_config(c), &validation);
    result.report = evaluate_with_config(result.training.best, result.dataset, c);
    return result;
}

SweepKind parse_sweep_kind(const std::string& text) {
    const auto t = lower(text);
    if (t == "flip_ratio") return SweepKind::flip_ratio;
    if (t == "confounding") return SweepKind::confounding;
    if (t == "alpha_grid") return SweepKind::alpha_grid;
    if (t == "alt_ratio") return SweepKind::alt_ratio;
    throw ParameterError("unknown sweep kind \"" + text + "\"");
}

std::string sweep_kind_name(SweepKind kind) {
    switch (kind) {
        case SweepKind::flip_ratio: return "flip_ratio";
        case SweepKind::confounding: return "confounding";
        case SweepKind::alpha_grid: return "alpha_grid";
        case SweepKind::alt_ratio: return "alt_ratio";
    }
    return "?";
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    if (const auto dots = text.find(".."); dots != std::string::npos) {
        long long lo = 0, hi = 0;
        try {
            std::size_t used_lo = 0, used_hi = 0;
            lo = std::stoll(text.substr(0, dots), &used_lo);
            hi = std::stoll(text.substr(dots + 2), &used_hi);
            if (used_lo != dots || used_hi != text.size() - dots - 2) throw std::invalid_argument(text);
        } catch (const std::logic_error&) {
            throw ParameterError("grid range \"" + text + "\" must be two integers lo..hi");
        }
        if (hi < lo) throw ParameterError("grid range \"" + text + "\" is empty");
        for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<double>(v));
        return out;
    }
    for (const auto& field : csv::split_line(text)) {
        std::string trimmed = field;
        trimmed.erase(0, trimmed.find_first_not_of(" \t"));
        trimmed.erase(trimmed.find_last_not_of(" \t") + 1);
        if (trimmed.empty()) continue;
        try {
            out.push_back(csv::parse_double(trimmed));
        } catch (const IoError&) {
            throw ParameterError("grid value \"" + trimmed + "\" is not a number");
        }
    }
    if (out.empty()) throw ParameterError("grid \"" + text + "\" has no values");
    return out;
}

std::vector<SweepPoint> expand_grid(SweepKind kind, const std::vector<double>& grid) {
    if (grid.empty()) throw ParameterError("sweep grid is empty");
    std::vector<SweepPoint> points;
    if (kind == SweepKind::alpha_grid) {
        for (double a : grid) {
            for (double g : grid) points.push_back({{a, g}});
        }
    } else {
        for (double v : grid) points.push_back({{v}});
    }
    return points;
}

RunConfig apply_point(RunConfig c, SweepKind kind, const SweepPoint& point) {
    const double v = point.values.at(0);
    switch (kind) {
        case SweepKind::flip_ratio:
            if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("flip ratio must lie in [0, 1]");
            c.eval.flip_ratio = v;
            break;
        case SweepKind::confounding:
            c.sim.gamma_a = v;
            c.sim.gamma_f = v;
            c.sim.gamma_n = v / 3.0;
            c.sim.gamma_g = v / 3.0;
            break;
        case SweepKind::alpha_grid:
            c.train.variant = train::Variant::full;
            c.train.alpha_a = v;
            c.train.alpha_g = point.values.at(1);
            break;
        case SweepKind::alt_ratio:
            if (!(v >= 0.0) || v != std::floor(v)) throw ParameterError("alt_ratio must be a non-negative integer");
            c.train.alt_ratio = static_cast<std::size_t>(v);
            break;
    }
    c.train.validate();
    return c;
}

std::vector<SweepRow> run_sweep(SweepKind kind, const std::vector<double>& grid, const RunConfig& base,
                                std::size_t jobs) {
    const auto points = expand_grid(kind, grid);
    std::vector<SweepRow> rows(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < points.size(); k = next++) {
            SweepRow& row = rows[k];
            row.point = points[k];
            try {
                row.report = run_experiment(apply_point(base, kind, points[k])).report;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(jobs, 1, points.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return rows;
}

void write_sweep(const std::filesystem::path& path, SweepKind kind, const std::vector<SweepRow>& rows,
                 std::size_t horizon) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const std::size_t report_fields = horizon + 5;
    out << (kind == SweepKind::alpha_grid ? "alpha_a,alpha_g" : sweep_kind_name(kind)) << ",status,"
        << train::report_csv_header(horizon) << ",error\n";
    for (const auto& row : rows) {
        for (double v : row.point.values) out << csv::format_double(v) << ',';
        if (row.report) {
            out << "ok," << train::report_csv_row(*row.report) << ",\n";
        } else {
            std::string msg = row.error;
            std::replace(msg.begin(), msg.end(), '"', '\'');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            out << "failed," << std::string(report_fields - 1, ',') << ",\"" << msg << "\"\n";
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace godeflow::experiment
