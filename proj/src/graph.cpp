#include "godeflow/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "godeflow/errors.hpp"
#include "godeflow/rng.hpp"

namespace godeflow::graph {

std::size_t Graph::num_edges() const {
    return std::accumulate(degrees_.begin(), degrees_.end(), std::size_t{0}) / 2;
}

std::vector<Edge> Graph::edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (std::size_t i = 0; i < neighbors_.size(); ++i) {
        for (std::size_t j : neighbors_[i]) {
            if (i < j) out.emplace_back(i, j);
        }
    }
    return out;
}

double Graph::mean_degree() const {
    if (neighbors_.empty()) return 0.0;
    return 2.0 * static_cast<double>(num_edges()) / static_cast<double>(neighbors_.size());
}

Graph build_graph(std::size_t num_nodes, std::span<const Edge> edges) {
    Graph g;
    g.neighbors_.assign(num_nodes, {});
    for (const auto& [i, j] : edges) {
        if (i >= num_nodes || j >= num_nodes) {
            std::ostringstream msg;
            msg << "index out of range: edge (" << i << ", " << j << ") with num_nodes = " << num_nodes;
            throw ParameterError(msg.str());
        }
        if (i == j) continue;
        g.neighbors_[i].push_back(j);
        g.neighbors_[j].push_back(i);
    }
    g.degrees_.resize(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) {
        auto& list = g.neighbors_[i];
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        list.shrink_to_fit();
        g.degrees_[i] = list.size();
    }
    return g;
}

std::vector<double> interference_summary(const Graph& graph, std::span<const int> treatments) {
    const std::size_t n = graph.num_nodes();
    if (treatments.size() != n) {
        throw DimensionError("interference_summary: treatments has length " + std::to_string(treatments.size()) +
                             " but graph has " + std::to_string(n) + " nodes");
    }
    for (int a : treatments) {
        if (a != 0 && a != 1) throw DomainError("interference_summary: treatments must be 0 or 1");
    }
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto nbrs = graph.neighbors(i);
        if (nbrs.empty()) continue;
        std::size_t treated = 0;
        for (std::size_t j : nbrs) treated += static_cast<std::size_t>(treatments[j]);
        g[i] = static_cast<double>(treated) / static_cast<double>(nbrs.size());
    }
    return g;
}

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Mean of Normal(loc, scale) truncated to [lo, hi].
double truncated_mean(double loc, double scale, double lo, double hi) {
    const double a = (lo - loc) / scale;
    const double b = (hi - loc) / scale;
    const double z = normal_cdf(b) - normal_cdf(a);
    if (z < 1e-300) return lo;
    return loc + scale * (normal_pdf(a) - normal_pdf(b)) / z;
}

// Location of the untruncated normal whose truncation has the requested mean.
double calibrate_location(double target, double scale, double lo, double hi) {
    double left = target - 12.0 * scale - 1.0;
    double right = target + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (left + right);
        if (truncated_mean(mid, scale, lo, hi) < target) {
            left = mid;
        } else {
            right = mid;
        }
    }
    return 0.5 * (left + right);
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

std::vector<std::size_t> component_labels(std::size_t n, const std::vector<Edge>& edges) {
    UnionFind uf(n);
    for (const auto& [a, b] : edges) uf.unite(a, b);
    std::vector<std::size_t> label(n);
    for (std::size_t i = 0; i < n; ++i) label[i] = uf.find(i);
    return label;
}

std::size_t count_nontrivial_components(std::size_t n, const std::vector<Edge>& edges) {
    const auto label = component_labels(n, edges);
    std::set<std::size_t> roots;
    for (const auto& [a, b] : edges) roots.insert(label[a]);
    return roots.size();
}

Edge ordered(std::size_t a, std::size_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

// Degree-preserving double-edge swaps that merge every component holding at
// least one edge into the largest one. Isolated nodes stay isolated.
void connect_components(std::size_t n, std::vector<Edge>& edges, std::set<Edge>& present, std::mt19937_64& rng) {
    if (edges.size() < 2) return;
    for (int round = 0; round < 4 * static_cast<int>(n); ++round) {
        const std::size_t components = count_nontrivial_components(n, edges);
        if (components <= 1) return;

        const auto label = component_labels(n, edges);
        std::vector<std::size_t> comp_edges(n, 0);
        for (const auto& [a, b] : edges) ++comp_edges[label[a]];
        const std::size_t giant = static_cast<std::size_t>(
            std::max_element(comp_edges.begin(), comp_edges.end()) - comp_edges.begin());

        std::vector<std::size_t> small_edges;
        std::vector<std::size_t> giant_edges;
        for (std::size_t e = 0; e < edges.size(); ++e) {
            (label[edges[e].first] == giant ? giant_edges : small_edges).push_back(e);
        }
        if (small_edges.empty() || giant_edges.empty()) return;

        bool merged = false;
        std::uniform_int_distribution<std::size_t> pick_small(0, small_edges.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_giant(0, giant_edges.size() - 1);
        for (int attempt = 0; attempt < 32 && !merged; ++attempt) {
            const std::size_t es = small_edges[pick_small(rng)];
            const std::size_t eg = giant_edges[pick_giant(rng)];
            const auto [u, v] = edges[es];
            const auto [x, y] = edges[eg];
            const Edge new_a = ordered(u, x);
            const Edge new_b = ordered(v, y);
            present.erase(edges[es]);
            present.erase(edges[eg]);
            const Edge old_s = edges[es];
            const Edge old_g = edges[eg];
            edges[es] = new_a;
            edges[eg] = new_b;
            if (count_nontrivial_components(n, edges) < components) {
                present.insert(new_a);
                present.insert(new_b);
                merged = true;
            } else {
                edges[es] = old_s;
                edges[eg] = old_g;
                present.insert(old_s);
                present.insert(old_g);
            }
        }
        if (!merged) return;
    }
}

}  // namespace

Graph generate_synthetic_graph(std::size_t num_nodes, DegreeProfile profile, std::uint64_t seed) {
    if (num_nodes < 2) throw ParameterError("generate_synthetic_graph: num_nodes must be at least 2");
    if (!(profile.mean_degree >= 0.0) || !(profile.degree_std >= 0.0)) {
        throw ParameterError("generate_synthetic_graph: mean_degree and degree_std must be non-negative");
    }
    if (profile.mean_degree >= static_cast<double>(num_nodes)) {
        throw ParameterError("generate_synthetic_graph: mean_degree must be below num_nodes");
    }

    auto rng = make_rng(seed, RngStream::graph);
    const double hi = static_cast<double>(num_nodes - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<std::size_t> target(num_nodes, 0);
    if (profile.degree_std == 0.0) {
        for (auto& d : target) d = static_cast<std::size_t>(std::floor(profile.mean_degree + unit(rng)));
    } else {
        const double loc = calibrate_location(profile.mean_degree, profile.degree_std, 0.0, hi);
        std::normal_distribution<double> normal(loc, profile.degree_std);
        for (auto& d : target) {
            double x = normal(rng);
            for (int tries = 0; (x < 0.0 || x > hi) && tries < 1000; ++tries) x = normal(rng);
            x = std::clamp(x, 0.0, hi);
            // Stochastic rounding keeps the expected degree equal to x.
            d = std::min(static_cast<std::size_t>(std::floor(x + unit(rng))), num_nodes - 1);
        }
    }

    std::size_t total = std::accumulate(target.begin(), target.end(), std::size_t{0});
    if (total % 2 == 1) {
        std::uniform_int_distribution<std::size_t> pick(0, num_nodes - 1);
        const std::size_t node = pick(rng);
        if (target[node] + 1 < num_nodes) {
            ++target[node];
        } else {
            --target[node];
        }
    }

    std::vector<std::size_t> stubs;
    for (std::size_t i = 0; i < num_nodes; ++i) stubs.insert(stubs.end(), target[i], i);

    std::set<Edge> present;
    std::vector<Edge> edges;
    // Stubs rejected as self-loops or duplicates are re-matched a few times.
    for (int round = 0; round < 16 && stubs.size() >= 2; ++round) {
        std::shuffle(stubs.begin(), stubs.end(), rng);
        std::vector<std::size_t> leftover;
        for (std::size_t k = 0; k + 1 < stubs.size(); k += 2) {
            const std::size_t a = stubs[k];
            const std::size_t b = stubs[k + 1];
            const Edge e = ordered(a, b);
            if (a == b || present.contains(e)) {
                leftover.push_back(a);
                leftover.push_back(b);
                continue;
            }
            present.insert(e);
            edges.push_back(e);
        }
        if (leftover.size() == stubs.size()) break;
        stubs = std::move(leftover);
    }

    connect_components(num_nodes, edges, present, rng);
    return build_graph(num_nodes, edges);
}

Graph induced_subgraph(const Graph& graph, std::span<const std::size_t> nodes) {
    std::vector<std::size_t> local(graph.num_nodes(), SIZE_MAX);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k] >= graph.num_nodes()) throw ParameterError("induced_subgraph: node index out of range");
        local[nodes[k]] = k;
    }
    std::vector<Edge> edges;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        for (std::size_t j : graph.neighbors(nodes[k])) {
            if (local[j] != SIZE_MAX && k < local[j]) edges.emplace_back(k, local[j]);
        }
    }
    return build_graph(nodes.size(), edges);
}

GraphPartition partition_graph(const Graph& graph, SplitFractions fractions, std::uint64_t seed) {
    const std::array<double, 3> frac{fractions.train, fractions.valid, fractions.test};
    for (double f : frac) {
        if (!(f > 0.0 && f < 1.0)) throw ParameterError("partition_graph: each fraction must lie in (0, 1)");
    }
    if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) {
        throw ParameterError("partition_graph: fractions must sum to 1");
    }
    const std::size_t n = graph.num_nodes();

    // Largest-remainder rounding so the sizes add up to n.
    std::array<std::size_t, 3> size{};
    std::array<double, 3> remainder{};
    std::size_t assigned_total = 0;
    for (int p = 0; p < 3; ++p) {
        const double exact = frac[p] * static_cast<double>(n);
        size[p] = static_cast<std::size_t>(std::floor(exact));
        remainder[p] = exact - std::floor(exact);
        assigned_total += size[p];
    }
    while (assigned_total < n) {
        const auto p = static_cast<std::size_t>(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
        ++size[p];
        remainder[p] = -1.0;
        ++assigned_total;
    }
    for (std::size_t s : size) {
        if (s == 0) throw ParameterError("partition_graph: fractions leave an empty part for this graph size");
    }

    auto rng = make_rng(seed, RngStream::partition);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    constexpr std::size_t kUnassigned = 3;
    std::vector<std::size_t> owner(n, kUnassigned);
    std::array<std::queue<std::size_t>, 3> frontier;
    std::array<std::size_t, 3> filled{};
    std::size_t next_seed = 0;

    auto claim = [&](std::size_t node, std::size_t part) {
        owner[node] = part;
        ++filled[part];
        for (std::size_t j : graph.neighbors(node)) {
            if (owner[j] == kUnassigned) frontier[part].push(j);
        }
    };

    for (std::size_t done = 0; done < n; ++done) {
        std::size_t part = kUnassigned;
        double best_ratio = 2.0;
        for (std::size_t p = 0; p < 3; ++p) {
            if (filled[p] >= size[p]) continue;
            const double ratio = static_cast<double>(filled[p]) / static_cast<double>(size[p]);
            if (ratio < best_ratio) {
                best_ratio = ratio;
                part = p;
            }
        }
        std::size_t node = kUnassigned;
        auto& queue = frontier[part];
        while (!queue.empty()) {
            const std::size_t candidate = queue.front();
            queue.pop();
            if (owner[candidate] == kUnassigned) {
                node = candidate;
                break;
            }
        }
        if (node == kUnassigned) {
            while (owner[order[next_seed]] != kUnassigned) ++next_seed;
            node = order[next_seed];
        }
        claim(node, part);
    }

    GraphPartition out;
    for (std::size_t i = 0; i < n; ++i) {
        (owner[i] == 0 ? out.train_nodes : owner[i] == 1 ? out.valid_nodes : out.test_nodes).push_back(i);
    }
    out.train_graph = induced_subgraph(graph, out.train_nodes);
    out.valid_graph = induced_subgraph(graph, out.valid_nodes);
    out.test_graph = induced_subgraph(graph, out.test_nodes);
    return out;
}

void check_disjoint(const GraphPartition& partition, std::size_t num_nodes) {
    std::vector<int> seen(num_nodes, 0);
    for (const auto* set : {&partition.train_nodes, &partition.valid_nodes, &partition.test_nodes}) {
        for (std::size_t node : *set) {
            if (node >= num_nodes) throw ParameterError("partition: node index out of range");
            if (seen[node]++ != 0) {
                throw ParameterError("partition: node " + std::to_string(node) + " appears in more than one set");
            }
        }
    }
}

std::size_t count_components(const Graph& graph) {
    const auto label = component_labels(graph.num_nodes(), graph.edges());
    std::set<std::size_t> roots(label.begin(), label.end());
    return roots.size();
}

Graph read_edge_list(const std::filesystem::path& path, std::size_t num_nodes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open edge list " + path.string());
    std::vector<Edge> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        long long i = 0;
        long long j = 0;
        if (!(fields >> i)) continue;
        std::string rest;
        if (!(fields >> j) || (fields >> rest) || i < 0 || j < 0) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected \"i j\"");
        }
        edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
    return build_graph(num_nodes, edges);
}

void write_edge_list(const std::filesystem::path& path, const Graph& graph) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write edge list " + path.string());
    out << "# " << graph.num_nodes() << " nodes, " << graph.num_edges() << " undirected edges\n";
    for (const auto& [i, j] : graph.edges()) out << i << ' ' << j << '\n';
    if (!out) throw IoError("failed writing edge list " + path.string());
}

}  // namespace godeflow::graph
