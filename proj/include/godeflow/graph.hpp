#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace godeflow::graph {

using Edge = std::pair<std::size_t, std::size_t>;

// Static undirected interaction structure. Neighbor lists are sorted,
// symmetric, free of duplicates and self-entries. Immutable once built.
class Graph {
public:
    Graph() = default;

    std::size_t num_nodes() const { return neighbors_.size(); }
    std::size_t num_edges() const;
    std::span<const std::size_t> neighbors(std::size_t node) const { return neighbors_[node]; }
    std::size_t degree(std::size_t node) const { return degrees_[node]; }
    const std::vector<std::size_t>& degrees() const { return degrees_; }

    // Each undirected edge once, as (i, j) with i < j, in ascending order.
    std::vector<Edge> edges() const;

    double mean_degree() const;

    bool operator==(const Graph& other) const { return neighbors_ == other.neighbors_; }

    friend Graph build_graph(std::size_t num_nodes, std::span<const Edge> edges);

private:
    std::vector<std::vector<std::size_t>> neighbors_;
    std::vector<std::size_t> degrees_;
};

// Symmetrizes and deduplicates; self-pairs are dropped. Throws ParameterError
// naming the first pair with an index outside [0, num_nodes).
Graph build_graph(std::size_t num_nodes, std::span<const Edge> edges);

// Fraction of treated neighbors per node; 0 for isolated nodes.
std::vector<double> interference_summary(const Graph& graph, std::span<const int> treatments);

struct DegreeProfile {
    double mean_degree = 2.0;
    double degree_std = 1.7;
};

inline constexpr DegreeProfile kFlickrProfile{2.0, 1.7};
inline constexpr DegreeProfile kBlogCatalogProfile{30.7, 25.1};

Graph generate_synthetic_graph(std::size_t num_nodes, DegreeProfile profile, std::uint64_t seed);

struct GraphPartition {
    // Original node indices, ascending.
    std::vector<std::size_t> train_nodes;
    std::vector<std::size_t> valid_nodes;
    std::vector<std::size_t> test_nodes;
    // Subgraphs relabelled to 0..n-1 following the order of the node lists above.
    Graph train_graph;
    Graph valid_graph;
    Graph test_graph;
};

struct SplitFractions {
    double train = 0.6;
    double valid = 0.2;
    double test = 0.2;
};

GraphPartition partition_graph(const Graph& graph, SplitFractions fractions, std::uint64_t seed);

// Throws ParameterError if any node appears in two sets or a set index is out of range.
void check_disjoint(const GraphPartition& partition, std::size_t num_nodes);

Graph induced_subgraph(const Graph& graph, std::span<const std::size_t> nodes);

// Number of connected components (isolated nodes count as components).
std::size_t count_components(const Graph& graph);

// Edge-list text: one "i j" pair per line, '#' starts a comment.
Graph read_edge_list(const std::filesystem::path& path, std::size_t num_nodes);
void write_edge_list(const std::filesystem::path& path, const Graph& graph);

}  // namespace godeflow::graph
