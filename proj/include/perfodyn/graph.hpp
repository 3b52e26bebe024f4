#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace perfodyn {

/// What to do with degree-zero nodes at construction time.
enum class IsolatedNodePolicy { Reject, Drop };

struct GraphProperties {
    bool connected = false;
    bool regular = false;
    bool bipartite = false;
    /// For connected undirected graphs: connected and not bipartite.
    bool aperiodic = false;
};

/// Undirected simple graph with dense 0..n-1 node indices.
///
/// Immutable after construction and safe to share across threads. External
/// node labels survive relabeling through the label map.
class Graph {
public:
    /// Build from an edge list over nodes 0..n-1. Self-loops are rejected,
    /// duplicate edges collapsed. Labels default to the decimal index.
    static Graph from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                            IsolatedNodePolicy policy = IsolatedNodePolicy::Reject,
                            std::vector<std::string> labels = {});

    int node_count() const { return n_; }
    int edge_count() const { return edge_count_; }

    const std::vector<int>& degrees() const { return degrees_; }
    /// Neighbor lists, each sorted ascending.
    const std::vector<std::vector<int>>& neighbors() const { return adjacency_; }
    bool has_edge(int i, int j) const;

    /// External label of each dense index.
    const std::vector<std::string>& labels() const { return labels_; }

    /// Labels discarded by the drop policy at construction time.
    const std::vector<std::string>& dropped_labels() const { return dropped_labels_; }

    /// Dense symmetric 0/1 adjacency matrix.
    Eigen::MatrixXd adjacency_matrix() const;

    /// Unique undirected edges as (i, j) with i < j, lexicographically sorted.
    std::vector<std::pair<int, int>> edges() const;

private:
    Graph() = default;

    int n_ = 0;
    int edge_count_ = 0;
    std::vector<std::vector<int>> adjacency_;
    std::vector<int> degrees_;
    std::vector<std::string> labels_;
    std::vector<std::string> dropped_labels_;
};

/// Row-normalized influence matrix W = deg^{-1} A.
///
/// Dense storage up to kDenseLimit nodes; products are always evaluated from
/// the adjacency structure, so apply() works in both modes. Closed-form
/// solvers require dense mode.
class InfluenceMatrix {
public:
    static constexpr int kDenseLimit = 5000;

    explicit InfluenceMatrix(std::shared_ptr<const Graph> graph);

    int size() const { return graph_->node_count(); }
    bool dense() const { return dense_.size() > 0; }
    const Graph& graph() const { return *graph_; }
    std::shared_ptr<const Graph> graph_ptr() const { return graph_; }

    /// Dense W. Throws when the graph is above the dense limit.
    const Eigen::MatrixXd& matrix() const;

    /// y = W x via adjacency lists.
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;

    /// Left Perron vector of W (eigenvalue 1), normalized to sum 1. For the
    /// row-normalized adjacency this is exactly degree / (2 |E|).
    Eigen::VectorXd left_perron() const;

private:
    std::shared_ptr<const Graph> graph_;
    Eigen::MatrixXd dense_;
};

/// Read an edge list file: one edge per line, two whitespace-separated labels,
/// '#' starts a comment. Labels are assigned dense indices in first-appearance
/// order. Malformed lines and self-loops raise InvalidInputError with the line
/// number; duplicate edges are collapsed.
Graph load_edge_list(const std::string& path,
                     IsolatedNodePolicy policy = IsolatedNodePolicy::Reject);

/// Largest connected component; ties broken by lowest minimum original index.
/// The label map is composed through the relabeling.
Graph largest_connected_component(const Graph& g);

InfluenceMatrix influence_matrix(std::shared_ptr<const Graph> g);

GraphProperties check_properties(const Graph& g);

/// Seeded BFS from a random root; keeps the first `size` reached nodes and
/// returns the largest component of the induced subgraph.
Graph sample_connected_subgraph(const Graph& g, int size, std::uint64_t seed);

/// CSV with header `external_label,index`.
void write_label_map_csv(const Graph& g, const std::string& path);

}  // namespace perfodyn
