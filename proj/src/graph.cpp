#include "perfodyn/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "perfodyn/errors.hpp"
#include "perfodyn/rng.hpp"

namespace perfodyn {

Graph Graph::from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                        IsolatedNodePolicy policy, std::vector<std::string> labels) {
    if (n <= 0) throw InvalidInputError("graph: empty node set");
    std::vector<std::set<int>> adj(static_cast<std::size_t>(n));
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n || b >= n)
            throw InvalidInputError("graph: edge endpoint out of range");
        if (a == b) throw InvalidInputError("graph: self-loop on node " + std::to_string(a));
        adj[static_cast<std::size_t>(a)].insert(b);
        adj[static_cast<std::size_t>(b)].insert(a);
    }
    if (labels.empty()) {
        labels.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = std::to_string(i);
    }
    if (static_cast<int>(labels.size()) != n)
        throw InvalidInputError("graph: label count does not match node count");

    std::vector<int> keep;
    for (int i = 0; i < n; ++i) {
        if (adj[static_cast<std::size_t>(i)].empty()) {
            if (policy == IsolatedNodePolicy::Reject)
                throw InvalidInputError("graph: isolated node " + labels[static_cast<std::size_t>(i)] +
                                        " (use the drop policy to discard)");
        } else {
            keep.push_back(i);
        }
    }
    if (keep.empty()) throw InvalidInputError("graph: no edges; all nodes isolated");

    Graph g;
    if (static_cast<int>(keep.size()) == n) {
        g.n_ = n;
        g.labels_ = std::move(labels);
        g.adjacency_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            g.adjacency_[static_cast<std::size_t>(i)].assign(adj[static_cast<std::size_t>(i)].begin(),
                                                             adj[static_cast<std::size_t>(i)].end());
    } else {
        // Drop isolated nodes and compact indices, first-appearance order.
        for (int i = 0; i < n; ++i)
            if (adj[static_cast<std::size_t>(i)].empty())
                g.dropped_labels_.push_back(labels[static_cast<std::size_t>(i)]);
        std::vector<int> remap(static_cast<std::size_t>(n), -1);
        for (std::size_t k = 0; k < keep.size(); ++k) remap[static_cast<std::size_t>(keep[k])] = static_cast<int>(k);
        g.n_ = static_cast<int>(keep.size());
        g.adjacency_.resize(keep.size());
        g.labels_.resize(keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) {
            g.labels_[k] = labels[static_cast<std::size_t>(keep[k])];
            for (int nb : adj[static_cast<std::size_t>(keep[k])])
                g.adjacency_[k].push_back(remap[static_cast<std::size_t>(nb)]);
            std::sort(g.adjacency_[k].begin(), g.adjacency_[k].end());
        }
    }
    g.degrees_.resize(static_cast<std::size_t>(g.n_));
    int twice_edges = 0;
    for (int i = 0; i < g.n_; ++i) {
        g.degrees_[static_cast<std::size_t>(i)] = static_cast<int>(g.adjacency_[static_cast<std::size_t>(i)].size());
        twice_edges += g.degrees_[static_cast<std::size_t>(i)];
    }
    g.edge_count_ = twice_edges / 2;
    return g;
}

bool Graph::has_edge(int i, int j) const {
    if (i < 0 || j < 0 || i >= n_ || j >= n_) return false;
    const auto& nb = adjacency_[static_cast<std::size_t>(i)];
    return std::binary_search(nb.begin(), nb.end(), j);
}

Eigen::MatrixXd Graph::adjacency_matrix() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
        for (int j : adjacency_[static_cast<std::size_t>(i)]) a(i, j) = 1.0;
    return a;
}

std::vector<std::pair<int, int>> Graph::edges() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(edge_count_));
    for (int i = 0; i < n_; ++i)
        for (int j : adjacency_[static_cast<std::size_t>(i)])
            if (i < j) out.emplace_back(i, j);
    return out;
}

InfluenceMatrix::InfluenceMatrix(std::shared_ptr<const Graph> graph) : graph_(std::move(graph)) {
    if (!graph_) throw InvalidInputError("influence matrix: null graph");
    const int n = graph_->node_count();
    for (int i = 0; i < n; ++i)
        if (graph_->degrees()[static_cast<std::size_t>(i)] < 1)
            throw InvalidInputError("influence matrix: zero-degree node " + std::to_string(i));
    if (n <= kDenseLimit) {
        dense_ = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            const double w = 1.0 / graph_->degrees()[static_cast<std::size_t>(i)];
            for (int j : graph_->neighbors()[static_cast<std::size_t>(i)]) dense_(i, j) = w;
        }
    }
}

const Eigen::MatrixXd& InfluenceMatrix::matrix() const {
    if (!dense())
        throw NumericalError("influence matrix: dense mode unavailable above " +
                             std::to_string(kDenseLimit) + " nodes");
    return dense_;
}

Eigen::VectorXd InfluenceMatrix::apply(const Eigen::VectorXd& x) const {
    const int n = size();
    if (x.size() != n) throw InvalidInputError("influence matrix: dimension mismatch");
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j : graph_->neighbors()[static_cast<std::size_t>(i)]) s += x(j);
        y(i) = s / graph_->degrees()[static_cast<std::size_t>(i)];
    }
    return y;
}

Eigen::VectorXd InfluenceMatrix::left_perron() const {
    const int n = size();
    Eigen::VectorXd y(n);
    const double twice_edges = 2.0 * graph_->edge_count();
    for (int i = 0; i < n; ++i) y(i) = graph_->degrees()[static_cast<std::size_t>(i)] / twice_edges;
    return y;
}

Graph load_edge_list(const std::string& path, IsolatedNodePolicy policy) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("edge list: cannot open " + path);

    std::map<std::string, int> index_of;
    std::vector<std::string> labels;
    std::vector<std::pair<int, int>> edges;
    std::string line;
    int line_no = 0;
    auto intern = [&](const std::string& label) {
        auto it = index_of.find(label);
        if (it != index_of.end()) return it->second;
        const int idx = static_cast<int>(labels.size());
        index_of.emplace(label, idx);
        labels.push_back(label);
        return idx;
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a)) continue;  // blank or comment-only line
        if (!(ss >> b) || (ss >> extra))
            throw InvalidInputError("edge list: malformed line " + std::to_string(line_no) +
                                    " in " + path + " (expected two tokens)");
        if (a == b)
            throw InvalidInputError("edge list: self-loop at line " + std::to_string(line_no) +
                                    " in " + path);
        const int first = intern(a);  // interning order fixes the dense index order
        const int second = intern(b);
        edges.emplace_back(first, second);
    }
    if (labels.empty()) throw InvalidInputError("edge list: no edges in " + path);
    const int n = static_cast<int>(labels.size());
    return Graph::from_edges(n, edges, policy, std::move(labels));
}

namespace {

std::vector<int> bfs_component(const Graph& g, int root, std::vector<char>& seen) {
    std::vector<int> comp;
    std::queue<int> q;
    q.push(root);
    seen[static_cast<std::size_t>(root)] = 1;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        comp.push_back(u);
        for (int v : g.neighbors()[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                q.push(v);
            }
        }
    }
    return comp;
}

Graph induced_subgraph(const Graph& g, const std::vector<int>& nodes) {
    std::vector<int> sorted = nodes;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> remap(static_cast<std::size_t>(g.node_count()), -1);
    std::vector<std::string> labels(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        remap[static_cast<std::size_t>(sorted[k])] = static_cast<int>(k);
        labels[k] = g.labels()[static_cast<std::size_t>(sorted[k])];
    }
    std::vector<std::pair<int, int>> edges;
    for (int u : sorted)
        for (int v : g.neighbors()[static_cast<std::size_t>(u)])
            if (u < v && remap[static_cast<std::size_t>(v)] >= 0)
                edges.emplace_back(remap[static_cast<std::size_t>(u)], remap[static_cast<std::size_t>(v)]);
    return Graph::from_edges(static_cast<int>(sorted.size()), edges, IsolatedNodePolicy::Drop,
                             std::move(labels));
}

}  // namespace

Graph largest_connected_component(const Graph& g) {
    std::vector<char> seen(static_cast<std::size_t>(g.node_count()), 0);
    std::vector<int> best;
    for (int root = 0; root < g.node_count(); ++root) {
        if (seen[static_cast<std::size_t>(root)]) continue;
        std::vector<int> comp = bfs_component(g, root, seen);
        // Components are discovered in order of their minimum original index,
        // so strict > keeps the earliest one on ties.
        if (comp.size() > best.size()) best = std::move(comp);
    }
    return induced_subgraph(g, best);
}

InfluenceMatrix influence_matrix(std::shared_ptr<const Graph> g) { return InfluenceMatrix(std::move(g)); }

GraphProperties check_properties(const Graph& g) {
    GraphProperties p;
    const int n = g.node_count();

    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> comp = bfs_component(g, 0, seen);
    p.connected = static_cast<int>(comp.size()) == n;

    p.regular = true;
    for (int i = 1; i < n; ++i)
        if (g.degrees()[static_cast<std::size_t>(i)] != g.degrees()[0]) {
            p.regular = false;
            break;
        }

    // 2-coloring over every component.
    std::vector<int> color(static_cast<std::size_t>(n), -1);
    p.bipartite = true;
    for (int root = 0; root < n && p.bipartite; ++root) {
        if (color[static_cast<std::size_t>(root)] != -1) continue;
        color[static_cast<std::size_t>(root)] = 0;
        std::queue<int> q;
        q.push(root);
        while (!q.empty() && p.bipartite) {
            const int u = q.front();
            q.pop();
            for (int v : g.neighbors()[static_cast<std::size_t>(u)]) {
                if (color[static_cast<std::size_t>(v)] == -1) {
                    color[static_cast<std::size_t>(v)] = 1 - color[static_cast<std::size_t>(u)];
                    q.push(v);
                } else if (color[static_cast<std::size_t>(v)] == color[static_cast<std::size_t>(u)]) {
                    p.bipartite = false;
                    break;
                }
            }
        }
    }
    p.aperiodic = p.connected && !p.bipartite;
    return p;
}

Graph sample_connected_subgraph(const Graph& g, int size, std::uint64_t seed) {
    if (size < 1) throw InvalidInputError("subgraph sample: size must be positive");
    if (size > g.node_count()) throw InvalidInputError("subgraph sample: size exceeds node count");
    Rng rng(seed);
    const int root = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(g.node_count())));
    std::vector<char> seen(static_cast<std::size_t>(g.node_count()), 0);
    std::vector<int> picked;
    std::queue<int> q;
    q.push(root);
    seen[static_cast<std::size_t>(root)] = 1;
    while (!q.empty() && static_cast<int>(picked.size()) < size) {
        const int u = q.front();
        q.pop();
        picked.push_back(u);
        for (int v : g.neighbors()[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                q.push(v);
            }
        }
    }
    return largest_connected_component(induced_subgraph(g, picked));
}

void write_label_map_csv(const Graph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInputError("label map: cannot write " + path);
    out << "external_label,index\n";
    for (int i = 0; i < g.node_count(); ++i)
        out << g.labels()[static_cast<std::size_t>(i)] << "," << i << "\n";
}

}  // namespace perfodyn
