#ifndef GMLEARN_GRAPH_HPP
#define GMLEARN_GRAPH_HPP

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace gmlearn {

/// Undirected pairwise graph: nodes with per-node label counts and a
/// canonical edge list with endpoints ordered i < j.
class Graph {
public:
    Graph(std::vector<int> labels_per_node,
          std::vector<std::pair<int, int>> edges);

    int node_count() const { return static_cast<int>(labels_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    int labels(int node) const { return labels_[node]; }
    const std::vector<int>& labels_per_node() const { return labels_; }
    const std::pair<int, int>& edge(int e) const { return edges_[e]; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }

    /// Edge ids incident to a node.
    const std::vector<int>& incident(int node) const { return incident_[node]; }

    /// Endpoint of edge e opposite to node i.
    int other_end(int e, int i) const {
        return edges_[e].first == i ? edges_[e].second : edges_[e].first;
    }

    bool is_tree() const;      // acyclic and connected
    bool is_forest() const;    // acyclic

    static Graph chain(int n, int labels);
    static Graph grid(int rows, int cols, int labels);
    /// Two parallel chains x_0..x_{n-1}, y_0..y_{n-1} with rungs x_i - y_i.
    /// x nodes are 0..n-1, y nodes are n..2n-1.
    static Graph ladder(int n, int labels);

private:
    std::vector<int> labels_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> incident_;
};

}  // namespace gmlearn

#endif
