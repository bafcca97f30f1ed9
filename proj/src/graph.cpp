#include "gmlearn/graph.hpp"

#include <algorithm>
#include <set>

namespace gmlearn {

Graph::Graph(std::vector<int> labels_per_node,
             std::vector<std::pair<int, int>> edges)
    : labels_(std::move(labels_per_node)), edges_(std::move(edges)) {
    const int n = node_count();
    for (int i = 0; i < n; ++i) {
        if (labels_[i] < 1)
            throw std::invalid_argument("node label count must be >= 1");
    }
    std::set<std::pair<int, int>> seen;
    for (auto& [a, b] : edges_) {
        if (a == b) throw std::invalid_argument("self-loop");
        if (a > b) std::swap(a, b);
        if (a < 0 || b >= n) throw std::invalid_argument("edge endpoint out of range");
        if (!seen.insert({a, b}).second)
            throw std::invalid_argument("duplicate edge");
    }
    incident_.resize(n);
    for (int e = 0; e < edge_count(); ++e) {
        incident_[edges_[e].first].push_back(e);
        incident_[edges_[e].second].push_back(e);
    }
}

bool Graph::is_forest() const {
    // union-find cycle check
    std::vector<int> parent(node_count());
    for (int i = 0; i < node_count(); ++i) parent[i] = i;
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& [a, b] : edges_) {
        int ra = find(a), rb = find(b);
        if (ra == rb) return false;
        parent[ra] = rb;
    }
    return true;
}

bool Graph::is_tree() const {
    return is_forest() && edge_count() == node_count() - 1;
}

Graph Graph::chain(int n, int labels) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
    return Graph(std::vector<int>(n, labels), std::move(edges));
}

Graph Graph::grid(int rows, int cols, int labels) {
    std::vector<std::pair<int, int>> edges;
    auto id = [cols](int r, int c) { return r * cols + c; };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) edges.push_back({id(r, c), id(r, c + 1)});
            if (r + 1 < rows) edges.push_back({id(r, c), id(r + 1, c)});
        }
    return Graph(std::vector<int>(rows * cols, labels), std::move(edges));
}

Graph Graph::ladder(int n, int labels) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
    for (int i = 0; i + 1 < n; ++i) edges.push_back({n + i, n + i + 1});
    for (int i = 0; i < n; ++i) edges.push_back({i, n + i});
    return Graph(std::vector<int>(2 * n, labels), std::move(edges));
}

}  // namespace gmlearn
