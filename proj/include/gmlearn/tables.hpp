#ifndef GMLEARN_TABLES_HPP
#define GMLEARN_TABLES_HPP

#include <cmath>
#include <span>
#include <vector>

#include "gmlearn/graph.hpp"

namespace gmlearn {

/// One real table per node and one per edge, stored contiguously.
/// Parameters, marginals, sufficient statistics and gradients all share this
/// layout so they can be added, dotted and compared index-for-index.
/// Edge tables are row-major with the smaller endpoint indexing rows.
class TableVec {
public:
    TableVec() = default;
    explicit TableVec(const Graph& g);

    double& u(int node, int x) { return data_[unary_off_[node] + x]; }
    double u(int node, int x) const { return data_[unary_off_[node] + x]; }

    /// Entry (xi, xj) of edge e, where xi indexes the smaller endpoint.
    double& e(int edge, int xi, int xj) {
        return data_[edge_off_[edge] + xi * edge_cols_[edge] + xj];
    }
    double e(int edge, int xi, int xj) const {
        return data_[edge_off_[edge] + xi * edge_cols_[edge] + xj];
    }

    std::span<double> unary(int node) {
        return {data_.data() + unary_off_[node], static_cast<size_t>(unary_len_[node])};
    }
    std::span<const double> unary(int node) const {
        return {data_.data() + unary_off_[node], static_cast<size_t>(unary_len_[node])};
    }
    std::span<double> edge(int e) {
        return {data_.data() + edge_off_[e], static_cast<size_t>(edge_rows_[e] * edge_cols_[e])};
    }
    std::span<const double> edge(int e) const {
        return {data_.data() + edge_off_[e], static_cast<size_t>(edge_rows_[e] * edge_cols_[e])};
    }

    int edge_rows(int e) const { return edge_rows_[e]; }
    int edge_cols(int e) const { return edge_cols_[e]; }
    int node_count() const { return static_cast<int>(unary_off_.size()); }
    int edge_count() const { return static_cast<int>(edge_off_.size()); }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }
    size_t size() const { return data_.size(); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void axpy(double a, const TableVec& x);
    double inf_norm() const;
    bool same_shape(const TableVec& o) const;

private:
    std::vector<double> data_;
    std::vector<int> unary_off_, unary_len_;
    std::vector<int> edge_off_, edge_rows_, edge_cols_;
};

/// Observed label per node; HIDDEN marks unobserved nodes.
constexpr int HIDDEN = -1;
using Labeling = std::vector<int>;

double dot(const TableVec& a, const TableVec& b);

/// Indicator tables of a fully observed labeling.
TableVec sufficient_stats(const Graph& g, const Labeling& x);

/// Local polytope membership: normalization of every table and agreement of
/// edge-table row/column sums with the unary tables, all within tol.
bool check_local_polytope(const Graph& g, const TableVec& mu, double tol);

}  // namespace gmlearn

#endif
