#include "gmlearn/tables.hpp"

#include <algorithm>
#include <stdexcept>

namespace gmlearn {

TableVec::TableVec(const Graph& g) {
    int off = 0;
    unary_off_.reserve(g.node_count());
    unary_len_.reserve(g.node_count());
    for (int i = 0; i < g.node_count(); ++i) {
        unary_off_.push_back(off);
        unary_len_.push_back(g.labels(i));
        off += g.labels(i);
    }
    edge_off_.reserve(g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        edge_off_.push_back(off);
        edge_rows_.push_back(g.labels(a));
        edge_cols_.push_back(g.labels(b));
        off += g.labels(a) * g.labels(b);
    }
    data_.assign(off, 0.0);
}

void TableVec::axpy(double a, const TableVec& x) {
    if (!same_shape(x)) throw std::invalid_argument("TableVec shape mismatch");
    for (size_t k = 0; k < data_.size(); ++k) data_[k] += a * x.data_[k];
}

double TableVec::inf_norm() const {
    double m = 0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool TableVec::same_shape(const TableVec& o) const {
    return unary_off_ == o.unary_off_ && edge_off_ == o.edge_off_ &&
           edge_cols_ == o.edge_cols_ && data_.size() == o.data_.size();
}

double dot(const TableVec& a, const TableVec& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
    double s = 0;
    const auto& x = a.raw();
    const auto& y = b.raw();
    for (size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
    return s;
}

TableVec sufficient_stats(const Graph& g, const Labeling& x) {
    if (static_cast<int>(x.size()) != g.node_count())
        throw std::invalid_argument("labeling size mismatch");
    TableVec f(g);
    for (int i = 0; i < g.node_count(); ++i) {
        if (x[i] == HIDDEN) throw std::invalid_argument("hidden label in sufficient_stats");
        if (x[i] < 0 || x[i] >= g.labels(i))
            throw std::invalid_argument("label out of range");
        f.u(i, x[i]) = 1.0;
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        f.e(e, x[a], x[b]) = 1.0;
    }
    return f;
}

bool check_local_polytope(const Graph& g, const TableVec& mu, double tol) {
    for (int i = 0; i < g.node_count(); ++i) {
        double s = 0;
        for (double v : mu.unary(i)) {
            if (v < -tol) return false;
            s += v;
        }
        if (std::abs(s - 1.0) > tol) return false;
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        for (double v : mu.edge(e))
            if (v < -tol) return false;
        for (int xa = 0; xa < g.labels(a); ++xa) {
            double s = 0;
            for (int xb = 0; xb < g.labels(b); ++xb) s += mu.e(e, xa, xb);
            if (std::abs(s - mu.u(a, xa)) > tol) return false;
        }
        for (int xb = 0; xb < g.labels(b); ++xb) {
            double s = 0;
            for (int xa = 0; xa < g.labels(a); ++xa) s += mu.e(e, xa, xb);
            if (std::abs(s - mu.u(b, xb)) > tol) return false;
        }
    }
    return true;
}

}  // namespace gmlearn
