#include "gmlearn/exact.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmlearn {

namespace {

double score_of(const Graph& g, const TableVec& theta, const Labeling& x) {
    double s = 0;
    for (int i = 0; i < g.node_count(); ++i) s += theta.u(i, x[i]);
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        s += theta.e(e, x[a], x[b]);
    }
    return s;
}

bool next_state(const Graph& g, Labeling& x) {
    for (int i = 0; i < g.node_count(); ++i) {
        if (++x[i] < g.labels(i)) return true;
        x[i] = 0;
    }
    return false;
}

double log_sum_exp(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

ExactResult brute_force(const Graph& g, const TableVec& theta) {
    long long states = 1;
    for (int i = 0; i < g.node_count(); ++i) {
        states *= g.labels(i);
        if (states > (1ll << 22))
            throw std::runtime_error("brute_force: state space exceeds 2^22");
    }

    // Pass 1: max score for a stable log-sum-exp.
    Labeling x(g.node_count(), 0);
    double max_score = score_of(g, theta, x);
    do {
        max_score = std::max(max_score, score_of(g, theta, x));
    } while (next_state(g, x));

    // Pass 2: partition sum and expectations.
    ExactResult res;
    res.marginals = TableVec(g);
    double z = 0, mean_score = 0;
    std::fill(x.begin(), x.end(), 0);
    do {
        double s = score_of(g, theta, x);
        double w = std::exp(s - max_score);
        z += w;
        mean_score += w * s;
        for (int i = 0; i < g.node_count(); ++i) res.marginals.u(i, x[i]) += w;
        for (int e = 0; e < g.edge_count(); ++e) {
            const auto& [a, b] = g.edge(e);
            res.marginals.e(e, x[a], x[b]) += w;
        }
    } while (next_state(g, x));

    res.log_z = max_score + std::log(z);
    for (double& v : res.marginals.raw()) v /= z;
    // H = logZ - E[theta . f(x)]
    res.entropy = res.log_z - mean_score / z;
    return res;
}

ExactResult tree_inference(const Graph& g, const TableVec& theta) {
    const int n = g.node_count();
    if (n == 0) throw std::invalid_argument("empty graph");
    if (g.edge_count() != n - 1 || !g.is_forest())
        throw std::runtime_error("tree_inference: graph is not a connected tree");

    // Root at 0; BFS order.
    std::vector<int> order, parent(n, -1), parent_edge(n, -1);
    order.reserve(n);
    std::vector<char> seen(n, 0);
    order.push_back(0);
    seen[0] = 1;
    for (size_t q = 0; q < order.size(); ++q) {
        int u = order[q];
        for (int e : g.incident(u)) {
            int v = g.other_end(e, u);
            if (!seen[v]) {
                seen[v] = 1;
                parent[v] = u;
                parent_edge[v] = e;
                order.push_back(v);
            }
        }
    }

    auto edge_theta = [&](int e, int at, int x_at, int x_other) {
        const auto& [a, b] = g.edge(e);
        return at == a ? theta.e(e, x_at, x_other) : theta.e(e, x_other, x_at);
    };

    // Upward pass: log message from child u to parent[u], indexed by parent label.
    std::vector<std::vector<double>> up(n);
    // log belief accumulator: theta_u + sum of child messages
    std::vector<std::vector<double>> acc(n);
    for (int u = 0; u < n; ++u) {
        acc[u].assign(theta.unary(u).begin(), theta.unary(u).end());
    }
    for (int q = n - 1; q >= 1; --q) {
        int u = order[q], p = parent[u], e = parent_edge[u];
        up[u].assign(g.labels(p), 0);
        std::vector<double> tmp(g.labels(u));
        for (int xp = 0; xp < g.labels(p); ++xp) {
            for (int xu = 0; xu < g.labels(u); ++xu)
                tmp[xu] = edge_theta(e, u, xu, xp) + acc[u][xu];
            up[u][xp] = log_sum_exp(tmp);
        }
        for (int xp = 0; xp < g.labels(p); ++xp) acc[p][xp] += up[u][xp];
    }

    ExactResult res;
    res.marginals = TableVec(g);
    res.log_z = log_sum_exp(acc[0]);

    // Downward pass: log message from parent to child u, indexed by child label.
    std::vector<std::vector<double>> down(n);
    down[0].assign(g.labels(0), 0);
    for (size_t q = 1; q < order.size(); ++q) {
        int u = order[q], p = parent[u], e = parent_edge[u];
        down[u].assign(g.labels(u), 0);
        std::vector<double> tmp(g.labels(p));
        for (int xu = 0; xu < g.labels(u); ++xu) {
            for (int xp = 0; xp < g.labels(p); ++xp)
                tmp[xp] = edge_theta(e, u, xu, xp) + acc[p][xp] - up[u][xp] + down[p][xp];
            down[u][xu] = log_sum_exp(tmp);
        }
    }

    for (int u = 0; u < n; ++u) {
        std::vector<double> lb(g.labels(u));
        for (int xu = 0; xu < g.labels(u); ++xu) lb[xu] = acc[u][xu] + down[u][xu];
        double lz = log_sum_exp(lb);
        for (int xu = 0; xu < g.labels(u); ++xu)
            res.marginals.u(u, xu) = std::exp(lb[xu] - lz);
    }

    for (size_t q = 1; q < order.size(); ++q) {
        int u = order[q], p = parent[u], e = parent_edge[u];
        const auto& [a, b] = g.edge(e);
        std::vector<double> lb(static_cast<size_t>(g.labels(a)) * g.labels(b));
        for (int xu = 0; xu < g.labels(u); ++xu)
            for (int xp = 0; xp < g.labels(p); ++xp) {
                double v = edge_theta(e, u, xu, xp) + acc[u][xu] +
                           acc[p][xp] - up[u][xp] + down[p][xp];
                int xa = (u == a) ? xu : xp;
                int xb = (u == a) ? xp : xu;
                lb[xa * g.labels(b) + xb] = v;
            }
        double lz = log_sum_exp(lb);
        auto span = res.marginals.edge(e);
        for (size_t k = 0; k < span.size(); ++k) span[k] = std::exp(lb[k] - lz);
    }

    res.entropy = res.log_z - dot(theta, res.marginals);
    return res;
}

Labeling mpm_decide(const Graph& g, const TableVec& mu) {
    Labeling out(g.node_count());
    for (int i = 0; i < g.node_count(); ++i) {
        int best = 0;
        for (int x = 1; x < g.labels(i); ++x)
            if (mu.u(i, x) > mu.u(i, best)) best = x;
        out[i] = best;
    }
    return out;
}

double hamming_error(const Labeling& pred, const Labeling& truth,
                     const Labeling& mask) {
    if (pred.size() != truth.size() || pred.size() != mask.size())
        throw std::invalid_argument("hamming_error: size mismatch");
    int observed = 0, wrong = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (mask[i] == HIDDEN) continue;
        ++observed;
        if (pred[i] != truth[i]) ++wrong;
    }
    if (observed == 0) throw std::invalid_argument("hamming_error: no observed nodes");
    return static_cast<double>(wrong) / observed;
}

}  // namespace gmlearn
