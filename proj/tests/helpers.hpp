#ifndef TESTS_HELPERS_HPP
#define TESTS_HELPERS_HPP

#include <random>

#include "gmlearn/grad.hpp"
#include "gmlearn/infer.hpp"
#include "gmlearn/losses.hpp"
#include "gmlearn/tables.hpp"

namespace testutil {

using namespace gmlearn;
using Rng = std::mt19937_64;

inline TableVec random_theta(const Graph& g, Rng& rng, double s_unary = 1.0,
                             double s_edge = 1.0) {
    std::normal_distribution<double> nu(0.0, s_unary), ne(0.0, s_edge);
    TableVec theta(g);
    for (int i = 0; i < g.node_count(); ++i)
        for (auto& v : theta.unary(i)) v = nu(rng);
    for (int e = 0; e < g.edge_count(); ++e)
        for (auto& v : theta.edge(e)) v = ne(rng);
    return theta;
}

inline Labeling random_labeling(const Graph& g, Rng& rng) {
    Labeling x(g.node_count());
    for (int i = 0; i < g.node_count(); ++i)
        x[i] = std::uniform_int_distribution<int>(0, g.labels(i) - 1)(rng);
    return x;
}

/// Random tree on n nodes: node i > 0 attaches to a random earlier node.
inline Graph random_tree(int n, int max_labels, Rng& rng) {
    std::vector<int> labels(n);
    for (int& l : labels) l = std::uniform_int_distribution<int>(2, max_labels)(rng);
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i)
        edges.emplace_back(std::uniform_int_distribution<int>(0, i - 1)(rng), i);
    return Graph(labels, edges);
}

inline TableVec run_mu(const Graph& g, const TableVec& theta,
                       const InferenceConfig& config) {
    return config.method == Method::MeanField ? mean_field(g, theta, config).mu
                                              : trw(g, theta, config).mu;
}

/// Loss of the inference pipeline as a plain function of theta.
inline double pipeline_value(const Graph& g, const TableVec& theta,
                             const InferenceConfig& config, const LossSpec& loss,
                             const Labeling& target) {
    return eval_marginal_loss(loss, g, run_mu(g, theta, config), target).value;
}

/// Centered finite differences of the pipeline loss over every theta entry.
inline TableVec pipeline_fd(const Graph& g, const TableVec& theta,
                            const InferenceConfig& config, const LossSpec& loss,
                            const Labeling& target, double h = 1e-5) {
    TableVec fd(g);
    TableVec th = theta;
    for (size_t k = 0; k < th.size(); ++k) {
        double orig = th.raw()[k];
        th.raw()[k] = orig + h;
        double fp = pipeline_value(g, th, config, loss, target);
        th.raw()[k] = orig - h;
        double fm = pipeline_value(g, th, config, loss, target);
        th.raw()[k] = orig;
        fd.raw()[k] = (fp - fm) / (2 * h);
    }
    return fd;
}

inline double rel_err(const TableVec& a, const TableVec& ref, double floor = 1e-10) {
    TableVec d = a;
    d.axpy(-1.0, ref);
    return d.inf_norm() / std::max(ref.inf_norm(), floor);
}

inline double max_abs_diff(const TableVec& a, const TableVec& b) {
    TableVec d = a;
    d.axpy(-1.0, b);
    return d.inf_norm();
}

}  // namespace testutil

#endif
