#ifndef GMLEARN_INFER_HPP
#define GMLEARN_INFER_HPP

#include <array>
#include <vector>

#include "gmlearn/tables.hpp"

namespace gmlearn {

enum class Method { MeanField, Trw };

/// TRUNCATED runs exactly `iters` full sweeps and records a trace for the
/// reverse pass. CONVERGED iterates until the max absolute change of any
/// unary marginal over a sweep drops below `threshold`.
struct InferenceConfig {
    Method method = Method::Trw;
    bool truncated = false;
    int iters = 0;
    double threshold = 1e-10;
    int max_iters = 20000;
    std::vector<double> rho;  // per-edge appearance probabilities; empty = all 1
};

/// Directed edge->endpoint message tables, normalized to sum 1.
/// Side 0 targets the smaller endpoint of the edge, side 1 the larger.
class MessageSet {
public:
    MessageSet() = default;
    MessageSet(const Graph& g);
    std::vector<double>& at(int edge, int side) { return m_[2 * edge + side]; }
    const std::vector<double>& at(int edge, int side) const { return m_[2 * edge + side]; }
    /// Message of edge e toward node i (i must be an endpoint of e).
    std::vector<double>& toward(const Graph& g, int e, int i) {
        return at(e, g.edge(e).first == i ? 0 : 1);
    }
    const std::vector<double>& toward(const Graph& g, int e, int i) const {
        return at(e, g.edge(e).first == i ? 0 : 1);
    }

private:
    std::vector<std::vector<double>> m_;
};

/// Stack of pre-update tables in visit order; one entry per scheduled update.
struct InferenceTrace {
    int sweeps = 0;
    std::vector<std::vector<double>> stack;
};

struct MeanFieldResult {
    TableVec mu;  // edge tables are products of unary marginals
    InferenceTrace trace;
    int sweeps_run = 0;
    long clamp_events = 0;
};

struct TrwResult {
    TableVec mu;
    MessageSet messages;
    InferenceTrace trace;
    int sweeps_run = 0;
    long clamp_events = 0;
};

/// Coordinate-ascent mean field; nodes visited in index order.
MeanFieldResult mean_field(const Graph& g, const TableVec& theta,
                           const InferenceConfig& config);

/// TRW message passing; per sweep each edge is visited in index order,
/// updating the message toward the smaller endpoint, then the larger.
TrwResult trw(const Graph& g, const TableVec& theta, const InferenceConfig& config);

/// Mean-field entropy: sum of unary entropies.
double entropy_mf(const Graph& g, const TableVec& mu);

/// TRW entropy: sum of unary entropies minus rho-weighted edge mutual
/// informations.
double entropy_trw(const Graph& g, const TableVec& mu, const std::vector<double>& rho);

/// theta . mu + H~(mu) with the entropy approximation of the given method.
double approx_log_z(const Graph& g, const TableVec& theta, const TableVec& mu,
                    Method method, const std::vector<double>& rho);

/// Edge appearance probabilities for a rows x cols 4-connected grid,
/// certified by a uniform distribution over two "comb" spanning trees:
/// comb A = top-row horizontals plus all verticals, comb B = left-column
/// verticals plus all horizontals. Per edge, rho = (in A + in B) / 2.
struct RhoCertificate {
    std::vector<double> rho;
    std::vector<std::array<bool, 2>> in_tree;  // membership in combs A and B
};
RhoCertificate grid_rho(int rows, int cols);

}  // namespace gmlearn

#endif
