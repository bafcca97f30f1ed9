#ifndef GMLEARN_LOSSES_HPP
#define GMLEARN_LOSSES_HPP

#include <string>

#include "gmlearn/infer.hpp"
#include "gmlearn/tables.hpp"

namespace gmlearn {

enum class LossKind {
    SurrogateLikelihood,
    TruncatedEm,
    Pseudolikelihood,
    Piecewise,
    UnivLogistic,
    CliqueLogistic,
    SmoothClass,
    UnivQuad,
};

/// Marginal-based losses expose dQ/dmu; likelihood-family losses produce
/// dL/dtheta directly.
bool is_marginal_loss(LossKind k);

struct LossSpec {
    LossKind kind = LossKind::UnivLogistic;
    double alpha = 15.0;  // smooth_class only
};

/// Parses CLI loss names, e.g. "univ_logistic" or "smooth_class:alpha=50".
LossSpec parse_loss_spec(const std::string& s);
std::string loss_name(LossKind k);

struct MarginalLoss {
    double value = 0;
    TableVec dq_dmu;
    long clamp_events = 0;
};

/// Hidden nodes (target == HIDDEN) contribute nothing to value or gradient.
MarginalLoss univ_logistic(const Graph& g, const TableVec& mu, const Labeling& target);
MarginalLoss clique_logistic(const Graph& g, const TableVec& mu, const Labeling& target);
MarginalLoss smooth_class(const Graph& g, const TableVec& mu, const Labeling& target,
                          double alpha);
MarginalLoss univ_quad(const Graph& g, const TableVec& mu, const Labeling& target);

MarginalLoss eval_marginal_loss(const LossSpec& spec, const Graph& g,
                                const TableVec& mu, const Labeling& target);

struct ThetaLoss {
    double value = 0;
    TableVec dl_dtheta;
};

/// Negative surrogate log-likelihood A~(theta) - theta . f(x) with gradient
/// mu~(theta) - f(x); requires a fully observed target.
ThetaLoss surrogate_likelihood(const Graph& g, const TableVec& theta,
                               const Labeling& target, const InferenceConfig& config);

/// Negative surrogate EM loss A~(theta) - A~(theta, z), with the observed
/// variables clamped in the second term. Gradient mu~(theta) - mu~(theta, z).
ThetaLoss truncated_em(const Graph& g, const TableVec& theta,
                       const Labeling& target, const InferenceConfig& config);

/// Negative log-likelihood with exact tree inference: A(theta) - theta . f(x),
/// gradient mu - f(x). Requires an acyclic connected graph.
ThetaLoss exact_likelihood(const Graph& g, const TableVec& theta, const Labeling& target);

/// Negative pseudolikelihood with closed-form conditionals and exact gradient.
ThetaLoss pseudolikelihood(const Graph& g, const TableVec& theta, const Labeling& target);

/// Negative piecewise likelihood with one piece per node and per edge.
ThetaLoss piecewise(const Graph& g, const TableVec& theta, const Labeling& target);

/// Sum of the per-piece log-partition functions (upper-bounds the true logZ).
double piecewise_log_z(const Graph& g, const TableVec& theta);

/// Model with the observed variables of `target` clamped: observed nodes keep
/// a single-label domain; `full_label` maps (node, reduced label) back.
struct ClampedModel {
    Graph graph;
    TableVec theta;
    std::vector<std::vector<int>> full_label;
};
ClampedModel clamp_observed(const Graph& g, const TableVec& theta, const Labeling& target);

/// Scatters clamped-model marginals back into full-model layout; clamped
/// entries become point masses.
TableVec scatter_marginals(const Graph& g, const ClampedModel& cm, const TableVec& mu_clamped);

}  // namespace gmlearn

#endif
