#ifndef GMLEARN_GRAD_HPP
#define GMLEARN_GRAD_HPP

#include <utility>
#include <vector>

#include "gmlearn/infer.hpp"
#include "gmlearn/losses.hpp"
#include "gmlearn/tables.hpp"

namespace gmlearn {

struct PerturbationConfig {
    int sides = 2;  // 1, 2 or 4
    double multiplier = 1.0;
};

struct GradResult {
    TableVec dl_dtheta;
    int inference_calls = 0;
    double step_size = 0;
    long clamp_events = 0;
};

/// Finite-difference step r = m eps^(1/3) (1 + |theta|_inf) / |dQ/dmu|_inf.
/// Returns 0 when the loss gradient vanishes (no perturbation needed).
double perturb_step_size(const TableVec& theta, const TableVec& dq_dmu,
                         double multiplier);

/// Jacobian-transpose-vector product by re-running inference at
/// theta +- r dQ/dmu.
GradResult perturbation_grad(const Graph& g, const TableVec& theta,
                             const InferenceConfig& config, const TableVec& dq_dmu,
                             const PerturbationConfig& pconfig);

/// Reverse-mode derivative of a normalize step: c (.) (g - g.c).
std::vector<double> backnorm(std::span<const double> g, std::span<const double> c);

/// Exact gradient of the N-sweep unrolled mean-field pipeline.
/// fwd must come from a TRUNCATED mean-field run on (g, theta).
GradResult back_mean_field(const Graph& g, const TableVec& theta,
                           const MeanFieldResult& fwd, const TableVec& dq_dmu);

/// Exact gradient of the N-sweep unrolled TRW pipeline.
/// fwd must come from a TRUNCATED TRW run on (g, theta) with the same rho.
GradResult back_trw(const Graph& g, const TableVec& theta, const TrwResult& fwd,
                    const TableVec& dq_dmu, const std::vector<double>& rho);

/// Loss gradient at a converged TRW fixed point via the sparse KKT system of
/// the entropy-constrained optimization. Small-scale oracle; mu must be the
/// converged TRW marginals.
GradResult implicit_diff_grad(const Graph& g, const TableVec& mu,
                              const TableVec& dq_dmu, const std::vector<double>& rho);

enum class Engine { Backprop, Perturbation, Implicit };

/// Full pipeline for a marginal-based loss: inference, loss on the resulting
/// marginals, then dQ/dmu -> dL/dtheta with the selected engine.
/// Backprop requires a truncated config; Implicit requires converged TRW.
std::pair<double, GradResult> marginal_loss_grad(
    const Graph& g, const TableVec& theta, const InferenceConfig& config,
    const LossSpec& loss, const Labeling& target, Engine engine,
    const PerturbationConfig& pconfig = {});

/// Surrogate likelihood where the log-partition estimate theta.mu + H~(mu) is
/// evaluated at TRUNCATED marginals and differentiated exactly through the
/// unrolled solver. With too few sweeps this objective is unbounded below;
/// the trainer's divergence diagnostic is designed to catch that.
std::pair<double, GradResult> truncated_surrogate_grad(const Graph& g,
                                                       const TableVec& theta,
                                                       const InferenceConfig& config,
                                                       const Labeling& target);

}  // namespace gmlearn

#endif
