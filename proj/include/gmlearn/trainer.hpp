#ifndef GMLEARN_TRAINER_HPP
#define GMLEARN_TRAINER_HPP

#include <string>
#include <vector>

#include "gmlearn/grad.hpp"
#include "gmlearn/losses.hpp"
#include "gmlearn/tables.hpp"

namespace gmlearn {

/// Tied conditional parametrization: theta_i = F u(y,i), theta_ij = G v(y,i,j).
/// F is labels x du row-major; G is labels^2 x dv row-major, where row
/// xi*labels+xj holds the weights for edge-table entry (xi, xj) with xi the
/// smaller endpoint's label.
struct FeatureModel {
    int labels = 2;
    int du = 0;
    int dv = 0;
    std::vector<double> F;
    std::vector<double> G;

    static FeatureModel zeros(int labels, int du, int dv) {
        FeatureModel fm;
        fm.labels = labels;
        fm.du = du;
        fm.dv = dv;
        fm.F.assign(static_cast<size_t>(labels) * du, 0.0);
        fm.G.assign(static_cast<size_t>(labels) * labels * dv, 0.0);
        return fm;
    }
};

struct Instance {
    Graph graph;
    std::vector<double> ufeat;  // node_count x du
    std::vector<double> efeat;  // edge_count x dv
    Labeling target;            // HIDDEN marks unobserved nodes
};

struct Dataset {
    int labels = 2;
    int du = 0;
    int dv = 0;
    std::vector<Instance> instances;
};

struct TrainConfig {
    LossSpec loss;
    InferenceConfig inference;
    Engine engine = Engine::Backprop;
    PerturbationConfig perturb;
    bool exact_tree = false;  // likelihood family on acyclic graphs
    double lambda = 0;        // ridge weight on (F, G)
    int max_iters = 100;
    double grad_tol = 1e-5;
    bool restart_on_bad_direction = true;
    bool freeze_edges = false;  // hold G at its initial value
    int workers = 1;
};

TableVec build_theta(const FeatureModel& fm, const Instance& inst);

/// Chain rule into feature space: dL/dF = sum_i dL/dtheta_i u_i^T and
/// likewise for G. Accumulates into dF, dG.
void backprop_features(const FeatureModel& fm, const Instance& inst,
                       const TableVec& dl_dtheta, std::vector<double>& dF,
                       std::vector<double>& dG);

struct RiskResult {
    double value = 0;
    std::vector<double> dF, dG;
    long inference_calls = 0;
    long clamp_events = 0;
};

/// Mean per-observed-node loss over the dataset plus lambda |(F,G)|^2.
RiskResult empirical_risk(const FeatureModel& fm, const Dataset& data,
                          const TrainConfig& config);

struct HistoryRow {
    int iter = 0;
    double risk = 0;
    double grad_norm = 0;
    double seconds = 0;
    long inference_calls = 0;
};

struct TrainResult {
    FeatureModel fm;
    std::vector<HistoryRow> history;
    bool converged = false;
    bool diverged = false;
    std::string message;
};

/// Limited-memory BFGS (memory 10) with a strong-Wolfe line search;
/// re-initialized when a non-descent direction appears.
TrainResult train(const FeatureModel& fm0, const Dataset& data,
                  const TrainConfig& config);

/// Marginals for one instance under the model, using the configured
/// inference (or exact tree inference when config.exact_tree is set).
TableVec predict_marginals(const FeatureModel& fm, const Instance& inst,
                           const TrainConfig& config);

struct EvalResult {
    double loss_value = 0;      // mean per observed node
    double hamming_error = 0;   // of the per-node marginal decision
    int n_instances = 0;
};
EvalResult evaluate(const FeatureModel& fm, const Dataset& data,
                    const TrainConfig& config);

void save_checkpoint(const std::string& path, const FeatureModel& fm,
                     const TrainConfig& config, int iteration, double risk);
FeatureModel load_checkpoint(const std::string& path);

}  // namespace gmlearn

#endif
