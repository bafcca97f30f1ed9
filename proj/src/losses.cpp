#include "gmlearn/losses.hpp"

#include "gmlearn/exact.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmlearn {

namespace {
constexpr double kFloor = 1e-300;

double floored(double v, long& events) {
    if (v < kFloor) {
        ++events;
        return kFloor;
    }
    return v;
}

std::pair<double, std::vector<double>> log_z_and_softmax(std::span<const double> t) {
    double m = *std::max_element(t.begin(), t.end());
    std::vector<double> p(t.begin(), t.end());
    double s = 0;
    for (double& v : p) {
        v = std::exp(v - m);
        s += v;
    }
    for (double& v : p) v /= s;
    return {m + std::log(s), p};
}

void run_inference(const Graph& g, const TableVec& theta,
                   const InferenceConfig& config, TableVec& mu, double& log_z) {
    if (config.method == Method::MeanField) {
        auto r = mean_field(g, theta, config);
        mu = std::move(r.mu);
    } else {
        auto r = trw(g, theta, config);
        mu = std::move(r.mu);
    }
    log_z = approx_log_z(g, theta, mu, config.method, config.rho);
}

}  // namespace

bool is_marginal_loss(LossKind k) {
    switch (k) {
        case LossKind::UnivLogistic:
        case LossKind::CliqueLogistic:
        case LossKind::SmoothClass:
        case LossKind::UnivQuad:
            return true;
        default:
            return false;
    }
}

std::string loss_name(LossKind k) {
    switch (k) {
        case LossKind::SurrogateLikelihood: return "surrogate_likelihood";
        case LossKind::TruncatedEm: return "truncated_em";
        case LossKind::Pseudolikelihood: return "pseudolikelihood";
        case LossKind::Piecewise: return "piecewise";
        case LossKind::UnivLogistic: return "univ_logistic";
        case LossKind::CliqueLogistic: return "clique_logistic";
        case LossKind::SmoothClass: return "smooth_class";
        case LossKind::UnivQuad: return "univ_quad";
    }
    return "?";
}

LossSpec parse_loss_spec(const std::string& s) {
    LossSpec spec;
    std::string name = s;
    auto colon = s.find(':');
    if (colon != std::string::npos) {
        name = s.substr(0, colon);
        std::string arg = s.substr(colon + 1);
        auto eq = arg.find('=');
        if (eq == std::string::npos || arg.substr(0, eq) != "alpha")
            throw std::invalid_argument("bad loss argument: " + arg);
        spec.alpha = std::stod(arg.substr(eq + 1));
        if (!(spec.alpha > 0)) throw std::invalid_argument("alpha must be > 0");
    }
    for (LossKind k : {LossKind::SurrogateLikelihood, LossKind::TruncatedEm,
                       LossKind::Pseudolikelihood, LossKind::Piecewise,
                       LossKind::UnivLogistic, LossKind::CliqueLogistic,
                       LossKind::SmoothClass, LossKind::UnivQuad}) {
        if (loss_name(k) == name) {
            spec.kind = k;
            return spec;
        }
    }
    throw std::invalid_argument("unknown loss: " + name);
}

MarginalLoss univ_logistic(const Graph& g, const TableVec& mu, const Labeling& target) {
    MarginalLoss res;
    res.dq_dmu = TableVec(g);
    for (int i = 0; i < g.node_count(); ++i) {
        if (target[i] == HIDDEN) continue;
        double p = floored(mu.u(i, target[i]), res.clamp_events);
        res.value -= std::log(p);
        res.dq_dmu.u(i, target[i]) = -1.0 / p;
    }
    return res;
}

MarginalLoss clique_logistic(const Graph& g, const TableVec& mu, const Labeling& target) {
    MarginalLoss res;
    res.dq_dmu = TableVec(g);
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        if (target[a] == HIDDEN || target[b] == HIDDEN) continue;
        double p = floored(mu.e(e, target[a], target[b]), res.clamp_events);
        res.value -= std::log(p);
        res.dq_dmu.e(e, target[a], target[b]) = -1.0 / p;
    }
    return res;
}

MarginalLoss smooth_class(const Graph& g, const TableVec& mu, const Labeling& target,
                          double alpha) {
    MarginalLoss res;
    res.dq_dmu = TableVec(g);
    for (int i = 0; i < g.node_count(); ++i) {
        if (target[i] == HIDDEN) continue;
        int best = -1;
        for (int x = 0; x < g.labels(i); ++x) {
            if (x == target[i]) continue;
            if (best < 0 || mu.u(i, x) > mu.u(i, best)) best = x;
        }
        double t = mu.u(i, best) - mu.u(i, target[i]);
        double s = 1.0 / (1.0 + std::exp(-alpha * t));
        res.value += s;
        double ds = alpha * s * (1.0 - s);
        res.dq_dmu.u(i, best) += ds;
        res.dq_dmu.u(i, target[i]) -= ds;
    }
    return res;
}

MarginalLoss univ_quad(const Graph& g, const TableVec& mu, const Labeling& target) {
    MarginalLoss res;
    res.dq_dmu = TableVec(g);
    for (int i = 0; i < g.node_count(); ++i) {
        if (target[i] == HIDDEN) continue;
        for (int x = 0; x < g.labels(i); ++x) {
            double r = mu.u(i, x) - (x == target[i] ? 1.0 : 0.0);
            res.value += r * r;
            res.dq_dmu.u(i, x) = 2.0 * r;
        }
    }
    return res;
}

MarginalLoss eval_marginal_loss(const LossSpec& spec, const Graph& g,
                                const TableVec& mu, const Labeling& target) {
    switch (spec.kind) {
        case LossKind::UnivLogistic: return univ_logistic(g, mu, target);
        case LossKind::CliqueLogistic: return clique_logistic(g, mu, target);
        case LossKind::SmoothClass: return smooth_class(g, mu, target, spec.alpha);
        case LossKind::UnivQuad: return univ_quad(g, mu, target);
        default:
            throw std::invalid_argument("not a marginal-based loss: " +
                                        loss_name(spec.kind));
    }
}

ThetaLoss surrogate_likelihood(const Graph& g, const TableVec& theta,
                               const Labeling& target, const InferenceConfig& config) {
    for (int v : target)
        if (v == HIDDEN)
            throw std::invalid_argument(
                "surrogate_likelihood: hidden nodes present (use truncated_em)");
    TableVec mu;
    double log_z;
    run_inference(g, theta, config, mu, log_z);
    TableVec f = sufficient_stats(g, target);
    ThetaLoss res;
    res.value = log_z - dot(theta, f);
    res.dl_dtheta = std::move(mu);
    res.dl_dtheta.axpy(-1.0, f);
    return res;
}

ThetaLoss exact_likelihood(const Graph& g, const TableVec& theta, const Labeling& target) {
    for (int v : target)
        if (v == HIDDEN)
            throw std::invalid_argument("exact_likelihood: hidden nodes present");
    ExactResult ex = tree_inference(g, theta);
    TableVec f = sufficient_stats(g, target);
    ThetaLoss res;
    res.value = ex.log_z - dot(theta, f);
    res.dl_dtheta = std::move(ex.marginals);
    res.dl_dtheta.axpy(-1.0, f);
    return res;
}

ClampedModel clamp_observed(const Graph& g, const TableVec& theta, const Labeling& target) {
    ClampedModel cm{Graph({1}, {}), TableVec(), {}};
    std::vector<int> labels(g.node_count());
    cm.full_label.resize(g.node_count());
    for (int i = 0; i < g.node_count(); ++i) {
        if (target[i] == HIDDEN) {
            labels[i] = g.labels(i);
            for (int x = 0; x < g.labels(i); ++x) cm.full_label[i].push_back(x);
        } else {
            labels[i] = 1;
            cm.full_label[i].push_back(target[i]);
        }
    }
    cm.graph = Graph(labels, g.edges());
    cm.theta = TableVec(cm.graph);
    for (int i = 0; i < g.node_count(); ++i)
        for (int x = 0; x < labels[i]; ++x)
            cm.theta.u(i, x) = theta.u(i, cm.full_label[i][x]);
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        for (int xa = 0; xa < labels[a]; ++xa)
            for (int xb = 0; xb < labels[b]; ++xb)
                cm.theta.e(e, xa, xb) =
                    theta.e(e, cm.full_label[a][xa], cm.full_label[b][xb]);
    }
    return cm;
}

TableVec scatter_marginals(const Graph& g, const ClampedModel& cm, const TableVec& mu_clamped) {
    TableVec mu(g);
    for (int i = 0; i < g.node_count(); ++i)
        for (int x = 0; x < cm.graph.labels(i); ++x)
            mu.u(i, cm.full_label[i][x]) = mu_clamped.u(i, x);
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        for (int xa = 0; xa < cm.graph.labels(a); ++xa)
            for (int xb = 0; xb < cm.graph.labels(b); ++xb)
                mu.e(e, cm.full_label[a][xa], cm.full_label[b][xb]) =
                    mu_clamped.e(e, xa, xb);
    }
    return mu;
}

ThetaLoss truncated_em(const Graph& g, const TableVec& theta,
                       const Labeling& target, const InferenceConfig& config) {
    TableVec mu_free;
    double log_z_free;
    run_inference(g, theta, config, mu_free, log_z_free);

    ClampedModel cm = clamp_observed(g, theta, target);
    TableVec mu_clamped;
    double log_z_clamped;
    run_inference(cm.graph, cm.theta, config, mu_clamped, log_z_clamped);

    ThetaLoss res;
    res.value = log_z_free - log_z_clamped;
    res.dl_dtheta = std::move(mu_free);
    res.dl_dtheta.axpy(-1.0, scatter_marginals(g, cm, mu_clamped));
    return res;
}

ThetaLoss pseudolikelihood(const Graph& g, const TableVec& theta, const Labeling& target) {
    ThetaLoss res;
    res.dl_dtheta = TableVec(g);
    for (int i = 0; i < g.node_count(); ++i) {
        if (target[i] == HIDDEN) continue;
        // log p(x_i | observed neighbors)
        std::vector<double> t(theta.unary(i).begin(), theta.unary(i).end());
        for (int e : g.incident(i)) {
            int j = g.other_end(e, i);
            if (target[j] == HIDDEN) continue;
            const auto& [a, b] = g.edge(e);
            for (int xi = 0; xi < g.labels(i); ++xi)
                t[xi] += (i == a) ? theta.e(e, xi, target[j])
                                  : theta.e(e, target[j], xi);
        }
        auto [lz, p] = log_z_and_softmax(t);
        res.value += lz - t[target[i]];
        for (int xi = 0; xi < g.labels(i); ++xi) {
            double gcomp = p[xi] - (xi == target[i] ? 1.0 : 0.0);
            res.dl_dtheta.u(i, xi) += gcomp;
            for (int e : g.incident(i)) {
                int j = g.other_end(e, i);
                if (target[j] == HIDDEN) continue;
                const auto& [a, b] = g.edge(e);
                if (i == a)
                    res.dl_dtheta.e(e, xi, target[j]) += gcomp;
                else
                    res.dl_dtheta.e(e, target[j], xi) += gcomp;
            }
        }
    }
    return res;
}

double piecewise_log_z(const Graph& g, const TableVec& theta) {
    double lz = 0;
    for (int i = 0; i < g.node_count(); ++i)
        lz += log_z_and_softmax(theta.unary(i)).first;
    for (int e = 0; e < g.edge_count(); ++e)
        lz += log_z_and_softmax(theta.edge(e)).first;
    return lz;
}

ThetaLoss piecewise(const Graph& g, const TableVec& theta, const Labeling& target) {
    ThetaLoss res;
    res.dl_dtheta = TableVec(g);
    for (int i = 0; i < g.node_count(); ++i) {
        if (target[i] == HIDDEN) continue;
        auto [lz, p] = log_z_and_softmax(theta.unary(i));
        res.value += lz - theta.u(i, target[i]);
        for (int x = 0; x < g.labels(i); ++x)
            res.dl_dtheta.u(i, x) = p[x] - (x == target[i] ? 1.0 : 0.0);
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        if (target[a] == HIDDEN || target[b] == HIDDEN) continue;
        auto [lz, p] = log_z_and_softmax(theta.edge(e));
        res.value += lz - theta.e(e, target[a], target[b]);
        auto span = res.dl_dtheta.edge(e);
        for (size_t k = 0; k < span.size(); ++k) span[k] = p[k];
        res.dl_dtheta.e(e, target[a], target[b]) -= 1.0;
    }
    return res;
}

}  // namespace gmlearn
