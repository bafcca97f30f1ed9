#include "gmlearn/grad.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

namespace gmlearn {

namespace {

TableVec run_inference(const Graph& g, const TableVec& theta,
                       const InferenceConfig& config, long& clamp_events) {
    if (config.method == Method::MeanField) {
        auto r = mean_field(g, theta, config);
        clamp_events += r.clamp_events;
        return std::move(r.mu);
    }
    auto r = trw(g, theta, config);
    clamp_events += r.clamp_events;
    return std::move(r.mu);
}

}  // namespace

double perturb_step_size(const TableVec& theta, const TableVec& dq_dmu,
                         double multiplier) {
    double vn = dq_dmu.inf_norm();
    if (vn == 0.0) return 0.0;
    return multiplier * std::cbrt(DBL_EPSILON) * (1.0 + theta.inf_norm()) / vn;
}

GradResult perturbation_grad(const Graph& g, const TableVec& theta,
                             const InferenceConfig& config, const TableVec& dq_dmu,
                             const PerturbationConfig& pconfig) {
    if (pconfig.sides != 1 && pconfig.sides != 2 && pconfig.sides != 4)
        throw std::invalid_argument("perturbation_grad: sides must be 1, 2 or 4");
    GradResult res;
    res.dl_dtheta = TableVec(g);
    res.step_size = perturb_step_size(theta, dq_dmu, pconfig.multiplier);
    if (res.step_size == 0.0) return res;

    auto mu_at = [&](double scale) {
        TableVec t = theta;
        t.axpy(scale * res.step_size, dq_dmu);
        ++res.inference_calls;
        return run_inference(g, t, config, res.clamp_events);
    };

    const double r = res.step_size;
    switch (pconfig.sides) {
        case 1: {
            TableVec plus = mu_at(1.0), base = mu_at(0.0);
            res.dl_dtheta.axpy(1.0 / r, plus);
            res.dl_dtheta.axpy(-1.0 / r, base);
            break;
        }
        case 2: {
            TableVec plus = mu_at(1.0), minus = mu_at(-1.0);
            res.dl_dtheta.axpy(0.5 / r, plus);
            res.dl_dtheta.axpy(-0.5 / r, minus);
            break;
        }
        case 4: {
            TableVec p2 = mu_at(2.0), p1 = mu_at(1.0);
            TableVec m1 = mu_at(-1.0), m2 = mu_at(-2.0);
            res.dl_dtheta.axpy(-1.0 / (12 * r), p2);
            res.dl_dtheta.axpy(8.0 / (12 * r), p1);
            res.dl_dtheta.axpy(-8.0 / (12 * r), m1);
            res.dl_dtheta.axpy(1.0 / (12 * r), m2);
            break;
        }
    }
    return res;
}

std::vector<double> backnorm(std::span<const double> g, std::span<const double> c) {
    double gc = 0;
    for (size_t k = 0; k < g.size(); ++k) gc += g[k] * c[k];
    std::vector<double> out(g.size());
    for (size_t k = 0; k < g.size(); ++k) out[k] = c[k] * (g[k] - gc);
    return out;
}

GradResult back_mean_field(const Graph& g, const TableVec& theta,
                           const MeanFieldResult& fwd, const TableVec& dq_dmu) {
    const int n = g.node_count();
    const int sweeps = fwd.trace.sweeps;
    if (fwd.trace.stack.size() != static_cast<size_t>(sweeps) * n)
        throw std::invalid_argument("back_mean_field: trace does not match graph");

    GradResult res;
    res.dl_dtheta = TableVec(g);

    std::vector<std::vector<double>> mu(n), mubar(n);
    for (int i = 0; i < n; ++i) {
        mu[i].assign(fwd.mu.unary(i).begin(), fwd.mu.unary(i).end());
        mubar[i].assign(g.labels(i), 0.0);
    }

    // Fold the clique part of dQ/dmu into the unary accumulators via the
    // product rule on mu(x_i, x_j) = mu(x_i) mu(x_j), using final marginals.
    for (int i = 0; i < n; ++i)
        for (int x = 0; x < g.labels(i); ++x) mubar[i][x] += dq_dmu.u(i, x);
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        for (int xa = 0; xa < g.labels(a); ++xa)
            for (int xb = 0; xb < g.labels(b); ++xb) {
                double v = dq_dmu.e(e, xa, xb);
                mubar[a][xa] += v * mu[b][xb];
                mubar[b][xb] += v * mu[a][xa];
            }
    }

    for (int k = sweeps * n - 1; k >= 0; --k) {
        int j = k % n;
        std::vector<double> nubar = backnorm(mubar[j], mu[j]);
        for (int x = 0; x < g.labels(j); ++x) res.dl_dtheta.u(j, x) += nubar[x];
        for (int e : g.incident(j)) {
            const auto& [a, b] = g.edge(e);
            int i = g.other_end(e, j);
            for (int xj = 0; xj < g.labels(j); ++xj)
                for (int xi = 0; xi < g.labels(i); ++xi) {
                    double& th_bar = (j == b) ? res.dl_dtheta.e(e, xi, xj)
                                              : res.dl_dtheta.e(e, xj, xi);
                    double th = (j == b) ? theta.e(e, xi, xj) : theta.e(e, xj, xi);
                    th_bar += nubar[xj] * mu[i][xi];
                    mubar[i][xi] += th * nubar[xj];
                }
        }
        mu[j] = fwd.trace.stack[k];
        std::fill(mubar[j].begin(), mubar[j].end(), 0.0);
    }
    return res;
}

GradResult back_trw(const Graph& g, const TableVec& theta, const TrwResult& fwd,
                    const TableVec& dq_dmu, const std::vector<double>& rho_in) {
    const int ne = g.edge_count();
    std::vector<double> rho = rho_in;
    if (rho.empty()) rho.assign(ne, 1.0);
    if (static_cast<int>(rho.size()) != ne)
        throw std::invalid_argument("back_trw: rho size mismatch");
    const int sweeps = fwd.trace.sweeps;
    if (fwd.trace.stack.size() != static_cast<size_t>(sweeps) * 2 * ne)
        throw std::invalid_argument("back_trw: trace does not match graph");

    GradResult res;
    res.dl_dtheta = TableVec(g);

    MessageSet m = fwd.messages;
    std::vector<std::vector<double>> mbar(2 * ne);
    for (int e = 0; e < ne; ++e)
        for (int side = 0; side < 2; ++side)
            mbar[2 * e + side].assign(m.at(e, side).size(), 0.0);
    auto mbar_toward = [&](int e, int i) -> std::vector<double>& {
        return mbar[2 * e + (g.edge(e).first == i ? 0 : 1)];
    };

    // Backprop through the belief equations at the final messages.
    for (int e = 0; e < ne; ++e) {
        const auto& [a, b] = g.edge(e);
        std::vector<double> nubar = backnorm(dq_dmu.edge(e), fwd.mu.edge(e));
        const int lb = g.labels(b);
        for (int xa = 0; xa < g.labels(a); ++xa)
            for (int xb = 0; xb < lb; ++xb)
                res.dl_dtheta.e(e, xa, xb) += nubar[xa * lb + xb] / rho[e];
        for (int side = 0; side < 2; ++side) {
            int i = side == 0 ? a : b;
            for (int xi = 0; xi < g.labels(i); ++xi) {
                double s = 0;
                if (side == 0)
                    for (int xb = 0; xb < lb; ++xb) s += nubar[xi * lb + xb];
                else
                    for (int xa = 0; xa < g.labels(a); ++xa) s += nubar[xa * lb + xi];
                res.dl_dtheta.u(i, xi) += s;
                for (int d : g.incident(i)) {
                    double w = rho[d] - (d == e ? 1.0 : 0.0);
                    if (w != 0.0)
                        mbar_toward(d, i)[xi] += w * s / m.toward(g, d, i)[xi];
                }
            }
        }
    }
    for (int i = 0; i < g.node_count(); ++i) {
        std::vector<double> nubar = backnorm(dq_dmu.unary(i), fwd.mu.unary(i));
        for (int xi = 0; xi < g.labels(i); ++xi) {
            res.dl_dtheta.u(i, xi) += nubar[xi];
            for (int d : g.incident(i))
                mbar_toward(d, i)[xi] += rho[d] * nubar[xi] / m.toward(g, d, i)[xi];
        }
    }

    // Reverse message sweep; each step recomputes the unnormalized update
    // table exactly as the forward pass did.
    for (int k = sweeps * 2 * ne - 1; k >= 0; --k) {
        int e = (k % (2 * ne)) / 2;
        int side = k % 2;
        const auto& [a, b] = g.edge(e);
        int i = side == 0 ? a : b;
        int j = g.other_end(e, i);
        const auto& mi = m.at(e, side);
        auto& mbar_i = mbar[2 * e + side];

        double gdotm = 0;
        for (size_t x = 0; x < mi.size(); ++x) gdotm += mbar_i[x] * mi[x];

        const auto& m_to_j = m.toward(g, e, j);
        std::vector<double> base(g.labels(j));
        for (int xj = 0; xj < g.labels(j); ++xj) {
            double s = theta.u(j, xj) - std::log(m_to_j[xj]);
            for (int d : g.incident(j)) s += rho[d] * std::log(m.toward(g, d, j)[xj]);
            base[xj] = s;
        }
        const int lj = g.labels(j);
        std::vector<double> pot(static_cast<size_t>(g.labels(i)) * lj);
        double shift = -1e308;
        for (int xi = 0; xi < g.labels(i); ++xi)
            for (int xj = 0; xj < lj; ++xj) {
                double th = (i == a) ? theta.e(e, xi, xj) : theta.e(e, xj, xi);
                double v = th / rho[e] + base[xj];
                pot[xi * lj + xj] = v;
                shift = std::max(shift, v);
            }
        double z = 0;
        for (double v : pot) z += std::exp(v - shift);

        std::vector<double> col(lj, 0.0);
        for (int xi = 0; xi < g.labels(i); ++xi) {
            double w = (mbar_i[xi] - gdotm) / z;
            if (w == 0.0) continue;
            for (int xj = 0; xj < lj; ++xj) {
                double t = std::exp(pot[xi * lj + xj] - shift) * w;
                if (i == a)
                    res.dl_dtheta.e(e, xi, xj) += t / rho[e];
                else
                    res.dl_dtheta.e(e, xj, xi) += t / rho[e];
                col[xj] += t;
            }
        }
        for (int xj = 0; xj < lj; ++xj) {
            res.dl_dtheta.u(j, xj) += col[xj];
            for (int d : g.incident(j)) {
                double w = rho[d] - (d == e ? 1.0 : 0.0);
                if (w != 0.0 && col[xj] != 0.0)
                    mbar_toward(d, j)[xj] += w * col[xj] / m.toward(g, d, j)[xj];
            }
        }

        m.at(e, side) = fwd.trace.stack[k];
        std::fill(mbar_i.begin(), mbar_i.end(), 0.0);
    }
    return res;
}

GradResult implicit_diff_grad(const Graph& g, const TableVec& mu,
                              const TableVec& dq_dmu, const std::vector<double>& rho_in) {
    const int n = g.node_count();
    const int ne = g.edge_count();
    std::vector<double> rho = rho_in;
    if (rho.empty()) rho.assign(ne, 1.0);

    // Variable order mirrors the TableVec layout: unary blocks, edge blocks.
    std::vector<int> uoff(n), eoff(ne);
    int dim = 0;
    for (int i = 0; i < n; ++i) {
        uoff[i] = dim;
        dim += g.labels(i);
    }
    for (int e = 0; e < ne; ++e) {
        eoff[e] = dim;
        dim += g.labels(g.edge(e).first) * g.labels(g.edge(e).second);
    }

    // Hessian of the entropy surrogate H~(mu).
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < n; ++i)
        for (int x = 0; x < g.labels(i); ++x)
            D(uoff[i] + x, uoff[i] + x) -= 1.0 / mu.u(i, x);
    for (int e = 0; e < ne; ++e) {
        const auto& [a, b] = g.edge(e);
        const int lb = g.labels(b);
        for (int xa = 0; xa < g.labels(a); ++xa)
            for (int xb = 0; xb < lb; ++xb) {
                int idx = eoff[e] + xa * lb + xb;
                D(idx, idx) -= rho[e] / mu.e(e, xa, xb);
                D(idx, uoff[a] + xa) += rho[e] / mu.u(a, xa);
                D(uoff[a] + xa, idx) += rho[e] / mu.u(a, xa);
                D(idx, uoff[b] + xb) += rho[e] / mu.u(b, xb);
                D(uoff[b] + xb, idx) += rho[e] / mu.u(b, xb);
                D(uoff[a] + xa, uoff[a] + xa) -=
                    rho[e] * mu.e(e, xa, xb) / (mu.u(a, xa) * mu.u(a, xa));
                D(uoff[b] + xb, uoff[b] + xb) -=
                    rho[e] * mu.e(e, xa, xb) / (mu.u(b, xb) * mu.u(b, xb));
            }
    }

    // Local polytope equality constraints B mu = d.
    int nrows = n;
    for (int e = 0; e < ne; ++e)
        nrows += g.labels(g.edge(e).first) + g.labels(g.edge(e).second);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nrows, dim);
    int row = 0;
    for (int i = 0; i < n; ++i, ++row)
        for (int x = 0; x < g.labels(i); ++x) B(row, uoff[i] + x) = 1.0;
    for (int e = 0; e < ne; ++e) {
        const auto& [a, b] = g.edge(e);
        const int lb = g.labels(b);
        for (int xa = 0; xa < g.labels(a); ++xa, ++row) {
            for (int xb = 0; xb < lb; ++xb) B(row, eoff[e] + xa * lb + xb) = 1.0;
            B(row, uoff[a] + xa) = -1.0;
        }
        for (int xb = 0; xb < lb; ++xb, ++row) {
            for (int xa = 0; xa < g.labels(a); ++xa) B(row, eoff[e] + xa * lb + xb) = 1.0;
            B(row, uoff[b] + xb) = -1.0;
        }
    }

    Eigen::VectorXd q(dim);
    for (int k = 0; k < dim; ++k) q(k) = dq_dmu.raw()[k];

    // dL/dtheta = (D^-1 B^T (B D^-1 B^T)^+ B D^-1 - D^-1) q. The middle
    // system is rank deficient because the constraint rows are redundant.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(D);
    Eigen::VectorXd x0 = lu.solve(q);
    Eigen::MatrixXd W = lu.solve(B.transpose());
    Eigen::MatrixXd S = B * W;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(S);
    Eigen::VectorXd y = cod.solve(B * x0);
    Eigen::VectorXd grad = W * y - x0;

    GradResult res;
    res.dl_dtheta = TableVec(g);
    for (int k = 0; k < dim; ++k) {
        if (!std::isfinite(grad(k)))
            throw std::runtime_error("implicit_diff_grad: non-finite solution");
        res.dl_dtheta.raw()[k] = grad(k);
    }
    return res;
}

std::pair<double, GradResult> marginal_loss_grad(
    const Graph& g, const TableVec& theta, const InferenceConfig& config,
    const LossSpec& loss, const Labeling& target, Engine engine,
    const PerturbationConfig& pconfig) {
    if (!is_marginal_loss(loss.kind))
        throw std::invalid_argument("marginal_loss_grad: loss is not marginal-based");
    if (engine == Engine::Backprop && !config.truncated)
        throw std::invalid_argument("marginal_loss_grad: backprop needs a truncated run");
    if (engine == Engine::Implicit && config.method != Method::Trw)
        throw std::invalid_argument("marginal_loss_grad: implicit differentiation needs TRW");

    if (config.method == Method::MeanField) {
        MeanFieldResult fwd = mean_field(g, theta, config);
        MarginalLoss ml = eval_marginal_loss(loss, g, fwd.mu, target);
        GradResult gr = engine == Engine::Backprop
                            ? back_mean_field(g, theta, fwd, ml.dq_dmu)
                            : perturbation_grad(g, theta, config, ml.dq_dmu, pconfig);
        gr.clamp_events += fwd.clamp_events + ml.clamp_events;
        return {ml.value, std::move(gr)};
    }
    TrwResult fwd = trw(g, theta, config);
    MarginalLoss ml = eval_marginal_loss(loss, g, fwd.mu, target);
    GradResult gr;
    switch (engine) {
        case Engine::Backprop:
            gr = back_trw(g, theta, fwd, ml.dq_dmu, config.rho);
            break;
        case Engine::Perturbation:
            gr = perturbation_grad(g, theta, config, ml.dq_dmu, pconfig);
            break;
        case Engine::Implicit:
            gr = implicit_diff_grad(g, fwd.mu, ml.dq_dmu, config.rho);
            break;
    }
    gr.clamp_events += fwd.clamp_events + ml.clamp_events;
    return {ml.value, std::move(gr)};
}

std::pair<double, GradResult> truncated_surrogate_grad(const Graph& g,
                                                       const TableVec& theta,
                                                       const InferenceConfig& config,
                                                       const Labeling& target) {
    if (!config.truncated)
        throw std::invalid_argument("truncated_surrogate_grad: needs a truncated run");
    for (int v : target)
        if (v == HIDDEN)
            throw std::invalid_argument(
                "truncated_surrogate_grad: hidden nodes are not supported");
    const double floor = 1e-300;
    TableVec f = sufficient_stats(g, target);

    // dq = d(theta.mu + H~(mu))/dmu at the truncated marginals; the direct
    // theta-dependence contributes mu - f on top of the reverse sweep.
    if (config.method == Method::MeanField) {
        MeanFieldResult fwd = mean_field(g, theta, config);
        TableVec dq = theta;  // edge entries: d(theta.mu)/dmu_e = theta_e
        for (int i = 0; i < g.node_count(); ++i)
            for (int x = 0; x < g.labels(i); ++x)
                dq.u(i, x) -= 1.0 + std::log(std::max(fwd.mu.u(i, x), floor));
        GradResult gr = back_mean_field(g, theta, fwd, dq);
        gr.dl_dtheta.axpy(1.0, fwd.mu);
        gr.dl_dtheta.axpy(-1.0, f);
        gr.clamp_events += fwd.clamp_events;
        double value = approx_log_z(g, theta, fwd.mu, config.method, config.rho) -
                       dot(theta, f);
        return {value, std::move(gr)};
    }
    TrwResult fwd = trw(g, theta, config);
    TableVec dq = theta;
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        double rho = config.rho.empty() ? 1.0 : config.rho[e];
        for (int xa = 0; xa < g.labels(a); ++xa)
            for (int xb = 0; xb < g.labels(b); ++xb) {
                double p = std::max(fwd.mu.e(e, xa, xb), floor);
                double prod = std::max(fwd.mu.u(a, xa) * fwd.mu.u(b, xb), floor);
                dq.e(e, xa, xb) -= rho * (1.0 + std::log(p / prod));
            }
    }
    for (int i = 0; i < g.node_count(); ++i)
        for (int x = 0; x < g.labels(i); ++x) {
            double mui = std::max(fwd.mu.u(i, x), floor);
            double v = -(1.0 + std::log(mui));
            for (int e : g.incident(i)) {
                double rho = config.rho.empty() ? 1.0 : config.rho[e];
                const auto& [a, b] = g.edge(e);
                double s = 0;  // edge-belief marginal onto node i
                for (int y = 0; y < g.labels(g.other_end(e, i)); ++y)
                    s += (i == a) ? fwd.mu.e(e, x, y) : fwd.mu.e(e, y, x);
                v += rho * s / mui;
            }
            dq.u(i, x) += v;
        }
    GradResult gr = back_trw(g, theta, fwd, dq, config.rho);
    gr.dl_dtheta.axpy(1.0, fwd.mu);
    gr.dl_dtheta.axpy(-1.0, f);
    gr.clamp_events += fwd.clamp_events;
    double value =
        approx_log_z(g, theta, fwd.mu, config.method, config.rho) - dot(theta, f);
    return {value, std::move(gr)};
}

}  // namespace gmlearn
