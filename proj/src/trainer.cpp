#include "gmlearn/trainer.hpp"

#include "gmlearn/exact.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace gmlearn {

namespace {

void check_instance(const FeatureModel& fm, const Instance& inst) {
    const Graph& g = inst.graph;
    for (int i = 0; i < g.node_count(); ++i)
        if (g.labels(i) != fm.labels)
            throw std::invalid_argument("instance label count does not match model");
    if (inst.ufeat.size() != static_cast<size_t>(g.node_count()) * fm.du ||
        inst.efeat.size() != static_cast<size_t>(g.edge_count()) * fm.dv)
        throw std::invalid_argument("instance feature dimensions do not match model");
}

struct InstanceGrad {
    double value = 0;
    TableVec dl_dtheta;
    long inference_calls = 0;
    long clamp_events = 0;
};

InstanceGrad instance_loss_grad(const FeatureModel& fm, const Instance& inst,
                                const TrainConfig& config) {
    TableVec theta = build_theta(fm, inst);
    InstanceGrad out;
    if (is_marginal_loss(config.loss.kind)) {
        auto [value, gr] = marginal_loss_grad(inst.graph, theta, config.inference,
                                              config.loss, inst.target, config.engine,
                                              config.perturb);
        out.value = value;
        out.dl_dtheta = std::move(gr.dl_dtheta);
        out.inference_calls = 1 + gr.inference_calls;
        out.clamp_events = gr.clamp_events;
        return out;
    }
    ThetaLoss tl;
    switch (config.loss.kind) {
        case LossKind::SurrogateLikelihood:
            if (config.exact_tree) {
                tl = exact_likelihood(inst.graph, theta, inst.target);
            } else if (config.inference.truncated) {
                // differentiate the truncated partition estimate exactly
                auto [value, gr] = truncated_surrogate_grad(inst.graph, theta,
                                                            config.inference,
                                                            inst.target);
                tl.value = value;
                tl.dl_dtheta = std::move(gr.dl_dtheta);
                out.clamp_events = gr.clamp_events;
            } else {
                tl = surrogate_likelihood(inst.graph, theta, inst.target,
                                          config.inference);
            }
            out.inference_calls = 1;
            break;
        case LossKind::TruncatedEm:
            tl = truncated_em(inst.graph, theta, inst.target, config.inference);
            out.inference_calls = 2;
            break;
        case LossKind::Pseudolikelihood:
            tl = pseudolikelihood(inst.graph, theta, inst.target);
            break;
        case LossKind::Piecewise:
            tl = piecewise(inst.graph, theta, inst.target);
            break;
        default:
            throw std::logic_error("unhandled loss kind");
    }
    out.value = tl.value;
    out.dl_dtheta = std::move(tl.dl_dtheta);
    return out;
}

long observed_count(const Dataset& data) {
    long n = 0;
    for (const auto& inst : data.instances)
        for (int v : inst.target)
            if (v != HIDDEN) ++n;
    return n;
}

}  // namespace

TableVec build_theta(const FeatureModel& fm, const Instance& inst) {
    check_instance(fm, inst);
    const Graph& g = inst.graph;
    TableVec theta(g);
    const int L = fm.labels;
    for (int i = 0; i < g.node_count(); ++i) {
        const double* u = inst.ufeat.data() + static_cast<size_t>(i) * fm.du;
        for (int x = 0; x < L; ++x) {
            double s = 0;
            for (int k = 0; k < fm.du; ++k) s += fm.F[x * fm.du + k] * u[k];
            theta.u(i, x) = s;
        }
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        const double* v = inst.efeat.data() + static_cast<size_t>(e) * fm.dv;
        for (int xi = 0; xi < L; ++xi)
            for (int xj = 0; xj < L; ++xj) {
                double s = 0;
                const double* row = fm.G.data() + static_cast<size_t>(xi * L + xj) * fm.dv;
                for (int k = 0; k < fm.dv; ++k) s += row[k] * v[k];
                theta.e(e, xi, xj) = s;
            }
    }
    return theta;
}

void backprop_features(const FeatureModel& fm, const Instance& inst,
                       const TableVec& dl_dtheta, std::vector<double>& dF,
                       std::vector<double>& dG) {
    check_instance(fm, inst);
    const Graph& g = inst.graph;
    const int L = fm.labels;
    for (int i = 0; i < g.node_count(); ++i) {
        const double* u = inst.ufeat.data() + static_cast<size_t>(i) * fm.du;
        for (int x = 0; x < L; ++x) {
            double d = dl_dtheta.u(i, x);
            if (d == 0.0) continue;
            for (int k = 0; k < fm.du; ++k) dF[x * fm.du + k] += d * u[k];
        }
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        const double* v = inst.efeat.data() + static_cast<size_t>(e) * fm.dv;
        for (int xi = 0; xi < L; ++xi)
            for (int xj = 0; xj < L; ++xj) {
                double d = dl_dtheta.e(e, xi, xj);
                if (d == 0.0) continue;
                double* row = dG.data() + static_cast<size_t>(xi * L + xj) * fm.dv;
                for (int k = 0; k < fm.dv; ++k) row[k] += d * v[k];
            }
    }
}

RiskResult empirical_risk(const FeatureModel& fm, const Dataset& data,
                          const TrainConfig& config) {
    RiskResult res;
    res.dF.assign(fm.F.size(), 0.0);
    res.dG.assign(fm.G.size(), 0.0);

    const int n = static_cast<int>(data.instances.size());
    std::vector<InstanceGrad> parts(n);
    int workers = std::max(1, config.workers);
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i)
            parts[i] = instance_loss_grad(fm, data.instances[i], config);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        std::exception_ptr err;
        std::mutex err_mu;
        for (int w = 0; w < std::min(workers, n); ++w)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    try {
                        parts[i] = instance_loss_grad(fm, data.instances[i], config);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(err_mu);
                        if (!err) err = std::current_exception();
                        return;
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (err) std::rethrow_exception(err);
    }

    // Reduction is sequential in instance order, so results do not depend on
    // worker scheduling.
    double total = 0;
    for (int i = 0; i < n; ++i) {
        total += parts[i].value;
        backprop_features(fm, data.instances[i], parts[i].dl_dtheta, res.dF, res.dG);
        res.inference_calls += parts[i].inference_calls;
        res.clamp_events += parts[i].clamp_events;
    }

    const double n_obs = static_cast<double>(std::max(1L, observed_count(data)));
    res.value = total / n_obs;
    for (double& v : res.dF) v /= n_obs;
    for (double& v : res.dG) v /= n_obs;
    if (config.lambda > 0) {
        double sq = 0;
        for (double v : fm.F) sq += v * v;
        for (double v : fm.G) sq += v * v;
        res.value += config.lambda * sq;
        for (size_t k = 0; k < fm.F.size(); ++k) res.dF[k] += 2 * config.lambda * fm.F[k];
        for (size_t k = 0; k < fm.G.size(); ++k) res.dG[k] += 2 * config.lambda * fm.G[k];
    }
    if (config.freeze_edges) std::fill(res.dG.begin(), res.dG.end(), 0.0);
    return res;
}

namespace {

struct Objective {
    const Dataset& data;
    const TrainConfig& config;
    FeatureModel fm;  // shape template
    long inference_calls = 0;

    size_t dim() const { return fm.F.size() + fm.G.size(); }

    void unpack(const std::vector<double>& x) {
        std::copy(x.begin(), x.begin() + fm.F.size(), fm.F.begin());
        std::copy(x.begin() + fm.F.size(), x.end(), fm.G.begin());
    }

    double eval(const std::vector<double>& x, std::vector<double>& grad) {
        unpack(x);
        RiskResult r = empirical_risk(fm, data, config);
        inference_calls += r.inference_calls;
        grad.resize(dim());
        std::copy(r.dF.begin(), r.dF.end(), grad.begin());
        std::copy(r.dG.begin(), r.dG.end(), grad.begin() + r.dF.size());
        return r.value;
    }
};

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double inf_norm(const std::vector<double>& a) {
    double m = 0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

constexpr double kWolfeC1 = 1e-4;
constexpr double kWolfeC2 = 0.9;

/// Strong-Wolfe line search along d from x0. Returns the accepted step or 0
/// on failure; on success x, f and grad hold the new point.
double line_search(Objective& obj, std::vector<double>& x, double& f,
                   std::vector<double>& grad, const std::vector<double>& d,
                   double t0) {
    const std::vector<double> x0 = x;
    const double f0 = f;
    const double gd0 = vdot(grad, d);
    if (gd0 >= 0) return 0;

    auto eval_at = [&](double t) {
        for (size_t k = 0; k < x.size(); ++k) x[k] = x0[k] + t * d[k];
        f = obj.eval(x, grad);
        return vdot(grad, d);
    };

    auto zoom = [&](double lo, double flo, double hi) {
        for (int it = 0; it < 40; ++it) {
            double t = 0.5 * (lo + hi);
            double gd = eval_at(t);
            if (!std::isfinite(f) || f > f0 + kWolfeC1 * t * gd0 || f >= flo) {
                hi = t;
            } else {
                if (std::abs(gd) <= -kWolfeC2 * gd0) return t;
                if (gd * (hi - lo) >= 0) hi = lo;
                lo = t;
                flo = f;
            }
            if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
        // Fall back to the best sufficient-decrease point seen.
        eval_at(lo);
        return (std::isfinite(f) && f < f0) ? lo : 0.0;
    };

    double tprev = 0, fprev = f0, t = t0;
    for (int it = 0; it < 20; ++it) {
        double gd = eval_at(t);
        if (!std::isfinite(f) || f > f0 + kWolfeC1 * t * gd0 || (it > 0 && f >= fprev))
            return zoom(tprev, fprev, t);
        if (std::abs(gd) <= -kWolfeC2 * gd0) return t;
        if (gd >= 0) return zoom(t, f, tprev);
        tprev = t;
        fprev = f;
        t *= 2;
    }
    return (std::isfinite(f) && f < f0) ? tprev : 0.0;
}

}  // namespace

TrainResult train(const FeatureModel& fm0, const Dataset& data,
                  const TrainConfig& config) {
    if (config.lambda < 0) throw std::invalid_argument("train: lambda must be >= 0");
    Objective obj{data, config, fm0};
    std::vector<double> x(obj.dim());
    std::copy(fm0.F.begin(), fm0.F.end(), x.begin());
    std::copy(fm0.G.begin(), fm0.G.end(), x.begin() + fm0.F.size());

    std::vector<double> grad;
    double f = obj.eval(x, grad);
    if (!std::isfinite(f)) throw std::runtime_error("train: non-finite risk at start");

    TrainResult res;
    res.fm = fm0;
    constexpr int kMemory = 10;
    std::deque<std::pair<std::vector<double>, std::vector<double>>> mem;  // (s, y)
    const auto t_start = std::chrono::steady_clock::now();

    auto record = [&](int iter) {
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                    t_start)
                          .count();
        res.history.push_back({iter, f, inf_norm(grad), secs, obj.inference_calls});
    };
    record(0);

    int iter = 0;
    bool restarted_here = false;
    while (iter < config.max_iters) {
        if (inf_norm(grad) < config.grad_tol) {
            res.converged = true;
            break;
        }
        // Two-loop recursion for the quasi-Newton direction.
        std::vector<double> d(grad.begin(), grad.end());
        std::vector<double> alpha(mem.size());
        for (int k = static_cast<int>(mem.size()) - 1; k >= 0; --k) {
            const auto& [s, y] = mem[k];
            alpha[k] = vdot(s, d) / vdot(y, s);
            for (size_t j = 0; j < d.size(); ++j) d[j] -= alpha[k] * y[j];
        }
        if (!mem.empty()) {
            const auto& [s, y] = mem.back();
            double scale = vdot(y, s) / vdot(y, y);
            for (double& v : d) v *= scale;
        }
        for (int k = 0; k < static_cast<int>(mem.size()); ++k) {
            const auto& [s, y] = mem[k];
            double beta = vdot(y, d) / vdot(y, s);
            for (size_t j = 0; j < d.size(); ++j) d[j] += (alpha[k] - beta) * s[j];
        }
        for (double& v : d) v = -v;

        if (vdot(grad, d) >= 0) {
            if (!config.restart_on_bad_direction) {
                res.message = "non-descent direction";
                break;
            }
            mem.clear();
            for (size_t j = 0; j < d.size(); ++j) d[j] = -grad[j];
        }

        std::vector<double> x_old = x, g_old = grad;
        double f_old = f;
        double t0 = mem.empty() ? std::min(1.0, 1.0 / std::max(1e-12, inf_norm(grad)))
                                : 1.0;
        double t = line_search(obj, x, f, grad, d, t0);
        if (t == 0.0) {
            if (!restarted_here && !mem.empty()) {
                // Retry once from a steepest-descent restart.
                mem.clear();
                x = x_old;
                f = f_old;
                grad = g_old;
                restarted_here = true;
                continue;
            }
            x = x_old;
            f = f_old;
            grad = g_old;
            res.message = "line search failed";
            break;
        }
        restarted_here = false;

        std::vector<double> s(x.size()), y(x.size());
        for (size_t j = 0; j < x.size(); ++j) {
            s[j] = x[j] - x_old[j];
            y[j] = grad[j] - g_old[j];
        }
        if (vdot(y, s) > 1e-12 * std::sqrt(vdot(s, s)) * std::sqrt(vdot(y, y))) {
            mem.emplace_back(std::move(s), std::move(y));
            if (static_cast<int>(mem.size()) > kMemory) mem.pop_front();
        }
        ++iter;
        record(iter);
    }

    obj.unpack(x);
    res.fm = obj.fm;
    // Divergence diagnostic: the truncated surrogate losses are unbounded
    // below, which shows up as runaway parameters or risk, or as a stall where
    // the reported value and gradient contradict each other (no step along the
    // gradient field decreases the value, yet the gradient stays large).
    if (!std::isfinite(f) || inf_norm(x) > 100.0 || f < -20.0 ||
        f > res.history.front().risk + 1e-9 ||
        (res.message == "line search failed" &&
         inf_norm(grad) > 1e3 * config.grad_tol))
        res.diverged = true;
    return res;
}

TableVec predict_marginals(const FeatureModel& fm, const Instance& inst,
                           const TrainConfig& config) {
    TableVec theta = build_theta(fm, inst);
    if (config.exact_tree) return tree_inference(inst.graph, theta).marginals;
    if (config.inference.method == Method::MeanField)
        return mean_field(inst.graph, theta, config.inference).mu;
    return trw(inst.graph, theta, config.inference).mu;
}

EvalResult evaluate(const FeatureModel& fm, const Dataset& data,
                    const TrainConfig& config) {
    EvalResult res;
    res.n_instances = static_cast<int>(data.instances.size());
    double total_loss = 0;
    long err_nodes = 0, obs_nodes = 0;
    for (const auto& inst : data.instances) {
        TableVec mu = predict_marginals(fm, inst, config);
        if (is_marginal_loss(config.loss.kind)) {
            total_loss += eval_marginal_loss(config.loss, inst.graph, mu, inst.target).value;
        } else {
            total_loss += instance_loss_grad(fm, inst, config).value;
        }
        Labeling pred = mpm_decide(inst.graph, mu);
        for (size_t i = 0; i < inst.target.size(); ++i) {
            if (inst.target[i] == HIDDEN) continue;
            ++obs_nodes;
            if (pred[i] != inst.target[i]) ++err_nodes;
        }
    }
    if (obs_nodes > 0) {
        total_loss /= static_cast<double>(obs_nodes);
        res.hamming_error = static_cast<double>(err_nodes) / obs_nodes;
    }
    res.loss_value = total_loss;
    return res;
}

void save_checkpoint(const std::string& path, const FeatureModel& fm,
                     const TrainConfig& config, int iteration, double risk) {
    nlohmann::json j;
    j["labels"] = fm.labels;
    j["du"] = fm.du;
    j["dv"] = fm.dv;
    j["F"] = fm.F;
    j["G"] = fm.G;
    j["config"] = {
        {"loss", loss_name(config.loss.kind)},
        {"alpha", config.loss.alpha},
        {"method", config.inference.method == Method::MeanField ? "meanfield" : "trw"},
        {"truncated", config.inference.truncated},
        {"iters", config.inference.iters},
        {"engine", config.engine == Engine::Backprop      ? "backprop"
                   : config.engine == Engine::Perturbation ? "perturbation"
                                                           : "implicit"},
        {"exact_tree", config.exact_tree},
        {"lambda", config.lambda},
    };
    j["iteration"] = iteration;
    j["risk"] = risk;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

FeatureModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    FeatureModel fm;
    fm.labels = j.at("labels").get<int>();
    fm.du = j.at("du").get<int>();
    fm.dv = j.at("dv").get<int>();
    fm.F = j.at("F").get<std::vector<double>>();
    fm.G = j.at("G").get<std::vector<double>>();
    if (fm.F.size() != static_cast<size_t>(fm.labels) * fm.du ||
        fm.G.size() != static_cast<size_t>(fm.labels) * fm.labels * fm.dv)
        throw std::runtime_error("checkpoint dimensions inconsistent");
    return fm;
}

}  // namespace gmlearn
