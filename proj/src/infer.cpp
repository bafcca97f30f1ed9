#include "gmlearn/infer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmlearn {

namespace {

constexpr double kFloor = 1e-300;

double clamp_floor(double v, long& events) {
    if (v < kFloor) {
        ++events;
        return kFloor;
    }
    return v;
}

void softmax_inplace(std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    double s = 0;
    for (double& x : v) {
        x = std::exp(x - m);
        s += x;
    }
    for (double& x : v) x /= s;
}

}  // namespace

MessageSet::MessageSet(const Graph& g) {
    m_.resize(2 * g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        m_[2 * e + 0].assign(g.labels(a), 1.0 / g.labels(a));
        m_[2 * e + 1].assign(g.labels(b), 1.0 / g.labels(b));
    }
}

MeanFieldResult mean_field(const Graph& g, const TableVec& theta,
                           const InferenceConfig& config) {
    MeanFieldResult res;
    const int n = g.node_count();

    // Uniform initialization.
    std::vector<std::vector<double>> mu(n);
    for (int i = 0; i < n; ++i) mu[i].assign(g.labels(i), 1.0 / g.labels(i));

    auto update_node = [&](int j, std::vector<double>& out) {
        out.assign(theta.unary(j).begin(), theta.unary(j).end());
        for (int e : g.incident(j)) {
            const auto& [a, b] = g.edge(e);
            int i = g.other_end(e, j);
            for (int xj = 0; xj < g.labels(j); ++xj) {
                double s = 0;
                for (int xi = 0; xi < g.labels(i); ++xi)
                    s += (j == b ? theta.e(e, xi, xj) : theta.e(e, xj, xi)) * mu[i][xi];
                out[xj] += s;
            }
        }
        softmax_inplace(out);
        for (double& v : out) v = clamp_floor(v, res.clamp_events);
    };

    std::vector<double> next;
    int sweeps_limit = config.truncated ? config.iters : config.max_iters;
    for (int sweep = 0; sweep < sweeps_limit; ++sweep) {
        double delta = 0;
        for (int j = 0; j < n; ++j) {
            if (config.truncated) res.trace.stack.push_back(mu[j]);
            update_node(j, next);
            for (int x = 0; x < g.labels(j); ++x)
                delta = std::max(delta, std::abs(next[x] - mu[j][x]));
            mu[j] = next;
        }
        ++res.sweeps_run;
        if (!config.truncated && delta < config.threshold) break;
    }
    res.trace.sweeps = config.truncated ? res.sweeps_run : 0;

    res.mu = TableVec(g);
    for (int i = 0; i < n; ++i)
        for (int x = 0; x < g.labels(i); ++x) res.mu.u(i, x) = mu[i][x];
    // Clique marginals are products of the univariate ones.
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        for (int xa = 0; xa < g.labels(a); ++xa)
            for (int xb = 0; xb < g.labels(b); ++xb)
                res.mu.e(e, xa, xb) = mu[a][xa] * mu[b][xb];
    }
    return res;
}

TrwResult trw(const Graph& g, const TableVec& theta, const InferenceConfig& config) {
    TrwResult res;
    std::vector<double> rho = config.rho;
    if (rho.empty()) rho.assign(g.edge_count(), 1.0);
    if (static_cast<int>(rho.size()) != g.edge_count())
        throw std::invalid_argument("trw: rho size mismatch");
    for (double r : rho)
        if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("trw: rho out of (0,1]");

    MessageSet m(g);

    // log of the product of incoming message powers at each node; maintained
    // incrementally as messages change.
    auto log_msg_prod = [&](int i, int xi) {
        double s = 0;
        for (int d : g.incident(i)) s += rho[d] * std::log(m.toward(g, d, i)[xi]);
        return s;
    };

    auto update_message = [&](int e, int target) {
        int other = g.other_end(e, target);
        const auto& [a, b] = g.edge(e);
        const auto& m_to_other = m.toward(g, e, other);
        std::vector<double> base(g.labels(other));
        for (int xo = 0; xo < g.labels(other); ++xo)
            base[xo] = theta.u(other, xo) + log_msg_prod(other, xo) -
                       std::log(m_to_other[xo]);

        std::vector<double> lg(g.labels(target));
        double shift = -1e308;
        std::vector<double> pot(static_cast<size_t>(g.labels(target)) * g.labels(other));
        for (int xt = 0; xt < g.labels(target); ++xt)
            for (int xo = 0; xo < g.labels(other); ++xo) {
                double th = (target == a) ? theta.e(e, xt, xo) : theta.e(e, xo, xt);
                double v = th / rho[e] + base[xo];
                pot[xt * g.labels(other) + xo] = v;
                shift = std::max(shift, v);
            }
        auto& out = m.toward(g, e, target);
        double total = 0;
        for (int xt = 0; xt < g.labels(target); ++xt) {
            double s = 0;
            for (int xo = 0; xo < g.labels(other); ++xo)
                s += std::exp(pot[xt * g.labels(other) + xo] - shift);
            out[xt] = s;
            total += s;
        }
        if (!(total > 0))
            throw std::runtime_error("trw: message underflow (all-zero table) at edge " +
                                     std::to_string(e));
        for (double& v : out) v = clamp_floor(v / total, res.clamp_events);
    };

    auto unary_beliefs = [&](std::vector<std::vector<double>>& mu_u) {
        mu_u.resize(g.node_count());
        for (int i = 0; i < g.node_count(); ++i) {
            mu_u[i].resize(g.labels(i));
            for (int xi = 0; xi < g.labels(i); ++xi)
                mu_u[i][xi] = theta.u(i, xi) + log_msg_prod(i, xi);
            softmax_inplace(mu_u[i]);
            for (double& v : mu_u[i]) v = clamp_floor(v, res.clamp_events);
        }
    };

    std::vector<std::vector<double>> prev_u;
    if (!config.truncated) unary_beliefs(prev_u);

    int sweeps_limit = config.truncated ? config.iters : config.max_iters;
    for (int sweep = 0; sweep < sweeps_limit; ++sweep) {
        for (int e = 0; e < g.edge_count(); ++e)
            for (int side = 0; side < 2; ++side) {
                int target = side == 0 ? g.edge(e).first : g.edge(e).second;
                if (config.truncated) res.trace.stack.push_back(m.at(e, side));
                update_message(e, target);
            }
        ++res.sweeps_run;
        if (!config.truncated) {
            std::vector<std::vector<double>> cur_u;
            unary_beliefs(cur_u);
            double delta = 0;
            for (int i = 0; i < g.node_count(); ++i)
                for (int x = 0; x < g.labels(i); ++x)
                    delta = std::max(delta, std::abs(cur_u[i][x] - prev_u[i][x]));
            prev_u.swap(cur_u);
            if (delta < config.threshold) break;
        }
    }
    res.trace.sweeps = config.truncated ? res.sweeps_run : 0;

    // Beliefs from the final messages.
    res.mu = TableVec(g);
    std::vector<std::vector<double>> mu_u;
    unary_beliefs(mu_u);
    for (int i = 0; i < g.node_count(); ++i)
        for (int x = 0; x < g.labels(i); ++x) res.mu.u(i, x) = mu_u[i][x];
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        std::vector<double> la(g.labels(a)), lb(g.labels(b));
        for (int xa = 0; xa < g.labels(a); ++xa)
            la[xa] = theta.u(a, xa) + log_msg_prod(a, xa) -
                     std::log(m.toward(g, e, a)[xa]);
        for (int xb = 0; xb < g.labels(b); ++xb)
            lb[xb] = theta.u(b, xb) + log_msg_prod(b, xb) -
                     std::log(m.toward(g, e, b)[xb]);
        std::vector<double> tab(static_cast<size_t>(g.labels(a)) * g.labels(b));
        for (int xa = 0; xa < g.labels(a); ++xa)
            for (int xb = 0; xb < g.labels(b); ++xb)
                tab[xa * g.labels(b) + xb] =
                    theta.e(e, xa, xb) / rho[e] + la[xa] + lb[xb];
        softmax_inplace(tab);
        auto span = res.mu.edge(e);
        for (size_t k = 0; k < span.size(); ++k)
            span[k] = clamp_floor(tab[k], res.clamp_events);
    }
    res.messages = std::move(m);
    return res;
}

double entropy_mf(const Graph& g, const TableVec& mu) {
    double h = 0;
    for (int i = 0; i < g.node_count(); ++i)
        for (double v : mu.unary(i))
            if (v > 0) h -= v * std::log(v);
    return h;
}

double entropy_trw(const Graph& g, const TableVec& mu, const std::vector<double>& rho) {
    double h = entropy_mf(g, mu);
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        double mi = 0;
        for (int xa = 0; xa < g.labels(a); ++xa)
            for (int xb = 0; xb < g.labels(b); ++xb) {
                double p = mu.e(e, xa, xb);
                if (p > 0) mi += p * std::log(p / (mu.u(a, xa) * mu.u(b, xb)));
            }
        h -= (rho.empty() ? 1.0 : rho[e]) * mi;
    }
    return h;
}

double approx_log_z(const Graph& g, const TableVec& theta, const TableVec& mu,
                    Method method, const std::vector<double>& rho) {
    double h = method == Method::MeanField ? entropy_mf(g, mu)
                                           : entropy_trw(g, mu, rho);
    return dot(theta, mu) + h;
}

RhoCertificate grid_rho(int rows, int cols) {
    Graph g = Graph::grid(rows, cols, 2);  // edge ordering only
    RhoCertificate cert;
    cert.rho.resize(g.edge_count());
    cert.in_tree.resize(g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        bool horizontal = (b == a + 1) && (cols > 1);
        int ra = a / cols, ca = a % cols;
        bool in_a, in_b;  // comb A: row-0 horizontals + all verticals
        if (horizontal) {
            in_a = (ra == 0);
            in_b = true;
        } else {
            in_a = true;
            in_b = (ca == 0);
        }
        // Degenerate single-row/column grids are plain chains.
        if (rows == 1 || cols == 1) in_a = in_b = true;
        cert.in_tree[e] = {in_a, in_b};
        cert.rho[e] = (static_cast<int>(in_a) + static_cast<int>(in_b)) / 2.0;
    }
    return cert;
}

}  // namespace gmlearn
