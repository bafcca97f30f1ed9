#include "doctest.h"

#include "gmlearn/exact.hpp"
#include "gmlearn/losses.hpp"
#include "helpers.hpp"

#include <cmath>

using namespace gmlearn;
using testutil::Rng;

namespace {

InferenceConfig converged_trw() {
    InferenceConfig c;
    c.method = Method::Trw;
    c.threshold = 1e-12;
    return c;
}

InferenceConfig converged_mf() {
    InferenceConfig c;
    c.method = Method::MeanField;
    c.threshold = 1e-12;
    return c;
}

/// Finite differences of a theta-space loss.
template <typename F>
void check_theta_fd(const Graph& g, const TableVec& theta, const TableVec& grad,
                    F value, double tol) {
    const double h = 1e-6;
    TableVec th = theta;
    for (size_t k = 0; k < th.size(); ++k) {
        double orig = th.raw()[k];
        th.raw()[k] = orig + h;
        double fp = value(th);
        th.raw()[k] = orig - h;
        double fm = value(th);
        th.raw()[k] = orig;
        CHECK(grad.raw()[k] == doctest::Approx((fp - fm) / (2 * h)).epsilon(tol));
    }
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("univariate logistic loss") {
    Graph g({2, 2}, {});
    TableVec mu(g);
    SUBCASE("certain and correct gives zero") {
        mu.u(0, 0) = mu.u(1, 1) = 1.0;
        CHECK(univ_logistic(g, mu, {0, 1}).value == 0.0);
    }
    SUBCASE("uniform gives n log 2") {
        for (int i = 0; i < 2; ++i) mu.u(i, 0) = mu.u(i, 1) = 0.5;
        CHECK(univ_logistic(g, mu, {0, 0}).value ==
              doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("frozen value and gradient") {
        Graph g1({2}, {});
        TableVec m1(g1);
        m1.u(0, 0) = 0.8;
        m1.u(0, 1) = 0.2;
        MarginalLoss r = univ_logistic(g1, m1, {0});
        CHECK(r.value == doctest::Approx(0.22314).epsilon(1e-4));
        CHECK(r.dq_dmu.u(0, 0) == doctest::Approx(-1.25).epsilon(1e-12));
        CHECK(r.dq_dmu.u(0, 1) == 0.0);
    }
}

TEST_CASE("clique logistic loss") {
    Graph g({2, 2}, {{0, 1}});
    TableVec mu(g);
    SUBCASE("certain correct edge gives zero") {
        mu.e(0, 1, 0) = 1.0;
        CHECK(clique_logistic(g, mu, {1, 0}).value == 0.0);
    }
    SUBCASE("uniform gives E log 4") {
        for (auto& v : mu.edge(0)) v = 0.25;
        CHECK(clique_logistic(g, mu, {0, 0}).value ==
              doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("frozen value and gradient") {
        mu.e(0, 0, 0) = 0.4;
        mu.e(0, 0, 1) = 0.1;
        mu.e(0, 1, 0) = 0.2;
        mu.e(0, 1, 1) = 0.3;
        MarginalLoss r = clique_logistic(g, mu, {0, 0});
        CHECK(r.value == doctest::Approx(0.91629).epsilon(1e-4));
        CHECK(r.dq_dmu.e(0, 0, 0) == doctest::Approx(-2.5).epsilon(1e-12));
    }
    SUBCASE("hidden endpoint skips the edge") {
        mu.e(0, 0, 0) = 1.0;
        MarginalLoss r = clique_logistic(g, mu, {0, HIDDEN});
        CHECK(r.value == 0.0);
        CHECK(r.dq_dmu.inf_norm() == 0.0);
    }
}

TEST_CASE("smoothed classification loss") {
    Graph g({2}, {});
    TableVec mu(g);
    SUBCASE("confident correct prediction at alpha 50") {
        mu.u(0, 0) = 1.0;
        mu.u(0, 1) = 0.0;
        MarginalLoss r = smooth_class(g, mu, {0}, 50.0);
        CHECK(r.value == doctest::Approx(1.0 / (1.0 + std::exp(50.0))).epsilon(1e-6));
    }
    SUBCASE("uniform gives one half") {
        mu.u(0, 0) = mu.u(0, 1) = 0.5;
        CHECK(smooth_class(g, mu, {0}, 15.0).value == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("frozen sigmoid value") {
        mu.u(0, 0) = 0.3;
        mu.u(0, 1) = 0.7;
        MarginalLoss r = smooth_class(g, mu, {0}, 5.0);
        CHECK(r.value == doctest::Approx(0.88080).epsilon(1e-4));
    }
}

TEST_CASE("univariate quadratic loss") {
    Graph g({2}, {});
    TableVec mu(g);
    SUBCASE("perfect prediction gives zero") {
        mu.u(0, 0) = 1.0;
        CHECK(univ_quad(g, mu, {0}).value == 0.0);
    }
    SUBCASE("uniform gives one half per node") {
        mu.u(0, 0) = mu.u(0, 1) = 0.5;
        CHECK(univ_quad(g, mu, {0}).value == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("frozen value and gradient") {
        mu.u(0, 0) = 0.8;
        mu.u(0, 1) = 0.2;
        MarginalLoss r = univ_quad(g, mu, {0});
        CHECK(r.value == doctest::Approx(0.08).epsilon(1e-12));
        CHECK(r.dq_dmu.u(0, 0) == doctest::Approx(-0.4).epsilon(1e-12));
        CHECK(r.dq_dmu.u(0, 1) == doctest::Approx(0.4).epsilon(1e-12));
    }
}

TEST_CASE("marginal losses: dQ/dmu matches finite differences in mu") {
    Rng rng(31);
    Graph g = Graph::grid(2, 2, 2);
    // A strictly interior random mu (entries of a softmax); consistency with
    // the polytope is irrelevant for this derivative check.
    TableVec mu(g);
    for (int i = 0; i < g.node_count(); ++i) {
        double a = 0.2 + 0.6 * std::uniform_real_distribution<double>()(rng);
        mu.u(i, 0) = a;
        mu.u(i, 1) = 1 - a;
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        double s = 0;
        for (auto& v : mu.edge(e)) {
            v = 0.1 + std::uniform_real_distribution<double>()(rng);
            s += v;
        }
        for (auto& v : mu.edge(e)) v /= s;
    }
    Labeling target = testutil::random_labeling(g, rng);
    for (LossKind kind : {LossKind::UnivLogistic, LossKind::CliqueLogistic,
                          LossKind::SmoothClass, LossKind::UnivQuad}) {
        LossSpec spec{kind, 7.0};
        MarginalLoss r = eval_marginal_loss(spec, g, mu, target);
        const double h = 1e-7;
        TableVec m2 = mu;
        for (size_t k = 0; k < m2.size(); ++k) {
            double orig = m2.raw()[k];
            m2.raw()[k] = orig + h;
            double fp = eval_marginal_loss(spec, g, m2, target).value;
            m2.raw()[k] = orig - h;
            double fm = eval_marginal_loss(spec, g, m2, target).value;
            m2.raw()[k] = orig;
            double fd = (fp - fm) / (2 * h);
            CHECK(r.dq_dmu.raw()[k] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("hidden nodes contribute exactly zero") {
    Rng rng(32);
    Graph g = Graph::grid(2, 2, 2);
    TableVec mu = testutil::run_mu(g, testutil::random_theta(g, rng), converged_trw());
    Labeling all_hidden(4, HIDDEN);
    Labeling partial{0, HIDDEN, 1, HIDDEN};
    Labeling full{0, 1, 1, 0};
    for (LossKind kind : {LossKind::UnivLogistic, LossKind::CliqueLogistic,
                          LossKind::SmoothClass, LossKind::UnivQuad}) {
        LossSpec spec{kind, 15.0};
        MarginalLoss none = eval_marginal_loss(spec, g, mu, all_hidden);
        CHECK(none.value == 0.0);
        CHECK(none.dq_dmu.inf_norm() == 0.0);
        // hiding nodes only removes their terms; the observed-node entries
        // of the gradient are bitwise unchanged
        MarginalLoss part = eval_marginal_loss(spec, g, mu, partial);
        MarginalLoss whole = eval_marginal_loss(spec, g, mu, full);
        CHECK(part.dq_dmu.unary(0)[0] == whole.dq_dmu.unary(0)[0]);
        CHECK(part.dq_dmu.unary(2)[1] == whole.dq_dmu.unary(2)[1]);
        for (int x = 0; x < 2; ++x) {
            CHECK(part.dq_dmu.u(1, x) == 0.0);
            CHECK(part.dq_dmu.u(3, x) == 0.0);
        }
    }
}

TEST_CASE("univ_logistic equals deterministic-target KL risk up to a constant") {
    Rng rng(33);
    Graph g({2, 2, 2}, {});
    InferenceConfig c = converged_mf();
    TableVec mu1 = testutil::run_mu(g, testutil::random_theta(g, rng), c);
    TableVec mu2 = testutil::run_mu(g, testutil::random_theta(g, rng), c);
    Labeling target{0, 1, 0};
    double diff = univ_logistic(g, mu1, target).value - univ_logistic(g, mu2, target).value;
    double kl_diff = 0;  // KL(q || mu) with deterministic q is -log mu(target)
    for (int i = 0; i < 3; ++i)
        kl_diff += -std::log(mu1.u(i, target[i])) + std::log(mu2.u(i, target[i]));
    CHECK(diff == doctest::Approx(kl_diff).epsilon(1e-10));
}

TEST_CASE("surrogate likelihood") {
    Rng rng(34);
    SUBCASE("exact on factorized models under mean field") {
        Graph g({2, 3}, {});
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target{1, 2};
        ThetaLoss r = surrogate_likelihood(g, theta, target, converged_mf());
        ExactResult bf = brute_force(g, theta);
        double exact_nll = bf.log_z - dot(theta, sufficient_stats(g, target));
        CHECK(r.value == doctest::Approx(exact_nll).epsilon(1e-9));
        TableVec expect = bf.marginals;
        expect.axpy(-1.0, sufficient_stats(g, target));
        CHECK(testutil::max_abs_diff(r.dl_dtheta, expect) < 1e-9);
    }
    SUBCASE("gradient is mu minus sufficient stats") {
        Graph g = Graph::grid(2, 2, 2);
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target = testutil::random_labeling(g, rng);
        ThetaLoss r = surrogate_likelihood(g, theta, target, converged_trw());
        TableVec mu = testutil::run_mu(g, theta, converged_trw());
        mu.axpy(-1.0, sufficient_stats(g, target));
        CHECK(testutil::max_abs_diff(r.dl_dtheta, mu) == 0.0);
    }
    SUBCASE("TRW surrogate upper-bounds the exact negative log-likelihood") {
        Graph g = Graph::grid(2, 2, 2);
        InferenceConfig c = converged_trw();
        c.rho = grid_rho(2, 2).rho;
        for (int trial = 0; trial < 5; ++trial) {
            TableVec theta = testutil::random_theta(g, rng);
            Labeling target = testutil::random_labeling(g, rng);
            ThetaLoss r = surrogate_likelihood(g, theta, target, c);
            double exact_nll =
                brute_force(g, theta).log_z - dot(theta, sufficient_stats(g, target));
            CHECK(r.value >= exact_nll - 1e-8);
        }
    }
    SUBCASE("hidden nodes rejected") {
        Graph g({2, 2}, {{0, 1}});
        CHECK_THROWS(surrogate_likelihood(g, TableVec(g), {0, HIDDEN}, converged_trw()));
    }
}

TEST_CASE("exact tree likelihood matches brute force") {
    Rng rng(35);
    Graph g = Graph::chain(5, 2);
    TableVec theta = testutil::random_theta(g, rng);
    Labeling target = testutil::random_labeling(g, rng);
    ThetaLoss r = exact_likelihood(g, theta, target);
    ExactResult bf = brute_force(g, theta);
    CHECK(r.value ==
          doctest::Approx(bf.log_z - dot(theta, sufficient_stats(g, target)))
              .epsilon(1e-9));
    TableVec expect = bf.marginals;
    expect.axpy(-1.0, sufficient_stats(g, target));
    CHECK(testutil::max_abs_diff(r.dl_dtheta, expect) < 1e-9);
}

TEST_CASE("truncated em") {
    Rng rng(36);
    SUBCASE("fully observed reduces to the surrogate likelihood") {
        Graph g = Graph::chain(3, 2);
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target = testutil::random_labeling(g, rng);
        ThetaLoss em = truncated_em(g, theta, target, converged_trw());
        ThetaLoss sl = surrogate_likelihood(g, theta, target, converged_trw());
        CHECK(em.value == doctest::Approx(sl.value).epsilon(1e-9));
        CHECK(testutil::max_abs_diff(em.dl_dtheta, sl.dl_dtheta) < 1e-9);
    }
    SUBCASE("nothing observed gives zero") {
        Graph g = Graph::chain(3, 2);
        TableVec theta = testutil::random_theta(g, rng);
        ThetaLoss em = truncated_em(g, theta, {HIDDEN, HIDDEN, HIDDEN}, converged_trw());
        CHECK(em.value == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(em.dl_dtheta.inf_norm() < 1e-9);
    }
    SUBCASE("hidden middle node matches the brute-force EM loss") {
        Graph g = Graph::chain(3, 2);
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target{1, HIDDEN, 0};
        ThetaLoss em = truncated_em(g, theta, target, converged_trw());
        // A(theta) - log sum_h exp(theta . f(x_obs, h))
        double a = brute_force(g, theta).log_z;
        double m = -1e300;
        std::vector<double> scores;
        for (int h = 0; h < 2; ++h) {
            Labeling full = target;
            full[1] = h;
            scores.push_back(dot(theta, sufficient_stats(g, full)));
            m = std::max(m, scores.back());
        }
        double z = 0;
        for (double s : scores) z += std::exp(s - m);
        CHECK(em.value == doctest::Approx(a - (m + std::log(z))).epsilon(1e-6));
    }
}

TEST_CASE("pseudolikelihood") {
    Rng rng(37);
    SUBCASE("isolated nodes give the exact likelihood") {
        Graph g({2, 3}, {});
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target{1, 0};
        ThetaLoss r = pseudolikelihood(g, theta, target);
        double exact_nll =
            brute_force(g, theta).log_z - dot(theta, sufficient_stats(g, target));
        CHECK(r.value == doctest::Approx(exact_nll).epsilon(1e-10));
    }
    SUBCASE("single edge conditionals by enumeration") {
        Graph g({2, 2}, {{0, 1}});
        TableVec theta = testutil::random_theta(g, rng);
        Labeling t{1, 0};
        ThetaLoss r = pseudolikelihood(g, theta, t);
        auto score = [&](int a, int b) {
            return theta.u(0, a) + theta.u(1, b) + theta.e(0, a, b);
        };
        double p1 = std::exp(score(1, 0)) / (std::exp(score(0, 0)) + std::exp(score(1, 0)));
        double p2 = std::exp(score(1, 0)) / (std::exp(score(1, 0)) + std::exp(score(1, 1)));
        CHECK(r.value == doctest::Approx(-std::log(p1) - std::log(p2)).epsilon(1e-10));
    }
    SUBCASE("gradient matches finite differences") {
        Graph g = Graph::grid(2, 3, 2);
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target = testutil::random_labeling(g, rng);
        ThetaLoss r = pseudolikelihood(g, theta, target);
        check_theta_fd(g, theta, r.dl_dtheta,
                       [&](const TableVec& th) {
                           return pseudolikelihood(g, th, target).value;
                       },
                       1e-6);
    }
}

TEST_CASE("piecewise likelihood") {
    Rng rng(38);
    SUBCASE("isolated nodes give the exact likelihood") {
        Graph g({3, 2}, {});
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target{2, 0};
        ThetaLoss r = piecewise(g, theta, target);
        double exact_nll =
            brute_force(g, theta).log_z - dot(theta, sufficient_stats(g, target));
        CHECK(r.value == doctest::Approx(exact_nll).epsilon(1e-10));
    }
    SUBCASE("piecewise partition function upper-bounds the exact one") {
        Graph g = Graph::grid(2, 2, 2);
        for (int trial = 0; trial < 5; ++trial) {
            TableVec theta = testutil::random_theta(g, rng);
            CHECK(piecewise_log_z(g, theta) >= brute_force(g, theta).log_z - 1e-9);
        }
    }
    SUBCASE("gradient matches finite differences") {
        Graph g = Graph::grid(2, 2, 2);
        TableVec theta = testutil::random_theta(g, rng);
        Labeling target = testutil::random_labeling(g, rng);
        ThetaLoss r = piecewise(g, theta, target);
        check_theta_fd(g, theta, r.dl_dtheta,
                       [&](const TableVec& th) { return piecewise(g, th, target).value; },
                       1e-6);
    }
}

TEST_CASE("loss spec parsing") {
    CHECK(parse_loss_spec("univ_logistic").kind == LossKind::UnivLogistic);
    CHECK(parse_loss_spec("surrogate_likelihood").kind == LossKind::SurrogateLikelihood);
    LossSpec s = parse_loss_spec("smooth_class:alpha=50");
    CHECK(s.kind == LossKind::SmoothClass);
    CHECK(s.alpha == 50.0);
    CHECK(parse_loss_spec("smooth_class").alpha == 15.0);
    CHECK_THROWS(parse_loss_spec("nonsense"));
    CHECK_THROWS(parse_loss_spec("smooth_class:beta=2"));
}

}  // TEST_SUITE
