#include <doctest.h>

#include "bdt/dagmm.hpp"
#include "bdt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

using namespace bdt;

namespace {

Mlp identity_net(int d) {
    Mlp net;
    DenseLayer l;
    l.W = Eigen::MatrixXd::Identity(d, d);
    l.b = Eigen::VectorXd::Zero(d);
    l.act = Act::Linear;
    net.layers.push_back(l);
    return net;
}

std::vector<FeatureRow> blob_rows(int n, unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<FeatureRow> rows;
    for (int i = 0; i < n; ++i) {
        FeatureRow r;
        r.cell_id = "A_" + std::to_string(i % 7);
        r.cycle = i;
        double a = gauss(rng), b = gauss(rng);
        for (int j = 0; j < kNumFeatures; ++j)
            // features driven by two latent factors plus small noise
            r.f[j] = (j % 2 ? a : b) * (1.0 + 0.05 * j) + 0.1 * gauss(rng);
        rows.push_back(r);
    }
    return rows;
}

} // namespace

TEST_CASE("latent vector on perfect and antipodal reconstructions") {
    DagmmModel m;
    m.encoder = identity_net(2);
    m.decoder = identity_net(2);

    Eigen::VectorXd x(2);
    x << 3.0, 4.0;
    Eigen::VectorXd z = build_z(m, x);
    REQUIRE(z.size() == 4);
    CHECK(z(0) == doctest::Approx(3.0));
    CHECK(z(1) == doctest::Approx(4.0));
    CHECK(z(2) == doctest::Approx(0.0)); // zero reconstruction distance
    CHECK(z(3) == doctest::Approx(1.0)); // cosine similarity

    m.decoder.layers[0].W = -Eigen::MatrixXd::Identity(2, 2);
    z = build_z(m, x);
    CHECK(z(2) == doctest::Approx(2.0)); // ||x - (-x)|| / ||x||
    CHECK(z(3) == doctest::Approx(-1.0));
}

TEST_CASE("gmm statistics match a brute-force computation") {
    const int N = 50, K = 3, D = 4;
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    Eigen::MatrixXd Z(N, D), gamma(N, K);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < D; ++j) Z(i, j) = gauss(rng);
        double s = 0.0;
        for (int k = 0; k < K; ++k) { gamma(i, k) = unif(rng); s += gamma(i, k); }
        gamma.row(i) /= s;
    }
    const double eps = 1e-6;
    GmmStats s = gmm_update(Z, gamma, eps);
    CHECK(s.phi.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < K; ++k) {
        double G = gamma.col(k).sum();
        CHECK(s.phi(k) == doctest::Approx(G / N).epsilon(1e-12));
        for (int j = 0; j < D; ++j) {
            double mu = 0.0;
            for (int i = 0; i < N; ++i) mu += gamma(i, k) * Z(i, j);
            mu /= G;
            CHECK(s.mu(k, j) == doctest::Approx(mu).epsilon(1e-10));
        }
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) {
                double cov = 0.0;
                for (int i = 0; i < N; ++i)
                    cov += gamma(i, k) * (Z(i, a) - s.mu(k, a)) * (Z(i, b) - s.mu(k, b));
                cov /= G;
                if (a == b) cov += eps;
                CHECK(s.sigma[k](a, b) == doctest::Approx(cov).epsilon(1e-10).scale(1e-10));
            }
    }
}

TEST_CASE("energy against closed forms and direct summation") {
    // K = 1 standard normal in 4-D: E(0) = 2 log(2 pi), frozen oracle
    GmmStats s;
    s.phi = Eigen::VectorXd::Ones(1);
    s.mu = Eigen::MatrixXd::Zero(1, 4);
    s.sigma = {Eigen::MatrixXd::Identity(4, 4)};
    CHECK(energy(s, Eigen::VectorXd::Zero(4)).value ==
          doctest::Approx(3.6757541328186907).epsilon(1e-12));
    Eigen::VectorXd z(4);
    z << 1.0, -2.0, 0.5, 0.0;
    CHECK(energy(s, z).value ==
          doctest::Approx(3.6757541328186907 + 0.5 * z.squaredNorm()).epsilon(1e-12));
    CHECK(energy(s, z).gamma(0) == doctest::Approx(1.0));

    // K = 3 with dense SPD covariances vs direct density summation
    std::mt19937_64 rng(77);
    std::normal_distribution<double> gauss(0.0, 1.0);
    GmmStats m;
    m.phi.resize(3);
    m.phi << 0.5, 0.3, 0.2;
    m.mu = Eigen::MatrixXd::NullaryExpr(3, 4, [&]() { return gauss(rng); });
    for (int k = 0; k < 3; ++k) {
        Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(4, 4, [&]() { return gauss(rng); });
        m.sigma.push_back(A * A.transpose() + Eigen::MatrixXd::Identity(4, 4));
    }
    double direct = 0.0;
    for (int k = 0; k < 3; ++k) {
        Eigen::VectorXd d = z - m.mu.row(k).transpose();
        double det = m.sigma[k].determinant();
        double quad = d.dot(m.sigma[k].inverse() * d);
        direct += m.phi(k) * std::exp(-0.5 * quad) /
                  std::sqrt(std::pow(2.0 * M_PI, 4) * det);
    }
    CHECK(energy(m, z).value == doctest::Approx(-std::log(direct)).epsilon(1e-10));
    CHECK(energy(m, z).gamma.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("joint batch loss gradients pass finite differences") {
    const int d = 3;
    DagmmConfig cfg;
    cfg.K = 2;
    cfg.lambda1 = 0.1;
    cfg.lambda2 = 0.005;

    DagmmModel m;
    m.cfg = cfg;
    m.encoder = Mlp::init({d, 4, 2}, Act::Linear, 101);
    m.decoder = Mlp::init({2, 4, d}, Act::Linear, 102);
    m.estnet = Mlp::init({4, 5, cfg.K}, Act::Linear, 103);

    std::mt19937_64 rng(55);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Eigen::VectorXd> X;
    for (int i = 0; i < 8; ++i)
        X.push_back(Eigen::VectorXd::NullaryExpr(d, [&]() { return gauss(rng); }));

    LayerGrads ge = m.encoder.zero_grads(), gd = m.decoder.zero_grads(),
               gs = m.estnet.zero_grads();
    double loss0 = dagmm_batch_loss(m, X, cfg, &ge, &gd, &gs);
    CHECK(std::isfinite(loss0));
    CHECK_THROWS_AS(dagmm_batch_loss(m, X, cfg, &ge, nullptr, nullptr), InputError);

    const double h = 1e-6;
    auto fd_check = [&](Mlp& net, const LayerGrads& analytic) {
        for (size_t l = 0; l < net.layers.size(); ++l) {
            for (int i = 0; i < net.layers[l].W.rows(); ++i)
                for (int j = 0; j < net.layers[l].W.cols(); ++j) {
                    double orig = net.layers[l].W(i, j);
                    net.layers[l].W(i, j) = orig + h;
                    double up = dagmm_batch_loss(m, X, cfg, nullptr, nullptr, nullptr);
                    net.layers[l].W(i, j) = orig - h;
                    double dn = dagmm_batch_loss(m, X, cfg, nullptr, nullptr, nullptr);
                    net.layers[l].W(i, j) = orig;
                    CHECK(analytic[l].W(i, j) ==
                          doctest::Approx((up - dn) / (2.0 * h)).epsilon(1e-4).scale(1e-4));
                }
            for (int i = 0; i < net.layers[l].b.size(); ++i) {
                double orig = net.layers[l].b(i);
                net.layers[l].b(i) = orig + h;
                double up = dagmm_batch_loss(m, X, cfg, nullptr, nullptr, nullptr);
                net.layers[l].b(i) = orig - h;
                double dn = dagmm_batch_loss(m, X, cfg, nullptr, nullptr, nullptr);
                net.layers[l].b(i) = orig;
                CHECK(analytic[l].b(i) ==
                      doctest::Approx((up - dn) / (2.0 * h)).epsilon(1e-4).scale(1e-4));
            }
        }
    };
    fd_check(m.encoder, ge);
    fd_check(m.decoder, gd);
    fd_check(m.estnet, gs);
}

TEST_CASE("training produces a usable anomaly scorer") {
    std::vector<FeatureRow> rows = blob_rows(600, 9);
    DagmmConfig cfg;
    cfg.epochs = 100;
    auto [model, losses] = train_dagmm(rows, cfg, 7);

    CHECK(losses.size() == 100);
    for (double l : losses) CHECK(std::isfinite(l));
    CHECK(losses.back() < losses.front());
    CHECK(model.stats.phi.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(model.train_energy_sorted.size() == rows.size());
    CHECK(std::is_sorted(model.train_energy_sorted.begin(), model.train_energy_sorted.end()));

    // in-distribution rows score lower than a gross outlier
    std::vector<UncertaintyRow> scores = score_dagmm(model, rows);
    double med_in = 0.0;
    {
        std::vector<double> es;
        for (const UncertaintyRow& u : scores) es.push_back(u.energy);
        std::sort(es.begin(), es.end());
        med_in = es[es.size() / 2];
    }
    // break the two-factor correlation structure: shift a single feature far
    // off the training manifold
    FeatureRow outlier = rows[0];
    outlier.f[0] += 25.0;
    double e_out = score_dagmm(model, {outlier})[0].energy;
    CHECK(e_out > med_in);
    // the fitted mixture keeps a heavy tail of rare-but-valid training draws,
    // so a gross outlier must clear the bulk, not the extreme tail
    CHECK(score_dagmm(model, {outlier})[0].energy_percentile >= 90.0);
    for (const UncertaintyRow& u : scores) {
        CHECK(u.energy_percentile >= 0.0);
        CHECK(u.energy_percentile <= 100.0);
    }

    // deterministic retraining
    auto [model2, losses2] = train_dagmm(rows, cfg, 7);
    CHECK(losses2.back() == doctest::Approx(losses.back()).epsilon(1e-15));

    // save/load round trip preserves scores
    const char* path = "test_dagmm_model.txt";
    model.save(path, "seed=7 config=dead");
    DagmmModel back = DagmmModel::load(path);
    CHECK(score_dagmm(back, {rows[5]})[0].energy ==
          doctest::Approx(scores[5].energy).epsilon(1e-12));
    std::remove(path);

    CHECK_THROWS_AS(train_dagmm(blob_rows(100, 1), cfg, 1), InputError);
}
