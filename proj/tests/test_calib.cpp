#include <doctest.h>

#include "bdt/bo.hpp"
#include "bdt/errors.hpp"
#include "bdt/gp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

using namespace bdt;

TEST_CASE("latin hypercube stratification") {
    const int d = 3, n0 = 6;
    Eigen::MatrixXd X = lhs_init(d, n0, 17);
    for (int j = 0; j < d; ++j) {
        std::vector<bool> hit(n0, false);
        for (int i = 0; i < n0; ++i) {
            CHECK(X(i, j) >= 0.0);
            CHECK(X(i, j) < 1.0);
            int stratum = static_cast<int>(X(i, j) * n0);
            CHECK_FALSE(hit[stratum]); // exactly one sample per stratum
            hit[stratum] = true;
        }
    }
    Eigen::MatrixXd X2 = lhs_init(d, n0, 17);
    CHECK((X - X2).norm() == 0.0); // deterministic
    CHECK_THROWS_AS(lhs_init(5, 3, 1), InputError);
}

TEST_CASE("matern-5/2 kernel values") {
    Eigen::VectorXd a(1), b(1);
    a << 0.3;
    b << 0.3;
    CHECK(GpSurrogate::kernel(a, b, 0.2) == doctest::Approx(1.0).epsilon(1e-15));
    b << 0.5; // distance 0.2 at lengthscale 0.2: frozen oracle
    CHECK(GpSurrogate::kernel(a, b, 0.2) ==
          doctest::Approx(0.5239941088318203).epsilon(1e-12));
}

TEST_CASE("gp posterior interpolates and reverts to the prior") {
    Eigen::MatrixXd X(5, 1);
    Eigen::VectorXd y(5);
    X << 0.05, 0.25, 0.45, 0.65, 0.85;
    for (int i = 0; i < 5; ++i) y(i) = std::sin(8.0 * X(i, 0));
    GpSurrogate g = GpSurrogate::fit(X, y);

    for (int i = 0; i < 5; ++i) {
        auto [mean, var] = g.predict(X.row(i).transpose());
        CHECK(g.destandardize(mean) == doctest::Approx(y(i)).epsilon(1e-3));
        CHECK(var >= 0.0);
        CHECK(var < 1e-3); // nearly no uncertainty at a training point
    }
    Eigen::VectorXd far(1);
    far << 50.0;
    auto [mean_far, var_far] = g.predict(far);
    CHECK(mean_far == doctest::Approx(0.0).epsilon(1e-6)); // standardized prior mean
    CHECK(var_far == doctest::Approx(1.0 + g.nugget()).epsilon(1e-9));

    CHECK_THROWS_AS(GpSurrogate::fit(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)),
                    InputError);
}

TEST_CASE("expected improvement spot values") {
    // sigma = 0 collapses to the hard improvement
    CHECK(expected_improvement(1.0, 0.0, 1.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(expected_improvement(2.0, 0.0, 1.7) == 0.0);
    // at the incumbent with unit variance: EI = phi(0), frozen oracle
    CHECK(expected_improvement(1.0, 1.0, 1.0) ==
          doctest::Approx(0.3989422804014327).epsilon(1e-12));
    // symmetric closed form: delta*Phi(u) + sigma*phi(u)
    double delta = 0.3, sigma = 0.5, u = delta / sigma;
    double ref = delta * 0.5 * std::erfc(-u / std::sqrt(2.0)) +
                 sigma * 0.3989422804014327 * std::exp(-0.5 * u * u);
    CHECK(expected_improvement(0.7, sigma * sigma, 1.0) == doctest::Approx(ref).epsilon(1e-12));
    CHECK_THROWS_AS(expected_improvement(0.0, -1.0, 0.0), InputError);
}

TEST_CASE("propose_next is deterministic and in bounds") {
    Eigen::MatrixXd X(6, 2);
    Eigen::VectorXd y(6);
    X << 0.1, 0.2, 0.3, 0.8, 0.5, 0.5, 0.7, 0.1, 0.9, 0.9, 0.2, 0.6;
    y << 3.0, 2.0, 0.5, 1.0, 2.5, 1.8;
    GpSurrogate g = GpSurrogate::fit(X, y);
    Eigen::VectorXd incumbent = X.row(2).transpose();
    Eigen::VectorXd a = propose_next(g, g.standardize(0.5), incumbent, 5);
    Eigen::VectorXd b = propose_next(g, g.standardize(0.5), incumbent, 5);
    CHECK((a - b).norm() == 0.0);
    for (int j = 0; j < 2; ++j) {
        CHECK(a(j) >= 0.0);
        CHECK(a(j) <= 1.0);
    }
}

TEST_CASE("parameter space encode/decode round trip") {
    CellParameters base;
    ParameterSpace space = ParameterSpace::around(base, 0.3);
    CHECK(space.dim() == 15);

    Eigen::VectorXd mid = Eigen::VectorXd::Constant(15, 0.5);
    CellParameters p = space.decode(mid, base);
    // linear entries land on the center; log entries on the geometric mean
    CHECK(p.R0 == doctest::Approx(base.R0).epsilon(1e-12));
    CHECK(p.D_n == doctest::Approx(std::sqrt(0.7 * 1.3) * base.D_n).epsilon(1e-12));
    Eigen::VectorXd back = space.encode(p);
    CHECK((back - mid).norm() < 1e-12);

    // decoding clips to the box
    CellParameters hi = space.decode(Eigen::VectorXd::Constant(15, 2.0), base);
    CHECK(hi.R0 == doctest::Approx(1.3 * base.R0).epsilon(1e-12));

    ParameterSpace bad;
    bad.entries.push_back({"R0", 1.0, 0.5, Scale::Linear});
    CHECK_THROWS_AS(bad.validate(), InputError);
    ParameterSpace unknown;
    unknown.entries.push_back({"flux_capacitance", 0.0, 1.0, Scale::Linear});
    CHECK_THROWS_AS(unknown.validate(), InputError);

    const char* path = "test_calib_space.toml";
    space.save(path);
    ParameterSpace loaded = ParameterSpace::load(path);
    REQUIRE(loaded.dim() == space.dim());
    for (int i = 0; i < space.dim(); ++i) {
        CHECK(loaded.entries[i].name == space.entries[i].name);
        CHECK(loaded.entries[i].lower == doctest::Approx(space.entries[i].lower).epsilon(1e-9));
        CHECK(loaded.entries[i].scale == space.entries[i].scale);
    }
    std::remove(path);
}

TEST_CASE("objective is zero at the truth and penalizes failures") {
    CellConfig cfg = CellConfig::defaults();
    std::vector<RateReference> refs = {simulate_rate(cfg, 1.0)};
    EvaluationRecord at_truth = objective(cfg.params, cfg, refs);
    CHECK_FALSE(at_truth.failed);
    CHECK(at_truth.J == doctest::Approx(0.0).epsilon(1e-12));
    REQUIRE(at_truth.per_rate.size() == 1);
    CHECK(at_truth.per_rate[0].mape_v == doctest::Approx(0.0));

    CellParameters off = cfg.params;
    off.R0 *= 1.2;
    EvaluationRecord worse = objective(off, cfg, refs);
    CHECK(worse.J > at_truth.J);

    CellParameters broken = cfg.params;
    broken.D_n = -1.0; // invalid: validation fails inside the objective
    EvaluationRecord failed = objective(broken, cfg, refs);
    CHECK(failed.failed);
    CHECK(failed.J == 1e3);
}

TEST_CASE("small calibration run recovers a perturbed resistance") {
    CellConfig cfg = CellConfig::defaults();
    std::vector<RateReference> refs = {simulate_rate(cfg, 1.0)};

    ParameterSpace space;
    space.entries.push_back({"R0", cfg.params.R0 * 0.7, cfg.params.R0 * 1.3, Scale::Linear});
    space.entries.push_back({"hA", cfg.params.hA * 0.7, cfg.params.hA * 1.3, Scale::Linear});

    CalibrationResult res = calibrate(cfg, space, refs, 12, 42);
    CHECK(res.history.size() == 12);
    double running_best = 1e18;
    for (const EvaluationRecord& r : res.history) running_best = std::min(running_best, r.J);
    CHECK(res.best.J == doctest::Approx(running_best));
    CHECK(res.best.theta.R0 == doctest::Approx(cfg.params.R0).epsilon(0.05));
    CHECK(res.best.per_rate[0].mape_v < 0.5);

    CHECK_THROWS_AS(calibrate(cfg, space, refs, 3, 42), InputError); // budget < 2d

    const char* path = "test_calib_history.csv";
    write_history_csv(path, space, res.history, "seed=42 config=cafe");
    std::ifstream f(path);
    std::string header, comment;
    std::getline(f, comment);
    std::getline(f, header);
    CHECK(comment.rfind("# ", 0) == 0);
    CHECK(header.rfind("iter,J,best_J", 0) == 0);
    std::remove(path);
}
