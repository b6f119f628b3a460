#pragma once

#include <Eigen/Dense>

namespace bdt {

// Matern-5/2 Gaussian-process surrogate on the unit hypercube. Targets are
// standardized internally; predictions are in standardized units.
class GpSurrogate {
public:
    // Lengthscale picked from {0.05, 0.1, 0.2, 0.4, 0.8} by max log marginal
    // likelihood; sigma_f^2 = 1, nugget 1e-6 (escalated x10 on factorization
    // failure, up to 1e-2).
    static GpSurrogate fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

    // Posterior (mean, variance) at x; variance clamped at zero from below.
    std::pair<double, double> predict(const Eigen::VectorXd& x) const;

    double standardize(double y_raw) const { return (y_raw - y_mean_) / y_std_; }
    double destandardize(double y_std) const { return y_std * y_std_ + y_mean_; }

    double lengthscale() const { return ell_; }
    double nugget() const { return nugget_; }
    double log_marginal_likelihood() const { return lml_; }

    static double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double ell);

private:
    Eigen::MatrixXd X_;
    Eigen::VectorXd alpha_;  // K^-1 y_std
    Eigen::LLT<Eigen::MatrixXd> chol_;
    double ell_ = 0.2;
    double nugget_ = 1e-6;
    double y_mean_ = 0.0, y_std_ = 1.0;
    double lml_ = 0.0;
};

} // namespace bdt
