#include "bdt/gp.hpp"

#include "bdt/errors.hpp"

#include <cmath>

namespace bdt {

double GpSurrogate::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double ell) {
    double r = (a - b).norm() / ell;
    double s = std::sqrt(5.0) * r;
    return (1.0 + s + 5.0 * r * r / 3.0) * std::exp(-s);
}

GpSurrogate GpSurrogate::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const int n = static_cast<int>(X.rows());
    if (n < 2 || y.size() != n) throw InputError("gp_fit: need >= 2 matching observations");

    GpSurrogate g;
    g.X_ = X;
    g.y_mean_ = y.mean();
    double var = (y.array() - g.y_mean_).square().sum() / n;
    g.y_std_ = var > 0.0 ? std::sqrt(var) : 1.0;
    Eigen::VectorXd ys = (y.array() - g.y_mean_) / g.y_std_;

    static const double grid[] = {0.05, 0.1, 0.2, 0.4, 0.8};
    double best_lml = -std::numeric_limits<double>::infinity();

    for (double ell : grid) {
        Eigen::MatrixXd K(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j)
                K(i, j) = K(j, i) = kernel(X.row(i), X.row(j), ell);

        double nugget = 1e-6;
        Eigen::LLT<Eigen::MatrixXd> llt;
        for (;;) {
            Eigen::MatrixXd Kn = K + nugget * Eigen::MatrixXd::Identity(n, n);
            llt.compute(Kn);
            if (llt.info() == Eigen::Success) break;
            nugget *= 10.0;
            if (nugget > 1e-2)
                throw NumericalError("gp_fit: kernel matrix not positive definite at nugget 1e-2");
        }
        Eigen::VectorXd alpha = llt.solve(ys);
        double logdet = 0.0;
        for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
        double lml = -0.5 * ys.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);
        if (lml > best_lml) {
            best_lml = lml;
            g.ell_ = ell;
            g.nugget_ = nugget;
            g.chol_ = llt;
            g.alpha_ = alpha;
            g.lml_ = lml;
        }
    }
    return g;
}

std::pair<double, double> GpSurrogate::predict(const Eigen::VectorXd& x) const {
    const int n = static_cast<int>(X_.rows());
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i) k(i) = kernel(X_.row(i), x, ell_);
    double mean = k.dot(alpha_);
    Eigen::VectorXd v = chol_.matrixL().solve(k);
    double var = 1.0 + nugget_ - v.squaredNorm();
    if (var < -1e-12) throw NumericalError("gp_predict: negative posterior variance");
    return {mean, std::max(var, 0.0)};
}

} // namespace bdt
