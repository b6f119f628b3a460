#include "bdt/ocp.hpp"

#include "bdt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bdt {

std::string electrode_name(Electrode e) {
    return e == Electrode::Negative ? "negative" : "positive";
}

OcpTable::OcpTable(std::vector<double> x, std::vector<double> u, Electrode tag)
    : x_(std::move(x)), u_(std::move(u)), tag_(tag) {
    if (x_.size() < 2 || x_.size() != u_.size())
        throw InputError("ocp: need >= 2 matching breakpoints for " + electrode_name(tag_));
    for (size_t i = 1; i < x_.size(); ++i) {
        if (!(x_[i] > x_[i - 1]))
            throw InputError("ocp: breakpoints must be strictly increasing in x (" + electrode_name(tag_) + ")");
        if (!(u_[i] < u_[i - 1]))
            throw InputError("ocp: potential must be strictly decreasing (" + electrode_name(tag_) + ")");
    }

    // Fritsch-Carlson tangents: preserves monotonicity of the data.
    const size_t n = x_.size();
    std::vector<double> delta(n - 1);
    for (size_t i = 0; i + 1 < n; ++i)
        delta[i] = (u_[i + 1] - u_[i]) / (x_[i + 1] - x_[i]);
    d_.assign(n, 0.0);
    d_[0] = delta[0];
    d_[n - 1] = delta[n - 2];
    for (size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            d_[i] = 0.0;
        } else {
            double w1 = 2.0 * (x_[i + 1] - x_[i]) + (x_[i] - x_[i - 1]);
            double w2 = (x_[i + 1] - x_[i]) + 2.0 * (x_[i] - x_[i - 1]);
            d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
}

double OcpTable::eval(double s) const {
    if (!(s >= 0.0 && s <= 1.0)) {
        std::ostringstream msg;
        msg << "ocp: stoichiometry " << s << " out of [0,1] for " << electrode_name(tag_) << " electrode";
        throw InputError(msg.str());
    }
    double lo = x_.front(), hi = x_.back();
    double sc = std::clamp(s, lo, hi); // flat extrapolation outside the table span
    auto it = std::upper_bound(x_.begin(), x_.end(), sc);
    size_t i = std::min<size_t>(std::max<ptrdiff_t>(it - x_.begin() - 1, 0), x_.size() - 2);
    double h = x_[i + 1] - x_[i];
    double t = (sc - x_[i]) / h;
    double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    double h10 = t * (1 - t) * (1 - t);
    double h01 = t * t * (3 - 2 * t);
    double h11 = t * t * (t - 1);
    return h00 * u_[i] + h10 * h * d_[i] + h01 * u_[i + 1] + h11 * h * d_[i + 1];
}

double OcpTable::slope(double s) const {
    if (!(s >= 0.0 && s <= 1.0))
        throw InputError("ocp: stoichiometry out of [0,1] for " + electrode_name(tag_));
    double sc = std::clamp(s, x_.front(), x_.back());
    auto it = std::upper_bound(x_.begin(), x_.end(), sc);
    size_t i = std::min<size_t>(std::max<ptrdiff_t>(it - x_.begin() - 1, 0), x_.size() - 2);
    double h = x_[i + 1] - x_[i];
    double t = (sc - x_[i]) / h;
    double g00 = (6 * t * t - 6 * t) / h;
    double g10 = 3 * t * t - 4 * t + 1;
    double g01 = (6 * t - 6 * t * t) / h;
    double g11 = 3 * t * t - 2 * t;
    return g00 * u_[i] + g10 * d_[i] + g01 * u_[i + 1] + g11 * d_[i + 1];
}

OcpTable OcpTable::default_table(Electrode e) {
    if (e == Electrode::Negative) {
        // Graphite-like anode: steep rise at low occupancy, flat plateau above.
        return OcpTable(
            {0.00, 0.02, 0.05, 0.10, 0.20, 0.35, 0.50, 0.70, 0.90, 1.00},
            {1.20, 0.70, 0.40, 0.28, 0.22, 0.160, 0.130, 0.100, 0.085, 0.080},
            Electrode::Negative);
    }
    // NMC-like cathode: gentle slope with a steep tail near full lithiation.
    return OcpTable(
        {0.00, 0.20, 0.30, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.90, 0.93, 0.95, 0.97, 1.00},
        {4.50, 4.38, 4.30, 4.25, 4.10, 3.95, 3.82, 3.70, 3.58, 3.45, 3.25, 3.00, 2.60, 2.00},
        Electrode::Positive);
}

} // namespace bdt
