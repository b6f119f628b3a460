#include "bdt/metrics.hpp"

#include "bdt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bdt {

double mape(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.empty() || y.size() != yhat.size())
        throw InputError("mape: series must be non-empty and equally sized");
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) throw InputError("mape: reference value is zero");
        acc += std::abs(y[i] - yhat[i]) / std::abs(y[i]);
    }
    return 100.0 * acc / static_cast<double>(y.size());
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw InputError("spearman: need two equally sized series with >= 2 points");
    std::vector<double> ra = ranks(a), rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) { ma += ra[i]; mb += rb[i]; }
    ma /= ra.size();
    mb /= rb.size();
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

double median(std::vector<double> v) {
    if (v.empty()) throw InputError("median: empty input");
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double norm_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

} // namespace bdt
