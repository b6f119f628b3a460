#pragma once

#include <vector>

namespace bdt {

// (100/N) * sum |y - yhat| / |y|
double mape(const std::vector<double>& y, const std::vector<double>& yhat);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

double median(std::vector<double> v);

// Standard normal pdf/cdf.
double norm_pdf(double x);
double norm_cdf(double x);

} // namespace bdt
