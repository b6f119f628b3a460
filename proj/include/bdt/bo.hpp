#pragma once

#include "bdt/gp.hpp"
#include "bdt/params.hpp"

#include <string>
#include <vector>

namespace bdt {

enum class Scale { Linear, Log };

struct SpaceEntry {
    std::string name; // CellParameters field name
    double lower = 0.0, upper = 0.0;
    Scale scale = Scale::Linear;
};

struct ParameterSpace {
    std::vector<SpaceEntry> entries;

    int dim() const { return static_cast<int>(entries.size()); }
    void validate() const;

    // Overlays a unit-cube point onto base parameters.
    CellParameters decode(const Eigen::VectorXd& x_unit, const CellParameters& base) const;
    // Unit-cube coordinates of the given parameters (clipped to [0,1]).
    Eigen::VectorXd encode(const CellParameters& p) const;

    // The default 15-parameter calibration space: bounds at +-rel around the
    // given parameter values, log scale for diffusivities and rate constants.
    static ParameterSpace around(const CellParameters& center, double rel = 0.3);
    static ParameterSpace load(const std::string& path);
    void save(const std::string& path) const;
};

struct RateMape {
    double rate_c = 0.0;
    double mape_v = 0.0;
    double mape_t = 0.0;
};

struct EvaluationRecord {
    Eigen::VectorXd x_unit;
    CellParameters theta;
    double J = 0.0;
    std::vector<RateMape> per_rate;
    bool failed = false;
};

// One reference discharge series (temperature stored in kelvin).
struct RateReference {
    double rate_c = 0.0;
    std::vector<double> t, V, T_K;
};

// CC discharge from SOC=1 at the given C-rate until 2.5 V; dt = 1 s.
RateReference simulate_rate(const CellConfig& cfg, double rate_c, double T_amb = 298.15);

// Combined voltage/temperature MAPE of theta against the references.
// Simulation failures yield the 1e3 penalty and a failed record.
EvaluationRecord objective(const CellParameters& theta, const CellConfig& base_cfg,
                           const std::vector<RateReference>& reference);

// Latin hypercube sample of n0 points in [0,1]^d.
Eigen::MatrixXd lhs_init(int d, int n0, unsigned long long seed);

// Minimization expected improvement.
double expected_improvement(double mean, double variance, double best);

// Argmax of EI over 4096 seeded uniform candidates plus 256 Gaussian
// perturbations (sigma 0.05, clipped) of the incumbent; lowest-index tie-break.
Eigen::VectorXd propose_next(const GpSurrogate& g, double best_J_std,
                             const Eigen::VectorXd& incumbent, unsigned long long seed);

struct CalibrationResult {
    EvaluationRecord best;
    std::vector<EvaluationRecord> history;
};

// LHS init (n0 = 2d) then fit -> propose -> evaluate until the budget.
CalibrationResult calibrate(const CellConfig& base_cfg, const ParameterSpace& space,
                            const std::vector<RateReference>& reference, int budget,
                            unsigned long long seed);

void write_history_csv(const std::string& path, const ParameterSpace& space,
                       const std::vector<EvaluationRecord>& history,
                       const std::string& comment = "");

} // namespace bdt
