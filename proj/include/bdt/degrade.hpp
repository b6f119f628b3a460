#pragma once

#include "bdt/csv.hpp"
#include "bdt/params.hpp"
#include "bdt/protocol.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace bdt {

// End of life: capacity fade or window collapse makes the cell unusable.
class EndOfLifeError : public std::runtime_error {
public:
    explicit EndOfLifeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegradationParams {
    double beta_sqrt = 0.012;   // Ah per sqrt(cycle), SEI-like fade
    double beta_lin = 0.00025;  // Ah per cycle
    double gamma_r = 0.0005;    // fractional R0 growth per cycle
    double Ea_age = 2.0e4;      // J/mol, thermal acceleration of beta_sqrt
    double sigma_noise = 0.15;  // lognormal cell-to-cell spread
};

struct AgedCell {
    CellParameters base;
    int n = 0;
    double soh = 1.0;
    CellParameters params_at_n;
};

// SOH(n) = 1 - (beta_sqrt * arrh(T_mean) * sqrt(n) + beta_lin * n) / Q_nom
double soh_of_cycle(int n, const DegradationParams& d, double T_mean, double Q_nom,
                    double T_ref = 298.15);

// Narrows the stoichiometry windows by the lost cyclable lithium and grows R0.
AgedCell apply_degradation(const CellParameters& base, int n, const DegradationParams& d,
                           double T_mean = 298.15);

struct FleetManifest {
    std::vector<std::string> telemetry_files;
    std::string labels_file;
    unsigned long long seed = 0;
    std::string config_hash;
    std::string path; // manifest JSON location
};

// Synthesizes a labeled fleet: per cell one telemetry CSV, plus one labels CSV
// and a manifest JSON in out_dir. Deterministic per seed.
FleetManifest generate_fleet(const CellConfig& cfg, const DegradationParams& d,
                             const std::vector<Family>& families, int cells_per_family,
                             int cycles, unsigned long long seed, const std::string& out_dir);

} // namespace bdt
