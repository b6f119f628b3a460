#pragma once

#include "bdt/params.hpp"

#include <vector>

namespace bdt {

// Radial solid-phase concentration profile of one representative particle.
struct ParticleState {
    std::vector<double> c; // mol/m^3, one entry per finite-volume shell (center -> surface)
    Electrode tag = Electrode::Negative;
};

struct CellState {
    ParticleState neg;
    ParticleState pos;
    double T = 298.15;                 // K
    double t = 0.0;                    // s
    double cumulative_throughput = 0.0; // Ah
};

struct StepOutput {
    double V = 0.0;     // terminal voltage, V
    double T = 0.0;     // cell temperature after the step, K
    double Q_gen = 0.0; // heat generation, W
    double eta_n = 0.0; // V
    double eta_p = 0.0; // V
    double ocv = 0.0;   // V
};

inline constexpr int kDefaultShells = 20;

// value_ref * exp(-(Ea/R) * (1/T - 1/T_ref))
double arrhenius_scale(double value_ref, double Ea, double T, double T_ref);

// One implicit (backward Euler) step of spherical Fickian diffusion on a
// finite-volume mesh. flux_surface is the outward molar flux (mol m^-2 s^-1)
// at r = R_part; zero-flux at the center. Discretely conservative.
ParticleState diffusion_step(const ParticleState& p, double flux_surface, double D_eff,
                             double R_part, double dt);

// Volume-weighted mean concentration over the shells.
double mean_concentration(const ParticleState& p, double R_part);

// Surface concentration estimate: outer-shell value corrected by the flux gradient.
double surface_concentration(const ParticleState& p, double flux_surface, double D_eff,
                             double R_part);

// Butler-Volmer exchange current density, A/m^2. Throws SaturationError when
// the surface is exhausted (c_surf at 0 or c_max).
double exchange_current(double k_eff, double c_e, double c_surf, double c_max);

// Symmetric Butler-Volmer inverse: eta = (2RT/F) asinh(i / (2 j0)).
double overpotential(double i_area, double j0, double T);

// Explicit Euler lumped thermal update.
double thermal_step(double T, double Q_gen, double T_amb, const CellParameters& p, double dt);

// Voltage/heat at the present state for applied current I (I > 0 = discharge).
StepOutput terminal_voltage(const CellState& state, double I, const CellConfig& cfg);

// Full coupled step: Arrhenius scaling, particle diffusion, voltage, thermal
// update, clock/throughput advance.
std::pair<CellState, StepOutput> step(const CellState& state, double I, double T_amb,
                                      const CellConfig& cfg, double dt);

// Uniform-concentration state at the given SOC (1 = fully charged) and temperature.
CellState init_state(const CellConfig& cfg, double soc, double T, int n_shells = kDefaultShells);

} // namespace bdt
