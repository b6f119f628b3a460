#pragma once

#include "bdt/ocp.hpp"

#include <string>

namespace bdt {

// Calibratable physical description of one cell. SI units throughout.
struct CellParameters {
    // Solid-phase transport and kinetics
    double D_n = 3.0e-14;      // m^2/s
    double D_p = 5.0e-14;      // m^2/s
    double k_n = 2.0e-11;      // m^2.5 mol^-0.5 s^-1
    double k_p = 2.5e-11;      // m^2.5 mol^-0.5 s^-1
    // Geometry
    double R_part_n = 5.0e-6;  // m
    double R_part_p = 4.0e-6;  // m
    double eps_n = 0.58;       // -
    double eps_p = 0.50;       // -
    double L_n = 70.0e-6;      // m
    double L_p = 75.0e-6;      // m
    double A_cell = 0.0694;    // m^2
    // Thermodynamics
    double c_max_n = 31000.0;  // mol/m^3
    double c_max_p = 48000.0;  // mol/m^3
    double x_n_min = 0.03, x_n_max = 0.90;
    double x_p_min = 0.34, x_p_max = 0.95;
    // Lumped electrical/thermal
    double R0 = 0.025;         // ohm
    double C_th = 40.0;        // J/K
    double hA = 0.30;          // W/K
    double Ea_D = 3.0e4;       // J/mol
    double Ea_k = 2.5e4;       // J/mol
    // Fixed environment
    double c_e = 1000.0;       // mol/m^3
    double T_ref = 298.15;     // K
    double Q_nom = 2.0;        // Ah

    bool entropic_heat = false; // reserved; default model omits I*T*dU/dT

    void validate() const; // throws InputError on violated invariants

    // Specific interfacial area a = 3*eps/R_part and total particle surface S = a*L*A.
    double area_n() const { return 3.0 * eps_n / R_part_n; }
    double area_p() const { return 3.0 * eps_p / R_part_p; }
    double surf_n() const { return area_n() * L_n * A_cell; }
    double surf_p() const { return area_p() * L_p * A_cell; }
};

struct CellConfig {
    CellParameters params;
    OcpTable ocp_n = OcpTable::default_table(Electrode::Negative);
    OcpTable ocp_p = OcpTable::default_table(Electrode::Positive);

    static CellConfig defaults() { return CellConfig{}; }
    static CellConfig load(const std::string& path);
    void save(const std::string& path, const std::string& comment = "") const;
};

// Access to calibratable fields by name; returns nullptr for unknown names.
double* field_ptr(CellParameters& p, const std::string& name);

// FNV-1a hash of a file's bytes; used to stamp outputs with their config provenance.
unsigned long long hash_file(const std::string& path);
unsigned long long hash_bytes(const std::string& bytes);

} // namespace bdt
