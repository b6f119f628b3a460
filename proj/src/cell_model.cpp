#include "bdt/cell_model.hpp"

#include "bdt/constants.hpp"
#include "bdt/errors.hpp"

#include <cmath>
#include <sstream>

namespace bdt {

double arrhenius_scale(double value_ref, double Ea, double T, double T_ref) {
    if (!(T > 0.0 && T_ref > 0.0)) throw InputError("arrhenius: temperatures must be positive");
    return value_ref * std::exp(-(Ea / kGasConst) * (1.0 / T - 1.0 / T_ref));
}

ParticleState diffusion_step(const ParticleState& p, double flux_surface, double D_eff,
                             double R_part, double dt) {
    const int n = static_cast<int>(p.c.size());
    if (n < 3) throw InputError("diffusion_step: need at least 3 radial shells");
    if (!(dt > 0.0)) throw InputError("diffusion_step: dt must be positive");

    const double dr = R_part / n;
    // Shell volumes and face areas (factor 4*pi cancels throughout but is kept
    // out for conditioning; volumes and areas below are divided by 4*pi).
    std::vector<double> vol(n), face(n + 1);
    for (int i = 0; i <= n; ++i) {
        double r = i * dr;
        face[i] = r * r;
    }
    for (int i = 0; i < n; ++i) {
        double r0 = i * dr, r1 = (i + 1) * dr;
        vol[i] = (r1 * r1 * r1 - r0 * r0 * r0) / 3.0;
    }

    // Assemble (I - dt*M) c' = c + dt*b, M the FV diffusion operator.
    std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), rhs(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double west = (i > 0) ? D_eff * face[i] / dr : 0.0;
        double east = (i < n - 1) ? D_eff * face[i + 1] / dr : 0.0;
        a[i] = -dt * west / vol[i];
        c[i] = -dt * east / vol[i];
        b[i] = 1.0 + dt * (west + east) / vol[i];
        rhs[i] = p.c[i];
    }
    rhs[n - 1] -= dt * flux_surface * face[n] / vol[n - 1];

    // Thomas algorithm.
    std::vector<double> cp(n), dp(n);
    double denom = b[0];
    if (denom == 0.0) throw NumericalError("diffusion_step: singular tridiagonal system");
    cp[0] = c[0] / denom;
    dp[0] = rhs[0] / denom;
    for (int i = 1; i < n; ++i) {
        denom = b[i] - a[i] * cp[i - 1];
        if (denom == 0.0) throw NumericalError("diffusion_step: singular tridiagonal system");
        cp[i] = c[i] / denom;
        dp[i] = (rhs[i] - a[i] * dp[i - 1]) / denom;
    }
    ParticleState out;
    out.tag = p.tag;
    out.c.assign(n, 0.0);
    out.c[n - 1] = dp[n - 1];
    for (int i = n - 2; i >= 0; --i) out.c[i] = dp[i] - cp[i] * out.c[i + 1];
    for (double v : out.c)
        if (!std::isfinite(v)) throw NumericalError("diffusion_step: non-finite concentration");
    return out;
}

double mean_concentration(const ParticleState& p, double R_part) {
    const int n = static_cast<int>(p.c.size());
    const double dr = R_part / n;
    double sum = 0.0, vtot = 0.0;
    for (int i = 0; i < n; ++i) {
        double r0 = i * dr, r1 = (i + 1) * dr;
        double v = r1 * r1 * r1 - r0 * r0 * r0;
        sum += p.c[i] * v;
        vtot += v;
    }
    return sum / vtot;
}

double surface_concentration(const ParticleState& p, double flux_surface, double D_eff,
                             double R_part) {
    const int n = static_cast<int>(p.c.size());
    const double dr = R_part / n;
    // Gradient at the surface follows from the imposed flux: dc/dr = -q/D.
    return p.c[n - 1] - flux_surface * (dr / 2.0) / D_eff;
}

double exchange_current(double k_eff, double c_e, double c_surf, double c_max) {
    if (!(c_surf > 0.0 && c_surf < c_max)) {
        std::ostringstream msg;
        msg << "surface stoichiometry exhausted: c_surf=" << c_surf << " of c_max=" << c_max;
        throw SaturationError(msg.str());
    }
    return kFaraday * k_eff * std::sqrt(c_e) * std::sqrt(c_surf) * std::sqrt(c_max - c_surf);
}

double overpotential(double i_area, double j0, double T) {
    if (!(j0 > 0.0)) throw NumericalError("overpotential: exchange current must be positive");
    return (2.0 * kGasConst * T / kFaraday) * std::asinh(i_area / (2.0 * j0));
}

double thermal_step(double T, double Q_gen, double T_amb, const CellParameters& p, double dt) {
    double Tn = T + dt * (Q_gen - p.hA * (T - T_amb)) / p.C_th;
    if (!std::isfinite(Tn)) throw NumericalError("thermal_step: non-finite temperature");
    return Tn;
}

namespace {

struct ElectrodeEval {
    double x_surf;
    double U;
    double eta;
};

ElectrodeEval eval_electrode(const ParticleState& ps, const OcpTable& ocp, double c_max,
                             double k_eff, double D_eff, double R_part, double flux,
                             double i_area, double c_e, double T) {
    double c_surf = surface_concentration(ps, flux, D_eff, R_part);
    double j0 = exchange_current(k_eff, c_e, c_surf, c_max);
    ElectrodeEval ev;
    ev.x_surf = c_surf / c_max;
    if (!(ev.x_surf >= 0.0 && ev.x_surf <= 1.0))
        throw SaturationError("surface stoichiometry outside [0,1] on " +
                              electrode_name(ps.tag) + " electrode");
    ev.U = ocp.eval(ev.x_surf);
    ev.eta = overpotential(i_area, j0, T);
    return ev;
}

} // namespace

StepOutput terminal_voltage(const CellState& state, double I, const CellConfig& cfg) {
    const CellParameters& p = cfg.params;
    double D_n = arrhenius_scale(p.D_n, p.Ea_D, state.T, p.T_ref);
    double D_p = arrhenius_scale(p.D_p, p.Ea_D, state.T, p.T_ref);
    double k_n = arrhenius_scale(p.k_n, p.Ea_k, state.T, p.T_ref);
    double k_p = arrhenius_scale(p.k_p, p.Ea_k, state.T, p.T_ref);

    // Interfacial current densities; positive = deintercalation.
    double i_n = I / (p.area_n() * p.L_n * p.A_cell);
    double i_p = -I / (p.area_p() * p.L_p * p.A_cell);
    double q_n = I / (p.surf_n() * kFaraday);  // outward molar flux, anode
    double q_p = -I / (p.surf_p() * kFaraday); // inward on discharge

    ElectrodeEval en = eval_electrode(state.neg, cfg.ocp_n, p.c_max_n, k_n, D_n, p.R_part_n,
                                      q_n, i_n, p.c_e, state.T);
    ElectrodeEval ep = eval_electrode(state.pos, cfg.ocp_p, p.c_max_p, k_p, D_p, p.R_part_p,
                                      q_p, i_p, p.c_e, state.T);

    StepOutput out;
    out.ocv = ep.U - en.U;
    out.eta_n = en.eta;
    out.eta_p = ep.eta;
    out.V = ep.U - en.U + ep.eta - en.eta - I * p.R0;
    out.Q_gen = I * (out.ocv - out.V);
    out.T = state.T;
    if (!std::isfinite(out.V)) throw NumericalError("terminal_voltage: non-finite voltage");
    return out;
}

std::pair<CellState, StepOutput> step(const CellState& state, double I, double T_amb,
                                      const CellConfig& cfg, double dt) {
    const CellParameters& p = cfg.params;
    double D_n = arrhenius_scale(p.D_n, p.Ea_D, state.T, p.T_ref);
    double D_p = arrhenius_scale(p.D_p, p.Ea_D, state.T, p.T_ref);

    double q_n = I / (p.surf_n() * kFaraday);
    double q_p = -I / (p.surf_p() * kFaraday);

    CellState next = state;
    next.neg = diffusion_step(state.neg, q_n, D_n, p.R_part_n, dt);
    next.pos = diffusion_step(state.pos, q_p, D_p, p.R_part_p, dt);

    StepOutput out = terminal_voltage(next, I, cfg);
    next.T = thermal_step(state.T, out.Q_gen, T_amb, p, dt);
    if (next.T < 200.0 || next.T > 400.0)
        throw NumericalError("cell temperature left the valid [200,400] K band");
    out.T = next.T;
    next.t = state.t + dt;
    next.cumulative_throughput = state.cumulative_throughput + std::abs(I) * dt / 3600.0;
    return {next, out};
}

CellState init_state(const CellConfig& cfg, double soc, double T, int n_shells) {
    if (!(soc >= 0.0 && soc <= 1.0)) throw InputError("init_state: SOC must lie in [0,1]");
    const CellParameters& p = cfg.params;
    double x_n = p.x_n_min + soc * (p.x_n_max - p.x_n_min);
    double x_p = p.x_p_max - soc * (p.x_p_max - p.x_p_min);
    CellState s;
    s.neg.tag = Electrode::Negative;
    s.pos.tag = Electrode::Positive;
    s.neg.c.assign(n_shells, x_n * p.c_max_n);
    s.pos.c.assign(n_shells, x_p * p.c_max_p);
    s.T = T;
    return s;
}

} // namespace bdt
