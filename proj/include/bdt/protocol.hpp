#pragma once

#include "bdt/cell_model.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bdt {

enum class StepKind { CcDischarge, CcCharge, CccvCharge, Rest, RandomCc };

struct ProtocolStep {
    StepKind kind = StepKind::Rest;
    double c_rate = 0.0;   // magnitude as C-rate (I = c_rate * Q_nom)
    double v_limit = 0.0;  // cutoff voltage for charge/discharge steps, V
    double time_s = 0.0;   // duration (rest) or optional time cap (discharge); 0 = none
    double taper_a = 0.0;  // CV taper current, A (cccv only)
    double rng_c_min = 0.0, rng_c_max = 0.0; // C-rate bounds for random draws
    double rng_dwell_s = 60.0;               // dwell per random draw; large value = one draw
};

enum class Family { C2, C3, R2_5, R3, RW, SAT };

Family family_from_tag(const std::string& tag); // throws InputError on unknown tag
std::string family_tag(Family f);
std::vector<std::string> all_family_tags();

struct CycleSchedule {
    std::vector<ProtocolStep> steps;
    int repeat_count = 1;
    double T_amb = 298.15; // K
    std::optional<Family> family;

    static CycleSchedule for_family(Family f, int repeat, double T_amb = 298.15);
    static CycleSchedule load(const std::string& path);
};

struct TimeSeriesRecord {
    std::string cell_id;
    int cycle = 0;
    double t = 0.0; // s, cycle-relative
    double I = 0.0; // A, positive = discharge
    double V = 0.0; // V
    double T = 0.0; // degC
};

using RecordSink = std::function<void(const TimeSeriesRecord&)>;

// Runs one protocol step to its termination condition, appending every
// timestep to the sink. Returns the end state. Saturation inside the solver
// terminates the step like a voltage cutoff.
CellState run_step(const CellState& state, const ProtocolStep& step, const CellConfig& cfg,
                   double T_amb, double dt, std::mt19937_64& rng, const std::string& cell_id,
                   int cycle, double& t_cycle, const RecordSink& sink);

// Runs repeat_count cycles of the schedule from a fresh low-SOC state.
// Deterministic per (seed, cfg, schedule).
CellState run_schedule(const CellConfig& cfg, const CycleSchedule& schedule,
                       unsigned long long seed, const std::string& cell_id,
                       const RecordSink& sink, double dt = 1.0);

} // namespace bdt
