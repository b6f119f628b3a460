#include "bdt/protocol.hpp"

#include "bdt/constants.hpp"
#include "bdt/errors.hpp"
#include "bdt/tomlmini.hpp"

#include <cmath>
#include <sstream>

namespace bdt {

namespace {

constexpr long kMaxStepIterations = 2000000; // guard against runaway steps

void emit(const RecordSink& sink, const std::string& cell_id, int cycle, double t, double I,
          const StepOutput& out) {
    if (sink) sink(TimeSeriesRecord{cell_id, cycle, t, I, out.V, out.T - kCelsiusOffset});
}

struct CvResult {
    CellState state;
    StepOutput out;
    double I;
};

// One CV step: finds I such that the step lands on v_target (secant, 1 mV tol).
CvResult cv_step(const CellState& state, double v_target, double I_prev, double T_amb,
                 const CellConfig& cfg, double dt) {
    double I0 = I_prev;
    double I1 = I_prev * 0.9;
    auto residual = [&](double I) { return step(state, I, T_amb, cfg, dt).second.V - v_target; };
    auto commit = [&](double I) {
        auto [s, out] = step(state, I, T_amb, cfg, dt);
        return CvResult{s, out, I};
    };
    double f0 = residual(I0);
    if (std::abs(f0) < 1e-3) return commit(I0);
    double f1 = residual(I1);
    for (int it = 0; it < 50; ++it) {
        if (std::abs(f1) < 1e-3) return commit(I1);
        double denom = f1 - f0;
        if (denom == 0.0) break;
        double I2 = I1 - f1 * (I1 - I0) / denom;
        I0 = I1; f0 = f1;
        I1 = I2; f1 = residual(I1);
    }
    throw NumericalError("cccv_charge: CV regulation failed to converge within 50 iterations");
}

} // namespace

Family family_from_tag(const std::string& tag) {
    if (tag == "C2") return Family::C2;
    if (tag == "C3") return Family::C3;
    if (tag == "R2_5" || tag == "R2.5") return Family::R2_5;
    if (tag == "R3") return Family::R3;
    if (tag == "RW") return Family::RW;
    if (tag == "SAT") return Family::SAT;
    std::ostringstream msg;
    msg << "unknown family tag '" << tag << "'; valid tags:";
    for (const std::string& t : all_family_tags()) msg << " " << t;
    throw InputError(msg.str());
}

std::string family_tag(Family f) {
    switch (f) {
        case Family::C2: return "C2";
        case Family::C3: return "C3";
        case Family::R2_5: return "R2_5";
        case Family::R3: return "R3";
        case Family::RW: return "RW";
        case Family::SAT: return "SAT";
    }
    return "?";
}

std::vector<std::string> all_family_tags() {
    return {"C2", "C3", "R2_5", "R3", "RW", "SAT"};
}

CycleSchedule CycleSchedule::for_family(Family f, int repeat, double T_amb) {
    CycleSchedule s;
    s.repeat_count = repeat;
    s.T_amb = T_amb;
    s.family = f;
    auto cccv = [](double rate, double taper) {
        ProtocolStep p;
        p.kind = StepKind::CccvCharge;
        p.c_rate = rate;
        p.v_limit = 4.2;
        p.taper_a = taper;
        return p;
    };
    auto rest = [](double secs) {
        ProtocolStep p;
        p.kind = StepKind::Rest;
        p.time_s = secs;
        return p;
    };
    auto cc_dis = [](double rate, double time_cap = 0.0) {
        ProtocolStep p;
        p.kind = StepKind::CcDischarge;
        p.c_rate = rate;
        p.v_limit = 2.5;
        p.time_s = time_cap;
        return p;
    };
    auto rand_dis = [](double cmin, double cmax, double dwell) {
        ProtocolStep p;
        p.kind = StepKind::RandomCc;
        p.v_limit = 2.5;
        p.rng_c_min = cmin;
        p.rng_c_max = cmax;
        p.rng_dwell_s = dwell;
        return p;
    };
    switch (f) {
        case Family::C2:
            s.steps = {cccv(1.0, 0.1), rest(600), cc_dis(2.0), rest(600)};
            break;
        case Family::C3:
            s.steps = {cccv(1.0, 0.1), rest(600), cc_dis(3.0), rest(600)};
            break;
        case Family::R2_5:
            // One rate draw per cycle (dwell longer than any discharge).
            s.steps = {cccv(1.0, 0.1), rest(600), rand_dis(2.0, 3.0, 1e9), rest(600)};
            break;
        case Family::R3:
            s.steps = {cccv(1.0, 0.1), rest(600), rand_dis(2.5, 3.5, 1e9), rest(600)};
            break;
        case Family::RW:
            s.steps = {cccv(1.0, 0.1), rest(600), rand_dis(0.5, 3.0, 60.0), rest(600)};
            break;
        case Family::SAT:
            // Shallow 30% DoD orbit pattern with long eclipse/sunlight rests.
            s.steps = {cccv(0.5, 0.1), rest(1800), cc_dis(0.5, 2160.0), rest(1800)};
            break;
    }
    return s;
}

CycleSchedule CycleSchedule::load(const std::string& path) {
    toml::Document doc = toml::parse_file(path);
    CycleSchedule s;
    s.repeat_count = static_cast<int>(doc.root.num_or("schedule.repeat_count", 1));
    s.T_amb = doc.root.num_or("schedule.T_amb_k", 298.15);
    std::string fam = doc.root.str_or("schedule.family", "");
    if (!fam.empty()) s.family = family_from_tag(fam);

    auto it = doc.table_arrays.find("schedule.steps");
    if (it != doc.table_arrays.end()) {
        for (const toml::Table& t : it->second) {
            ProtocolStep p;
            std::string kind = t.str("kind");
            if (kind == "cc_discharge") p.kind = StepKind::CcDischarge;
            else if (kind == "cc_charge") p.kind = StepKind::CcCharge;
            else if (kind == "cccv_charge") p.kind = StepKind::CccvCharge;
            else if (kind == "rest") p.kind = StepKind::Rest;
            else if (kind == "random_cc") p.kind = StepKind::RandomCc;
            else throw InputError("protocol: unknown step kind '" + kind + "'");
            p.c_rate = t.num_or("c_rate", 0.0);
            p.v_limit = t.num_or("v_limit", p.kind == StepKind::CcDischarge || p.kind == StepKind::RandomCc ? 2.5 : 4.2);
            p.time_s = t.num_or("time_s", 0.0);
            p.taper_a = t.num_or("taper_a", 0.1);
            p.rng_c_min = t.num_or("c_min", 0.0);
            p.rng_c_max = t.num_or("c_max", 0.0);
            p.rng_dwell_s = t.num_or("dwell_s", 60.0);
            if (p.c_rate < 0.0 || p.rng_c_min < 0.0 || p.rng_c_max < p.rng_c_min)
                throw InputError("protocol: step magnitudes must be non-negative");
            if (p.v_limit != 0.0 && (p.v_limit < 2.0 || p.v_limit > 4.4))
                throw InputError("protocol: voltage cutoffs must lie within [2.0, 4.4] V");
            s.steps.push_back(p);
        }
    } else if (s.family) {
        s.steps = for_family(*s.family, s.repeat_count, s.T_amb).steps;
    }
    if (s.steps.empty()) throw InputError("protocol: schedule has no steps");
    return s;
}

CellState run_step(const CellState& state0, const ProtocolStep& pstep, const CellConfig& cfg,
                   double T_amb, double dt, std::mt19937_64& rng, const std::string& cell_id,
                   int cycle, double& t_cycle, const RecordSink& sink) {
    const double Q = cfg.params.Q_nom;
    CellState s = state0;
    double elapsed = 0.0;
    long iters = 0;

    auto advance = [&](double I) -> std::pair<bool, StepOutput> {
        try {
            auto [next, out] = step(s, I, T_amb, cfg, dt);
            s = next;
            t_cycle += dt;
            elapsed += dt;
            emit(sink, cell_id, cycle, t_cycle, I, out);
            return {true, out};
        } catch (const SaturationError&) {
            return {false, StepOutput{}}; // electrode exhausted: treat as cutoff
        }
    };

    switch (pstep.kind) {
        case StepKind::Rest: {
            long n = std::lround(pstep.time_s / dt);
            for (long i = 0; i < n; ++i)
                if (!advance(0.0).first) break;
            break;
        }
        case StepKind::CcDischarge: {
            double I = pstep.c_rate * Q;
            while (++iters < kMaxStepIterations) {
                auto [ok, out] = advance(I);
                if (!ok) break;
                if (out.V <= pstep.v_limit) break;
                if (pstep.time_s > 0.0 && elapsed >= pstep.time_s) break;
            }
            break;
        }
        case StepKind::CcCharge: {
            double I = -pstep.c_rate * Q;
            while (++iters < kMaxStepIterations) {
                auto [ok, out] = advance(I);
                if (!ok) break;
                if (out.V >= pstep.v_limit) break;
                if (pstep.time_s > 0.0 && elapsed >= pstep.time_s) break;
            }
            break;
        }
        case StepKind::CccvCharge: {
            double I = -pstep.c_rate * Q;
            bool cv = false;
            while (++iters < kMaxStepIterations) {
                if (!cv) {
                    auto [ok, out] = advance(I);
                    if (!ok) break;
                    if (out.V >= pstep.v_limit) cv = true;
                } else {
                    CvResult r;
                    try {
                        r = cv_step(s, pstep.v_limit, I, T_amb, cfg, dt);
                    } catch (const SaturationError&) {
                        break;
                    }
                    s = r.state;
                    t_cycle += dt;
                    elapsed += dt;
                    I = r.I;
                    emit(sink, cell_id, cycle, t_cycle, r.I, r.out);
                    if (std::abs(r.I) <= pstep.taper_a) break;
                }
            }
            break;
        }
        case StepKind::RandomCc: {
            std::uniform_real_distribution<double> dist(pstep.rng_c_min, pstep.rng_c_max);
            double dwell_left = 0.0;
            double I = 0.0;
            while (++iters < kMaxStepIterations) {
                if (dwell_left <= 0.0) {
                    I = dist(rng) * Q;
                    dwell_left = pstep.rng_dwell_s;
                }
                auto [ok, out] = advance(I);
                if (!ok) break;
                dwell_left -= dt;
                if (out.V <= pstep.v_limit) break;
            }
            break;
        }
    }
    if (iters >= kMaxStepIterations)
        throw NumericalError("protocol step exceeded the iteration guard");
    return s;
}

CellState run_schedule(const CellConfig& cfg, const CycleSchedule& schedule,
                       unsigned long long seed, const std::string& cell_id,
                       const RecordSink& sink, double dt) {
    if (schedule.steps.empty()) throw InputError("run_schedule: empty schedule");
    std::mt19937_64 rng(seed);
    CellState s = init_state(cfg, 0.2, schedule.T_amb);
    for (int cycle = 0; cycle < schedule.repeat_count; ++cycle) {
        double t_cycle = 0.0;
        for (const ProtocolStep& p : schedule.steps)
            s = run_step(s, p, cfg, schedule.T_amb, dt, rng, cell_id, cycle, t_cycle, sink);
    }
    return s;
}

} // namespace bdt
