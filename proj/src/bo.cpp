#include "bdt/bo.hpp"

#include "bdt/cell_model.hpp"
#include "bdt/errors.hpp"
#include "bdt/metrics.hpp"
#include "bdt/tomlmini.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace bdt {

void ParameterSpace::validate() const {
    if (entries.empty()) throw InputError("parameter space is empty");
    CellParameters probe;
    for (const SpaceEntry& e : entries) {
        if (!(e.lower < e.upper))
            throw InputError("space entry '" + e.name + "': lower must be < upper");
        if (e.scale == Scale::Log && !(e.lower > 0.0))
            throw InputError("space entry '" + e.name + "': log scale needs positive bounds");
        if (!field_ptr(probe, e.name))
            throw InputError("space entry '" + e.name + "' is not a cell parameter");
    }
}

CellParameters ParameterSpace::decode(const Eigen::VectorXd& x_unit,
                                      const CellParameters& base) const {
    if (x_unit.size() != dim()) throw InputError("decode: dimension mismatch");
    CellParameters p = base;
    for (int i = 0; i < dim(); ++i) {
        const SpaceEntry& e = entries[i];
        double u = std::clamp(x_unit(i), 0.0, 1.0);
        double v = e.scale == Scale::Log
                       ? std::exp(std::log(e.lower) + u * (std::log(e.upper) - std::log(e.lower)))
                       : e.lower + u * (e.upper - e.lower);
        *field_ptr(p, e.name) = v;
    }
    return p;
}

Eigen::VectorXd ParameterSpace::encode(const CellParameters& p) const {
    Eigen::VectorXd x(dim());
    CellParameters copy = p;
    for (int i = 0; i < dim(); ++i) {
        const SpaceEntry& e = entries[i];
        double v = *field_ptr(copy, e.name);
        double u = e.scale == Scale::Log
                       ? (std::log(v) - std::log(e.lower)) / (std::log(e.upper) - std::log(e.lower))
                       : (v - e.lower) / (e.upper - e.lower);
        x(i) = std::clamp(u, 0.0, 1.0);
    }
    return x;
}

ParameterSpace ParameterSpace::around(const CellParameters& center, double rel) {
    static const char* kLogScaled[] = {"D_n", "D_p", "k_n", "k_p"};
    static const char* kNames[] = {"D_n", "D_p", "k_n", "k_p", "R0", "eps_n", "eps_p",
                                   "L_n", "L_p", "R_part_n", "R_part_p", "hA", "C_th",
                                   "Ea_D", "Ea_k"};
    ParameterSpace s;
    CellParameters c = center;
    for (const char* name : kNames) {
        SpaceEntry e;
        e.name = name;
        double v = *field_ptr(c, name);
        e.lower = v * (1.0 - rel);
        e.upper = v * (1.0 + rel);
        e.scale = std::find_if(std::begin(kLogScaled), std::end(kLogScaled),
                               [&](const char* n) { return name == std::string(n); }) !=
                          std::end(kLogScaled)
                      ? Scale::Log
                      : Scale::Linear;
        s.entries.push_back(e);
    }
    s.validate();
    return s;
}

ParameterSpace ParameterSpace::load(const std::string& path) {
    toml::Document doc = toml::parse_file(path);
    auto it = doc.table_arrays.find("space.entries");
    if (it == doc.table_arrays.end()) throw InputError("space file: missing [[space.entries]]");
    ParameterSpace s;
    for (const toml::Table& t : it->second) {
        SpaceEntry e;
        e.name = t.str("name");
        e.lower = t.num("lower");
        e.upper = t.num("upper");
        std::string sc = t.str_or("scale", "linear");
        if (sc == "log") e.scale = Scale::Log;
        else if (sc == "linear") e.scale = Scale::Linear;
        else throw InputError("space file: scale must be 'linear' or 'log'");
        s.entries.push_back(e);
    }
    s.validate();
    return s;
}

void ParameterSpace::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write space file: " + path);
    f.precision(12);
    for (const SpaceEntry& e : entries) {
        f << "[[space.entries]]\n"
          << "name = \"" << e.name << "\"\n"
          << "lower = " << e.lower << "\n"
          << "upper = " << e.upper << "\n"
          << "scale = \"" << (e.scale == Scale::Log ? "log" : "linear") << "\"\n\n";
    }
}

RateReference simulate_rate(const CellConfig& cfg, double rate_c, double T_amb) {
    RateReference ref;
    ref.rate_c = rate_c;
    CellState s = init_state(cfg, 1.0, T_amb);
    double I = rate_c * cfg.params.Q_nom;
    const double dt = 1.0;
    for (long i = 0; i < 2000000; ++i) {
        StepOutput out;
        try {
            auto r = step(s, I, T_amb, cfg, dt);
            s = r.first;
            out = r.second;
        } catch (const SaturationError&) {
            break;
        }
        ref.t.push_back(s.t);
        ref.V.push_back(out.V);
        ref.T_K.push_back(out.T);
        if (out.V <= 2.5) break;
    }
    if (ref.t.empty()) throw NumericalError("simulate_rate: no samples produced");
    return ref;
}

namespace {

// Linear resampling with flat extrapolation beyond the simulated span.
double resample(const std::vector<double>& t, const std::vector<double>& y, double tq) {
    if (tq <= t.front()) return y.front();
    if (tq >= t.back()) return y.back();
    auto it = std::lower_bound(t.begin(), t.end(), tq);
    size_t i = static_cast<size_t>(it - t.begin());
    double w = (tq - t[i - 1]) / (t[i] - t[i - 1]);
    return y[i - 1] + w * (y[i] - y[i - 1]);
}

} // namespace

EvaluationRecord objective(const CellParameters& theta, const CellConfig& base_cfg,
                           const std::vector<RateReference>& reference) {
    if (reference.empty()) throw InputError("objective: no reference series");
    EvaluationRecord rec;
    rec.theta = theta;
    CellConfig cfg = base_cfg;
    cfg.params = theta;
    try {
        theta.validate();
        double J_acc = 0.0;
        for (const RateReference& ref : reference) {
            RateReference sim = simulate_rate(cfg, ref.rate_c);
            std::vector<double> v_hat(ref.t.size()), t_hat(ref.t.size());
            for (size_t i = 0; i < ref.t.size(); ++i) {
                v_hat[i] = resample(sim.t, sim.V, ref.t[i]);
                t_hat[i] = resample(sim.t, sim.T_K, ref.t[i]);
            }
            RateMape m;
            m.rate_c = ref.rate_c;
            m.mape_v = mape(ref.V, v_hat);
            m.mape_t = mape(ref.T_K, t_hat);
            rec.per_rate.push_back(m);
            J_acc += m.mape_v + m.mape_t;
        }
        rec.J = J_acc / static_cast<double>(reference.size());
    } catch (const std::exception&) {
        rec.J = 1e3;
        rec.failed = true;
        rec.per_rate.clear();
    }
    return rec;
}

Eigen::MatrixXd lhs_init(int d, int n0, unsigned long long seed) {
    if (n0 < d + 1) throw InputError("lhs_init: need n0 >= d + 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd X(n0, d);
    std::vector<int> strata(n0);
    for (int j = 0; j < d; ++j) {
        std::iota(strata.begin(), strata.end(), 0);
        std::shuffle(strata.begin(), strata.end(), rng);
        for (int i = 0; i < n0; ++i)
            X(i, j) = (strata[i] + unif(rng)) / static_cast<double>(n0);
    }
    return X;
}

double expected_improvement(double mean, double variance, double best) {
    if (variance < 0.0) throw InputError("expected_improvement: negative variance");
    double delta = best - mean;
    double sigma = std::sqrt(variance);
    if (sigma == 0.0) return std::max(delta, 0.0);
    double u = delta / sigma;
    return delta * norm_cdf(u) + sigma * norm_pdf(u);
}

Eigen::VectorXd propose_next(const GpSurrogate& g, double best_J_std,
                             const Eigen::VectorXd& incumbent, unsigned long long seed) {
    const int d = static_cast<int>(incumbent.size());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 0.05);

    Eigen::VectorXd best_x = incumbent;
    double best_ei = -1.0;
    auto consider = [&](const Eigen::VectorXd& x) {
        auto [mean, var] = g.predict(x);
        double ei = expected_improvement(mean, var, best_J_std);
        if (ei > best_ei) { // strict: earlier candidates win ties
            best_ei = ei;
            best_x = x;
        }
    };

    Eigen::VectorXd x(d);
    for (int c = 0; c < 4096; ++c) {
        for (int j = 0; j < d; ++j) x(j) = unif(rng);
        consider(x);
    }
    for (int c = 0; c < 256; ++c) {
        for (int j = 0; j < d; ++j) x(j) = std::clamp(incumbent(j) + gauss(rng), 0.0, 1.0);
        consider(x);
    }
    return best_x;
}

CalibrationResult calibrate(const CellConfig& base_cfg, const ParameterSpace& space,
                            const std::vector<RateReference>& reference, int budget,
                            unsigned long long seed) {
    space.validate();
    const int d = space.dim();
    const int n0 = 2 * d;
    if (budget < n0)
        throw InputError("calibrate: budget must be >= 2d = " + std::to_string(n0));

    CalibrationResult res;
    Eigen::MatrixXd X = lhs_init(d, n0, seed);
    Eigen::VectorXd y(budget);
    Eigen::MatrixXd Xall(budget, d);

    int best_i = -1;
    auto evaluate = [&](const Eigen::VectorXd& x, int i) {
        EvaluationRecord rec = objective(space.decode(x, base_cfg.params), base_cfg, reference);
        rec.x_unit = x;
        Xall.row(i) = x.transpose();
        y(i) = rec.J;
        res.history.push_back(rec);
        if (best_i < 0 || rec.J < y(best_i)) best_i = i;
    };

    for (int i = 0; i < n0; ++i) evaluate(X.row(i).transpose(), i);
    for (int i = n0; i < budget; ++i) {
        GpSurrogate g = GpSurrogate::fit(Xall.topRows(i), y.head(i));
        Eigen::VectorXd x_next =
            propose_next(g, g.standardize(y(best_i)), Xall.row(best_i).transpose(),
                         seed + 0x9e3779b97f4a7c15ULL * static_cast<unsigned long long>(i));
        evaluate(x_next, i);
    }

    bool all_failed = true;
    for (const EvaluationRecord& r : res.history)
        if (!r.failed) all_failed = false;
    if (all_failed) throw NumericalError("calibrate: every objective evaluation failed");
    res.best = res.history[best_i];
    return res;
}

void write_history_csv(const std::string& path, const ParameterSpace& space,
                       const std::vector<EvaluationRecord>& history, const std::string& comment) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write history file: " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    f << "iter,J,best_J";
    std::vector<double> rates;
    if (!history.empty())
        for (const RateMape& m : history.front().per_rate) rates.push_back(m.rate_c);
    char buf[64];
    for (double r : rates) {
        std::snprintf(buf, sizeof(buf), ",mape_v_%gc,mape_t_%gc", r, r);
        f << buf;
    }
    for (const SpaceEntry& e : space.entries) f << "," << e.name;
    f << "\n";
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < history.size(); ++i) {
        const EvaluationRecord& rec = history[i];
        best = std::min(best, rec.J);
        f << i << "," << rec.J << "," << best;
        for (size_t k = 0; k < rates.size(); ++k) {
            if (rec.failed || k >= rec.per_rate.size()) f << ",,";
            else f << "," << rec.per_rate[k].mape_v << "," << rec.per_rate[k].mape_t;
        }
        CellParameters theta = rec.theta;
        for (const SpaceEntry& e : space.entries) {
            std::snprintf(buf, sizeof(buf), ",%.10g", *field_ptr(theta, e.name));
            f << buf;
        }
        f << "\n";
    }
}

} // namespace bdt
