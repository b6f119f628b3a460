#include "bdt/features.hpp"

#include "bdt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace bdt {

const std::array<const char*, kNumFeatures> kFeatureNames = {
    "discharge_capacity_ah", "discharge_energy_wh", "mean_discharge_v",
    "v_at_half_capacity",    "discharge_duration_s", "t_max_c",
    "t_mean_c",              "t_rise_c",             "r_proxy_ohm",
    "cv_duration_s",         "charge_capacity_ah",   "coulombic_eff",
    "cycle_norm",
};

FeatureRow extract_features(const std::vector<TimeSeriesRecord>& recs, int max_cycle) {
    if (recs.empty()) throw InputError("extract_features: empty cycle");

    FeatureRow row;
    row.cell_id = recs.front().cell_id;
    row.cycle = recs.front().cycle;

    double q_dis = 0.0, e_dis = 0.0, dur_dis = 0.0, q_chg = 0.0, cv_dur = 0.0;
    double v_sum = 0.0, t_sum = 0.0, t_max = -1e30;
    int n_dis = 0;
    double t_first_dis = std::numeric_limits<double>::quiet_NaN();
    double r_proxy = 0.0;
    bool r_proxy_set = false;
    std::vector<double> cumq, vq; // V against cumulative discharged charge

    double prev_t = 0.0, prev_I = 0.0, prev_V = 0.0;
    bool have_prev = false;
    for (const TimeSeriesRecord& r : recs) {
        double dt = r.t - (have_prev ? prev_t : 0.0);
        if (dt <= 0.0)
            throw InputError("extract_features: non-increasing time in cell '" + row.cell_id +
                             "' cycle " + std::to_string(row.cycle));
        if (r.I > 0.0) { // discharge
            if (!r_proxy_set && have_prev && r.I != prev_I) {
                r_proxy = (prev_V - r.V) / (r.I - prev_I);
                r_proxy_set = true;
            }
            if (n_dis == 0) t_first_dis = r.T;
            q_dis += r.I * dt;
            e_dis += r.I * r.V * dt;
            dur_dis += dt;
            v_sum += r.V;
            t_sum += r.T;
            t_max = std::max(t_max, r.T);
            ++n_dis;
            cumq.push_back(q_dis);
            vq.push_back(r.V);
        } else if (r.I < 0.0) { // charge
            q_chg += -r.I * dt;
            bool taper = have_prev && prev_I < 0.0 && std::abs(r.I) <= std::abs(prev_I) + 1e-12;
            if (std::abs(r.V - 4.2) < 5e-3 && taper) cv_dur += dt;
        }
        prev_t = r.t;
        prev_I = r.I;
        prev_V = r.V;
        have_prev = true;
    }
    if (n_dis == 0)
        throw InputError("extract_features: no discharge segment in cell '" + row.cell_id +
                         "' cycle " + std::to_string(row.cycle));

    double v_half = vq.front();
    {
        double target = 0.5 * q_dis;
        for (size_t i = 1; i < cumq.size(); ++i) {
            if (cumq[i] >= target) {
                double w = (target - cumq[i - 1]) / (cumq[i] - cumq[i - 1]);
                v_half = vq[i - 1] + w * (vq[i] - vq[i - 1]);
                break;
            }
        }
    }

    row.f[0] = q_dis / 3600.0;
    row.f[1] = e_dis / 3600.0;
    row.f[2] = v_sum / n_dis;
    row.f[3] = v_half;
    row.f[4] = dur_dis;
    row.f[5] = t_max;
    row.f[6] = t_sum / n_dis;
    row.f[7] = t_max - t_first_dis;
    row.f[8] = r_proxy;
    row.f[9] = cv_dur;
    row.f[10] = q_chg / 3600.0;
    row.f[11] = q_chg > 0.0 ? q_dis / q_chg : 1.0;
    row.f[12] = max_cycle > 0 ? static_cast<double>(row.cycle) / max_cycle : 0.0;
    for (double v : row.f)
        if (!std::isfinite(v))
            throw NumericalError("extract_features: non-finite feature in cell '" + row.cell_id +
                                 "' cycle " + std::to_string(row.cycle));
    return row;
}

std::vector<FeatureRow> extract_all(const GroupedTelemetry& telemetry,
                                    const std::vector<SohLabel>& labels) {
    int max_cycle = 0;
    for (const auto& [key, recs] : telemetry) max_cycle = std::max(max_cycle, key.second);
    std::map<CycleKey, double> label_map;
    for (const SohLabel& l : labels) label_map[{l.cell_id, l.cycle}] = l.soh_true;

    std::vector<FeatureRow> rows;
    rows.reserve(telemetry.size());
    for (const auto& [key, recs] : telemetry) {
        FeatureRow row = extract_features(recs, max_cycle);
        auto it = label_map.find(key);
        if (it != label_map.end()) row.soh = it->second;
        rows.push_back(std::move(row));
    }
    return rows; // map iteration is already (cell_id, cycle) ordered
}

namespace {

std::string family_of(const std::string& cell_id) {
    size_t pos = cell_id.rfind('_');
    return pos == std::string::npos ? cell_id : cell_id.substr(0, pos);
}

} // namespace

Split split_by_cell(const std::vector<FeatureRow>& rows, double test_fraction,
                    unsigned long long seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw InputError("split_by_cell: test fraction must lie in (0,1)");
    std::map<std::string, std::vector<std::string>> cells_by_family;
    {
        std::map<std::string, bool> seen;
        for (const FeatureRow& r : rows) {
            if (!seen[r.cell_id]) {
                seen[r.cell_id] = true;
                cells_by_family[family_of(r.cell_id)].push_back(r.cell_id);
            }
        }
    }

    std::map<std::string, bool> is_test;
    std::mt19937_64 rng(seed);
    for (auto& [family, cells] : cells_by_family) {
        if (cells.size() < 2)
            throw InputError("split_by_cell: family '" + family + "' has fewer than 2 cells");
        std::sort(cells.begin(), cells.end());
        std::shuffle(cells.begin(), cells.end(), rng);
        size_t n_test = std::max<size_t>(1, std::llround(test_fraction * cells.size()));
        if (n_test >= cells.size()) n_test = cells.size() - 1;
        for (size_t i = 0; i < n_test; ++i) is_test[cells[i]] = true;
    }

    Split split;
    for (const FeatureRow& r : rows)
        (is_test[r.cell_id] ? split.test : split.train).push_back(r);
    return split;
}

Normalizer Normalizer::fit(const std::vector<FeatureRow>& train) {
    if (train.empty()) throw InputError("normalizer: empty training set");
    Normalizer n;
    const double cnt = static_cast<double>(train.size());
    for (int j = 0; j < kNumFeatures; ++j) {
        double s = 0.0;
        for (const FeatureRow& r : train) s += r.f[j];
        n.mean_[j] = s / cnt;
        double ss = 0.0;
        for (const FeatureRow& r : train) {
            double d = r.f[j] - n.mean_[j];
            ss += d * d;
        }
        n.std_[j] = std::sqrt(ss / cnt);
        if (n.std_[j] > 0.0) {
            n.kept_.push_back(j);
        } else {
            std::cerr << "warning: feature '" << kFeatureNames[j]
                      << "' is constant in the training split; dropped\n";
        }
    }
    return n;
}

std::vector<double> Normalizer::apply(const std::array<double, kNumFeatures>& f) const {
    std::vector<double> z;
    z.reserve(kept_.size());
    for (int j : kept_) z.push_back((f[j] - mean_[j]) / std_[j]);
    return z;
}

std::array<double, kNumFeatures> Normalizer::invert(const std::vector<double>& z) const {
    if (z.size() != kept_.size()) throw InputError("normalizer: dimension mismatch");
    std::array<double, kNumFeatures> f{};
    for (size_t i = 0; i < kept_.size(); ++i) f[kept_[i]] = z[i] * std_[kept_[i]] + mean_[kept_[i]];
    return f;
}

int Normalizer::position_of(int feature) const {
    for (size_t i = 0; i < kept_.size(); ++i)
        if (kept_[i] == feature) return static_cast<int>(i);
    return -1;
}

void Normalizer::save(std::ostream& os) const {
    os << "normalizer " << kept_.size() << "\n";
    os.precision(17);
    for (int j : kept_) os << j << " " << mean_[j] << " " << std_[j] << "\n";
}

Normalizer Normalizer::load(std::istream& is) {
    std::string tag;
    size_t n = 0;
    is >> tag >> n;
    if (tag != "normalizer" || !is) throw InputError("normalizer: bad stream header");
    Normalizer out;
    for (size_t i = 0; i < n; ++i) {
        int j;
        double m, s;
        is >> j >> m >> s;
        if (!is || j < 0 || j >= kNumFeatures) throw InputError("normalizer: corrupt entry");
        out.mean_[j] = m;
        out.std_[j] = s;
        out.kept_.push_back(j);
    }
    return out;
}

void write_features_csv(const std::string& path, const std::vector<FeatureRow>& rows,
                        const std::string& comment) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write features file: " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    f << "cell_id,cycle";
    for (const char* name : kFeatureNames) f << "," << name;
    f << ",soh\n";
    char buf[64];
    for (const FeatureRow& r : rows) {
        f << r.cell_id << "," << r.cycle;
        for (double v : r.f) {
            std::snprintf(buf, sizeof(buf), ",%.10g", v);
            f << buf;
        }
        if (r.soh) {
            std::snprintf(buf, sizeof(buf), ",%.8f", *r.soh);
            f << buf;
        } else {
            f << ",";
        }
        f << "\n";
    }
    if (!f) throw InputError("write failed: " + path);
}

std::vector<FeatureRow> load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open features file: " + path);
    std::vector<FeatureRow> rows;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (line.back() == ',') cols.push_back("");
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        if (cols.size() != kNumFeatures + 3)
            throw InputError("features line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kNumFeatures + 3) + " columns");
        FeatureRow r;
        r.cell_id = cols[0];
        r.cycle = std::atoi(cols[1].c_str());
        for (int j = 0; j < kNumFeatures; ++j) {
            char* end = nullptr;
            r.f[j] = std::strtod(cols[2 + j].c_str(), &end);
            if (end == cols[2 + j].c_str())
                throw InputError("features line " + std::to_string(line_no) + ": bad number");
        }
        if (!cols.back().empty()) r.soh = std::atof(cols.back().c_str());
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace bdt
