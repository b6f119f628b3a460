#include "bdt/degrade.hpp"

#include "bdt/constants.hpp"
#include "bdt/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace bdt {

double soh_of_cycle(int n, const DegradationParams& d, double T_mean, double Q_nom,
                    double T_ref) {
    if (n < 0) throw InputError("soh_of_cycle: cycle index must be non-negative");
    double arrh = std::exp(-(d.Ea_age / kGasConst) * (1.0 / T_mean - 1.0 / T_ref));
    double loss = d.beta_sqrt * arrh * std::sqrt(static_cast<double>(n)) + d.beta_lin * n;
    double soh = 1.0 - loss / Q_nom;
    if (soh <= 0.0)
        throw EndOfLifeError("cell reached end of life at cycle " + std::to_string(n));
    return soh;
}

AgedCell apply_degradation(const CellParameters& base, int n, const DegradationParams& d,
                           double T_mean) {
    base.validate();
    AgedCell out;
    out.base = base;
    out.n = n;
    out.soh = soh_of_cycle(n, d, T_mean, base.Q_nom, base.T_ref);
    out.params_at_n = base;
    if (n == 0) return out;

    double dQ = (1.0 - out.soh) * base.Q_nom; // Ah of lost cyclable lithium
    // Ah held per unit stoichiometry in each electrode.
    double cap_x_n = kFaraday * base.eps_n * base.L_n * base.A_cell * base.c_max_n / 3600.0;
    double cap_x_p = kFaraday * base.eps_p * base.L_p * base.A_cell * base.c_max_p / 3600.0;

    CellParameters& p = out.params_at_n;
    p.x_n_max = base.x_n_max - dQ / cap_x_n;
    p.x_p_min = base.x_p_min + dQ / cap_x_p;
    p.R0 = base.R0 * (1.0 + d.gamma_r * n);
    if (p.x_n_max <= p.x_n_min || p.x_p_min >= p.x_p_max)
        throw EndOfLifeError("stoichiometry window collapsed at cycle " + std::to_string(n));
    return out;
}

FleetManifest generate_fleet(const CellConfig& cfg, const DegradationParams& d,
                             const std::vector<Family>& families, int cells_per_family,
                             int cycles, unsigned long long seed, const std::string& out_dir) {
    if (cycles < 10) throw InputError("generate_fleet: need at least 10 cycles");
    if (cells_per_family < 1) throw InputError("generate_fleet: need at least 1 cell per family");
    if (families.empty()) throw InputError("generate_fleet: no families requested");
    std::filesystem::create_directories(out_dir);

    FleetManifest manifest;
    manifest.seed = seed;
    {
        std::ostringstream tag;
        tag << std::hex << hash_bytes(std::to_string(seed) + ":" +
                                      std::to_string(cells_per_family) + ":" +
                                      std::to_string(cycles));
        manifest.config_hash = tag.str();
    }
    std::string stamp = "seed=" + std::to_string(seed) + " config=" + manifest.config_hash;

    std::vector<SohLabel> labels;
    for (size_t fi = 0; fi < families.size(); ++fi) {
        Family fam = families[fi];
        CycleSchedule sched = CycleSchedule::for_family(fam, 1);
        for (int j = 0; j < cells_per_family; ++j) {
            char idbuf[64];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%02d", family_tag(fam).c_str(), j);
            std::string cell_id = idbuf;

            unsigned long long cell_seed =
                hash_bytes(std::to_string(seed) + "/" + cell_id);
            std::mt19937_64 rng(cell_seed);
            std::normal_distribution<double> gauss(0.0, 1.0);

            DegradationParams dc = d;
            dc.beta_sqrt *= std::exp(d.sigma_noise * gauss(rng));
            dc.beta_lin *= std::exp(d.sigma_noise * gauss(rng));
            dc.gamma_r *= std::exp(d.sigma_noise * gauss(rng));

            std::string file = out_dir + "/" + cell_id + ".csv";
            TelemetryWriter writer(file, stamp + " cell=" + cell_id);
            CellState state = init_state(cfg, 0.2, sched.T_amb);
            for (int n = 0; n < cycles; ++n) {
                AgedCell aged = apply_degradation(cfg.params, n, dc, sched.T_amb);
                CellConfig aged_cfg = cfg;
                aged_cfg.params = aged.params_at_n;
                double t_cycle = 0.0;
                for (const ProtocolStep& p : sched.steps)
                    state = run_step(state, p, aged_cfg, sched.T_amb, 1.0, rng, cell_id, n,
                                     t_cycle, [&](const TimeSeriesRecord& r) { writer.write(r); });
                labels.push_back({cell_id, n, aged.soh});
            }
            writer.close();
            manifest.telemetry_files.push_back(file);
        }
    }

    manifest.labels_file = out_dir + "/labels.csv";
    write_labels(manifest.labels_file, labels, stamp);

    nlohmann::json j;
    j["seed"] = seed;
    j["config_hash"] = manifest.config_hash;
    j["labels"] = manifest.labels_file;
    j["telemetry"] = manifest.telemetry_files;
    j["cells_per_family"] = cells_per_family;
    j["cycles"] = cycles;
    std::vector<std::string> fam_tags;
    for (Family f : families) fam_tags.push_back(family_tag(f));
    j["families"] = fam_tags;
    manifest.path = out_dir + "/manifest.json";
    std::ofstream mf(manifest.path);
    if (!mf) throw InputError("cannot write manifest: " + manifest.path);
    mf << j.dump(2) << "\n";
    return manifest;
}

} // namespace bdt
