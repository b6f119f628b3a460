#include "bdt/bo.hpp"
#include "bdt/cell_model.hpp"
#include "bdt/constants.hpp"
#include "bdt/csv.hpp"
#include "bdt/dagmm.hpp"
#include "bdt/degrade.hpp"
#include "bdt/errors.hpp"
#include "bdt/features.hpp"
#include "bdt/metrics.hpp"
#include "bdt/protocol.hpp"
#include "bdt/soh_pinn.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace bdt;

std::string stamp(unsigned long long seed, const std::string& config_blob) {
    std::ostringstream os;
    os << "seed=" << seed << " config=" << std::hex << hash_bytes(config_blob);
    return os.str();
}

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path))
        throw InputError(std::string(what) + " file not found: " + path);
}

CellConfig load_params_or_default(const std::string& path) {
    if (path.empty()) return CellConfig::defaults();
    require_file(path, "parameter");
    return CellConfig::load(path);
}

// ---- simulate ----

int cmd_simulate(const std::string& params_path, const std::string& protocol_path,
                 const std::string& out_path, unsigned long long seed,
                 const std::string& cell_id) {
    CellConfig cfg = load_params_or_default(params_path);
    require_file(protocol_path, "protocol");
    CycleSchedule sched = CycleSchedule::load(protocol_path);
    TelemetryWriter writer(out_path,
                           stamp(seed, params_path + "|" + protocol_path + "|" + cell_id));
    run_schedule(cfg, sched, seed, cell_id, [&](const TimeSeriesRecord& r) { writer.write(r); });
    writer.close();
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// ---- gen-data ----

int cmd_gen_data(const std::string& params_path, const std::string& families_arg, int cells,
                 int cycles, unsigned long long seed, const std::string& out_dir) {
    CellConfig cfg = load_params_or_default(params_path);
    std::vector<Family> fams;
    std::stringstream ss(families_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) fams.push_back(family_from_tag(tok));
    if (fams.empty()) throw InputError("gen-data: no families given");
    DegradationParams dp;
    FleetManifest manifest = generate_fleet(cfg, dp, fams, cells, cycles, seed, out_dir);
    std::cout << "wrote " << manifest.telemetry_files.size() << " telemetry files, labels at "
              << manifest.labels_file << ", manifest at " << manifest.path << "\n";
    return 0;
}

// ---- features ----

int cmd_features(const std::string& manifest_path, const std::string& out_path) {
    require_file(manifest_path, "manifest");
    std::ifstream mf(manifest_path);
    nlohmann::json j;
    mf >> j;
    std::vector<SohLabel> labels;
    if (j.contains("labels")) labels = load_labels(j["labels"].get<std::string>());
    GroupedTelemetry all;
    for (const auto& file : j["telemetry"]) {
        GroupedTelemetry g = load_telemetry(file.get<std::string>());
        for (auto& [k, v] : g) all[k] = std::move(v);
    }
    std::vector<FeatureRow> rows = extract_all(all, labels);
    unsigned long long seed = j.value("seed", 0ULL);
    write_features_csv(out_path, rows, stamp(seed, manifest_path));
    std::cout << "wrote " << rows.size() << " feature rows to " << out_path << "\n";
    return 0;
}

// ---- calibrate ----

std::vector<RateReference> reference_from_telemetry(const std::string& path) {
    GroupedTelemetry g = load_telemetry(path);
    std::vector<RateReference> refs;
    for (double rate : {1.0, 2.0, 3.0}) {
        std::string needle = std::to_string(static_cast<int>(rate)) + "C";
        const std::vector<TimeSeriesRecord>* found = nullptr;
        for (const auto& [key, recs] : g)
            if (key.first.find(needle) != std::string::npos) found = &recs;
        if (!found)
            throw InputError("calibration reference: no cell id containing '" + needle +
                             "' in " + path);
        RateReference ref;
        ref.rate_c = rate;
        double t0 = 0.0;
        bool started = false;
        double prev_t = 0.0;
        for (const TimeSeriesRecord& r : *found) {
            if (r.I > 0.0) {
                if (!started) {
                    t0 = prev_t;
                    started = true;
                }
                ref.t.push_back(r.t - t0);
                ref.V.push_back(r.V);
                ref.T_K.push_back(r.T + kCelsiusOffset);
            } else if (started) {
                break; // only the first discharge segment
            }
            prev_t = r.t;
        }
        if (ref.t.empty())
            throw InputError("calibration reference: no discharge segment for rate " + needle);
        refs.push_back(std::move(ref));
    }
    return refs;
}

int cmd_calibrate(const std::string& data_path, const std::string& space_path,
                  const std::string& params_path, int budget, unsigned long long seed,
                  const std::string& out_path, const std::string& report_path) {
    require_file(data_path, "reference telemetry");
    CellConfig base = load_params_or_default(params_path);
    ParameterSpace space = space_path.empty() ? ParameterSpace::around(base.params)
                                              : ParameterSpace::load(space_path);
    std::vector<RateReference> refs = reference_from_telemetry(data_path);
    CalibrationResult res = calibrate(base, space, refs, budget, seed);

    CellConfig best = base;
    best.params = res.best.theta;
    best.save(out_path, stamp(seed, data_path + "|" + space_path));
    if (!report_path.empty())
        write_history_csv(report_path, space, res.history, stamp(seed, data_path));
    std::cout << "best J = " << res.best.J << "\n";
    for (const RateMape& m : res.best.per_rate)
        std::cout << "  rate " << m.rate_c << "C: mape_v = " << m.mape_v
                  << "% mape_t = " << m.mape_t << "%\n";
    return 0;
}

// ---- train/predict soh ----

int cmd_train_soh(const std::string& features_path, double test_fraction, int epochs,
                  unsigned long long seed, const std::string& out_path,
                  const std::string& split_prefix) {
    require_file(features_path, "features");
    std::vector<FeatureRow> rows = load_features_csv(features_path);
    Split split = split_by_cell(rows, test_fraction, seed);
    if (!split_prefix.empty()) {
        std::string s = stamp(seed, features_path);
        write_features_csv(split_prefix + "_train.csv", split.train, s);
        write_features_csv(split_prefix + "_test.csv", split.test, s);
    }
    SohTrainOptions opt;
    if (epochs > 0) opt.epochs = epochs;
    auto [model, log] = train_soh(split.train, opt, seed);
    model.save(out_path, stamp(seed, features_path));
    std::cout << "epoch 1 loss " << log.epoch_loss.front() << ", final loss "
              << log.epoch_loss.back() << "\n";
    std::vector<Prediction> preds = predict_soh(model, split.test);
    std::cout << "held-out pooled MAPE = " << pooled_mape(preds) << "%\n";
    return 0;
}

int cmd_predict_soh(const std::string& features_path, const std::string& model_path,
                    const std::string& out_path, unsigned long long seed) {
    require_file(features_path, "features");
    require_file(model_path, "model");
    SohModel model = SohModel::load(model_path);
    std::vector<FeatureRow> rows = load_features_csv(features_path);
    std::vector<Prediction> preds = predict_soh(model, rows);
    write_predictions_csv(out_path, preds, stamp(seed, features_path + "|" + model_path));
    bool labeled = false;
    for (const Prediction& p : preds)
        if (p.soh_true) labeled = true;
    if (labeled) {
        std::cout << "pooled MAPE = " << pooled_mape(preds) << "%\n";
        for (const auto& [id, m] : per_track_mape(preds))
            std::cout << "  " << id << ": " << m << "%\n";
    }
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// ---- train/score uq ----

int cmd_train_uq(const std::string& features_path, int epochs, unsigned long long seed,
                 const std::string& out_path) {
    require_file(features_path, "features");
    std::vector<FeatureRow> rows = load_features_csv(features_path);
    DagmmConfig cfg;
    if (epochs > 0) cfg.epochs = epochs;
    auto [model, log] = train_dagmm(rows, cfg, seed);
    model.save(out_path, stamp(seed, features_path));
    std::cout << "epoch 1 loss " << log.front() << ", final loss " << log.back() << "\n";
    return 0;
}

int cmd_score_uq(const std::string& features_path, const std::string& model_path,
                 const std::string& out_path, unsigned long long seed) {
    require_file(features_path, "features");
    require_file(model_path, "model");
    DagmmModel model = DagmmModel::load(model_path);
    std::vector<FeatureRow> rows = load_features_csv(features_path);
    std::vector<UncertaintyRow> scores = score_dagmm(model, rows);
    write_uncertainty_csv(out_path, scores, stamp(seed, features_path + "|" + model_path));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// ---- report ----

std::map<std::pair<std::string, int>, double> load_pred_map(const std::string& path,
                                                            std::vector<Prediction>& preds) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open predictions file: " + path);
    std::map<std::pair<std::string, int>, double> energies;
    std::string line;
    bool header = false;
    bool has_true = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            has_true = line.find("soh_true") != std::string::npos;
            header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string id, cyc, pred, tru;
        std::getline(ss, id, ',');
        std::getline(ss, cyc, ',');
        std::getline(ss, pred, ',');
        Prediction p;
        p.cell_id = id;
        p.cycle = std::atoi(cyc.c_str());
        p.soh_pred = std::atof(pred.c_str());
        if (has_true && std::getline(ss, tru, ',') && !tru.empty())
            p.soh_true = std::atof(tru.c_str());
        preds.push_back(p);
    }
    return energies;
}

int cmd_report(const std::string& pred_path, const std::string& unc_path,
               const std::string& out_path, const std::string& plot_prefix) {
    require_file(pred_path, "predictions");
    std::vector<Prediction> preds;
    load_pred_map(pred_path, preds);
    if (preds.empty()) throw InputError("report: no predictions in " + pred_path);

    nlohmann::json j;
    j["mape_overall"] = pooled_mape(preds);
    std::map<std::string, std::pair<double, long>> fam_acc;
    for (const Prediction& p : preds) {
        if (!p.soh_true) continue;
        std::string fam = p.cell_id.substr(0, p.cell_id.rfind('_'));
        auto& [s, n] = fam_acc[fam];
        s += std::abs(p.soh_pred - *p.soh_true) / std::abs(*p.soh_true);
        ++n;
    }
    nlohmann::json per_family;
    for (auto& [fam, sn] : fam_acc) per_family[fam] = 100.0 * sn.first / sn.second;
    j["mape_per_family"] = per_family;

    if (!unc_path.empty()) {
        require_file(unc_path, "uncertainty");
        std::ifstream in(unc_path);
        std::map<std::pair<std::string, int>, double> energy_map;
        std::string line;
        bool header = false;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (!header) { header = true; continue; }
            std::stringstream ss(line);
            std::string id, cyc, e, pct;
            std::getline(ss, id, ',');
            std::getline(ss, cyc, ',');
            std::getline(ss, e, ',');
            energy_map[{id, std::atoi(cyc.c_str())}] = std::atof(e.c_str());
        }
        std::vector<double> errs, energies;
        for (const Prediction& p : preds) {
            if (!p.soh_true) continue;
            auto it = energy_map.find({p.cell_id, p.cycle});
            if (it == energy_map.end()) continue;
            errs.push_back(std::abs(p.soh_pred - *p.soh_true));
            energies.push_back(it->second);
        }
        if (errs.size() >= 2) j["spearman_energy_vs_error"] = spearman(energies, errs);
    }

    std::ofstream out(out_path);
    if (!out) throw InputError("cannot write metrics file: " + out_path);
    out << j.dump(2) << "\n";

    if (!plot_prefix.empty()) {
        std::ofstream pf(plot_prefix + "_soh_tracks.csv");
        pf << "cell_id,cycle,soh_true,soh_pred\n";
        for (const Prediction& p : preds)
            if (p.soh_true)
                pf << p.cell_id << "," << p.cycle << "," << *p.soh_true << "," << p.soh_pred
                   << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"battery digital-twin toolkit"};
    app.require_subcommand(1);

    std::string params, protocol, out, cell_id = "cell", families = "C2,C3,R2_5,R3,RW,SAT";
    std::string data, space, report_path, features_file, model_file, manifest, split_prefix;
    std::string pred_file, unc_file, plot_prefix;
    unsigned long long seed = 42;
    int cells = 8, cycles = 300, budget = 120, epochs = 0;
    double test_fraction = 0.25;

    auto* sim = app.add_subcommand("simulate", "run a protocol schedule and emit telemetry");
    sim->add_option("--params", params, "cell parameter TOML");
    sim->add_option("--protocol", protocol, "protocol TOML")->required();
    sim->add_option("--out", out, "output telemetry CSV")->required();
    sim->add_option("--seed", seed, "rng seed");
    sim->add_option("--cell-id", cell_id, "cell id for the emitted records");

    auto* gen = app.add_subcommand("gen-data", "generate a labeled synthetic fleet");
    gen->add_option("--params", params, "cell parameter TOML");
    gen->add_option("--families", families, "comma-separated family tags");
    gen->add_option("--cells", cells, "cells per family");
    gen->add_option("--cycles", cycles, "cycles per cell");
    gen->add_option("--seed", seed, "rng seed");
    gen->add_option("--out-dir", out, "output directory")->required();

    auto* feat = app.add_subcommand("features", "extract per-cycle features from a fleet");
    feat->add_option("--manifest", manifest, "fleet manifest JSON")->required();
    feat->add_option("--out", out, "output features CSV")->required();

    auto* cal = app.add_subcommand("calibrate", "Bayesian-optimization parameter calibration");
    cal->add_option("--data", data, "reference telemetry CSV (1C/2C/3C cells)")->required();
    cal->add_option("--space", space, "parameter space TOML (default: +-30% around params)");
    cal->add_option("--params", params, "base cell parameter TOML");
    cal->add_option("--budget", budget, "objective evaluation budget");
    cal->add_option("--seed", seed, "rng seed");
    cal->add_option("--out", out, "best parameters TOML")->required();
    cal->add_option("--report", report_path, "history CSV");

    auto* tsoh = app.add_subcommand("train-soh", "train the physics-informed SOH predictor");
    tsoh->add_option("--features", features_file, "features CSV with labels")->required();
    tsoh->add_option("--test-fraction", test_fraction, "held-out cell fraction");
    tsoh->add_option("--epochs", epochs, "training epochs (default 300)");
    tsoh->add_option("--seed", seed, "rng seed");
    tsoh->add_option("--out", out, "model output path")->required();
    tsoh->add_option("--emit-split", split_prefix, "write <prefix>_train.csv and <prefix>_test.csv");

    auto* psoh = app.add_subcommand("predict-soh", "predict SOH for feature rows");
    psoh->add_option("--features", features_file, "features CSV")->required();
    psoh->add_option("--model", model_file, "trained SOH model")->required();
    psoh->add_option("--seed", seed, "stamp seed");
    psoh->add_option("--out", out, "predictions CSV")->required();

    auto* tuq = app.add_subcommand("train-uq", "train the DAGMM uncertainty model");
    tuq->add_option("--features", features_file, "training features CSV")->required();
    tuq->add_option("--epochs", epochs, "training epochs (default 200)");
    tuq->add_option("--seed", seed, "rng seed");
    tuq->add_option("--out", out, "model output path")->required();

    auto* suq = app.add_subcommand("score-uq", "energy-score feature rows");
    suq->add_option("--features", features_file, "features CSV")->required();
    suq->add_option("--model", model_file, "trained DAGMM model")->required();
    suq->add_option("--seed", seed, "stamp seed");
    suq->add_option("--out", out, "uncertainty CSV")->required();

    auto* rep = app.add_subcommand("report", "metrics JSON and plot-ready CSVs");
    rep->add_option("--pred", pred_file, "predictions CSV")->required();
    rep->add_option("--uncertainty", unc_file, "uncertainty CSV");
    rep->add_option("--out", out, "metrics JSON")->required();
    rep->add_option("--plot-prefix", plot_prefix, "prefix for plot CSVs");

    try {
        app.parse(argc, argv);
        if (sim->parsed())
            return cmd_simulate(params, protocol, out, seed, cell_id);
        if (gen->parsed())
            return cmd_gen_data(params, families, cells, cycles, seed, out);
        if (feat->parsed())
            return cmd_features(manifest, out);
        if (cal->parsed())
            return cmd_calibrate(data, space, params, budget, seed, out, report_path);
        if (tsoh->parsed())
            return cmd_train_soh(features_file, test_fraction, epochs, seed, out, split_prefix);
        if (psoh->parsed())
            return cmd_predict_soh(features_file, model_file, out, seed);
        if (tuq->parsed())
            return cmd_train_uq(features_file, epochs, seed, out);
        if (suq->parsed())
            return cmd_score_uq(features_file, model_file, out, seed);
        if (rep->parsed())
            return cmd_report(pred_file, unc_file, out, plot_prefix);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    } catch (const bdt::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bdt::EndOfLifeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
