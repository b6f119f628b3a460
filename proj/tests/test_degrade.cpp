#include <doctest.h>

#include "bdt/bo.hpp"
#include "bdt/degrade.hpp"
#include "bdt/errors.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bdt;

TEST_CASE("square-root-plus-linear fade law") {
    DegradationParams d;
    CHECK(soh_of_cycle(0, d, 298.15, 2.0) == doctest::Approx(1.0));
    // frozen oracle: 1 - (0.012*sqrt(500) + 0.00025*500) / 2
    CHECK(soh_of_cycle(500, d, 298.15, 2.0) ==
          doctest::Approx(0.8033359213500126).epsilon(1e-12));
    // hotter cells fade faster (Arrhenius on the sqrt term)
    CHECK(soh_of_cycle(500, d, 308.15, 2.0) < soh_of_cycle(500, d, 298.15, 2.0));
    CHECK_THROWS_AS(soh_of_cycle(-1, d, 298.15, 2.0), InputError);
    CHECK_THROWS_AS(soh_of_cycle(100000, d, 298.15, 2.0), EndOfLifeError);
}

TEST_CASE("aging narrows the windows and grows the resistance") {
    CellConfig cfg = CellConfig::defaults();
    DegradationParams d;
    AgedCell aged = apply_degradation(cfg.params, 200, d);
    CHECK(aged.params_at_n.R0 == doctest::Approx(cfg.params.R0 * 1.1).epsilon(1e-12));
    CHECK(aged.params_at_n.x_n_max < cfg.params.x_n_max);
    CHECK(aged.params_at_n.x_p_min > cfg.params.x_p_min);
    CHECK(aged.params_at_n.x_n_min == cfg.params.x_n_min);
    CHECK(aged.params_at_n.x_p_max == cfg.params.x_p_max);

    AgedCell fresh = apply_degradation(cfg.params, 0, d);
    CHECK(fresh.soh == 1.0);
    CHECK(fresh.params_at_n.R0 == cfg.params.R0);
}

TEST_CASE("simulated capacity tracks the SOH label") {
    CellConfig cfg = CellConfig::defaults();
    DegradationParams d;
    double cap_fresh = 1.0 * cfg.params.Q_nom * simulate_rate(cfg, 1.0).t.back() / 3600.0;

    // find the cycle closest to SOH 0.85
    int n_star = 0;
    double best = 1e9;
    for (int n = 1; n < 2000; ++n) {
        double soh = soh_of_cycle(n, d, 298.15, cfg.params.Q_nom);
        if (std::abs(soh - 0.85) < best) { best = std::abs(soh - 0.85); n_star = n; }
    }
    AgedCell aged = apply_degradation(cfg.params, n_star, d);
    CellConfig aged_cfg = cfg;
    aged_cfg.params = aged.params_at_n;
    double cap_aged = 1.0 * cfg.params.Q_nom * simulate_rate(aged_cfg, 1.0).t.back() / 3600.0;

    double expected = cap_fresh - (1.0 - aged.soh) * cfg.params.Q_nom;
    CHECK(std::abs(cap_aged - expected) < 0.02); // first-order lithium bookkeeping
    CHECK(cap_aged < cap_fresh);
}

TEST_CASE("fleet generation is labeled, monotone and reproducible") {
    CellConfig cfg = CellConfig::defaults();
    DegradationParams d;
    std::vector<Family> fams = {Family::C2, Family::SAT};
    const std::string dir_a = "test_fleet_a", dir_b = "test_fleet_b";

    FleetManifest ma = generate_fleet(cfg, d, fams, 2, 10, 99, dir_a);
    CHECK(ma.telemetry_files.size() == 4);
    CHECK(std::filesystem::exists(ma.path));

    std::vector<SohLabel> labels = load_labels(ma.labels_file);
    CHECK(labels.size() == 4 * 10);
    std::map<std::string, double> last_soh;
    for (const SohLabel& l : labels) {
        CHECK(l.soh_true > 0.0);
        CHECK(l.soh_true <= 1.0);
        auto it = last_soh.find(l.cell_id);
        if (it != last_soh.end()) CHECK(l.soh_true <= it->second + 1e-12);
        last_soh[l.cell_id] = l.soh_true;
    }
    CHECK(last_soh.size() == 4);

    // per-cell noise makes trajectories differ across cells of one family
    {
        std::ifstream f0(ma.telemetry_files[0]), f1(ma.telemetry_files[1]);
        std::stringstream s0, s1;
        s0 << f0.rdbuf();
        s1 << f1.rdbuf();
        CHECK(s0.str() != s1.str());
    }

    FleetManifest mb = generate_fleet(cfg, d, fams, 2, 10, 99, dir_b);
    for (size_t i = 0; i < ma.telemetry_files.size(); ++i) {
        std::ifstream fa(ma.telemetry_files[i]), fb(mb.telemetry_files[i]);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        CHECK(sa.str() == sb.str()); // byte-identical reruns
    }
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("fleet generation rejects degenerate requests") {
    CellConfig cfg = CellConfig::defaults();
    DegradationParams d;
    CHECK_THROWS_AS(generate_fleet(cfg, d, {}, 2, 10, 1, "x"), InputError);
    CHECK_THROWS_AS(generate_fleet(cfg, d, {Family::C2}, 0, 10, 1, "x"), InputError);
    CHECK_THROWS_AS(generate_fleet(cfg, d, {Family::C2}, 2, 5, 1, "x"), InputError);
}
