#include <doctest.h>

#include "bdt/csv.hpp"
#include "bdt/errors.hpp"
#include "bdt/features.hpp"
#include "bdt/tomlmini.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace bdt;

TEST_CASE("toml subset parser") {
    toml::Document doc = toml::parse(
        "top = 1.5\n"
        "# a comment\n"
        "[section]\n"
        "name = \"hello # not a comment\"\n"
        "flag = true\n"
        "values = [1, 2,\n 3]  # trailing\n"
        "[[arr.items]]\n"
        "k = 1\n"
        "[[arr.items]]\n"
        "k = 2\n");
    CHECK(doc.root.num("top") == 1.5);
    CHECK(doc.root.str("section.name") == "hello # not a comment");
    CHECK(doc.root.flag_or("section.flag", false) == true);
    CHECK(doc.root.flag_or("section.missing", true) == true);
    CHECK(doc.root.num_array("section.values") == std::vector<double>{1, 2, 3});
    REQUIRE(doc.table_arrays.at("arr.items").size() == 2);
    CHECK(doc.table_arrays.at("arr.items")[1].num("k") == 2);

    CHECK(doc.root.num_or("nope", 7.0) == 7.0);
    CHECK_THROWS_AS(doc.root.num("nope"), InputError);
    CHECK_THROWS_AS(doc.root.num("section.name"), InputError);
    CHECK_THROWS_AS(toml::parse("key value_without_equals\n"), InputError);
    CHECK_THROWS_AS(toml::parse("key = @garbage\n"), InputError);
}

TEST_CASE("telemetry round trip and validation") {
    const char* path = "test_dataio_telemetry.csv";
    {
        TelemetryWriter w(path, "seed=1 config=abc");
        w.write({"c1", 0, 1.0, 2.0, 3.7, 25.0});
        w.write({"c1", 0, 2.0, 2.0, 3.65, 25.1});
        w.write({"c1", 1, 1.0, -1.0, 3.9, 24.9});
        w.close();
    }
    {
        std::ifstream f(path);
        std::string first;
        std::getline(f, first);
        CHECK(first.rfind("# ", 0) == 0); // provenance comment first
    }
    GroupedTelemetry g = load_telemetry(path);
    CHECK(g.size() == 2);
    REQUIRE(g.at({"c1", 0}).size() == 2);
    CHECK(g.at({"c1", 0})[1].V == doctest::Approx(3.65));
    CHECK(g.at({"c1", 1})[0].I == doctest::Approx(-1.0));
    std::remove(path);

    auto write_text = [&](const char* text) {
        std::ofstream f(path);
        f << text;
    };
    write_text("wrong,header\n");
    CHECK_THROWS_AS(load_telemetry(path), InputError);
    write_text("cell_id,cycle,t_s,current_a,voltage_v,temp_c\nc1,0,1.0,2.0,oops,25\n");
    CHECK_THROWS_WITH_AS(load_telemetry(path),
                         doctest::Contains("line 2"), InputError);
    write_text("cell_id,cycle,t_s,current_a,voltage_v,temp_c\nc1,0,1.0,2.0,3.7\n");
    CHECK_THROWS_WITH_AS(load_telemetry(path),
                         doctest::Contains("6 columns"), InputError);
    // duplicate timestamps within one cycle are rejected
    write_text("cell_id,cycle,t_s,current_a,voltage_v,temp_c\n"
               "c1,0,1.0,2.0,3.7,25\nc1,0,1.0,2.0,3.6,25\n");
    CHECK_THROWS_WITH_AS(load_telemetry(path),
                         doctest::Contains("non-monotone"), InputError);
    std::remove(path);
}

TEST_CASE("feature extraction against hand-computed integrals") {
    // 2 s grid: CC charge with a 4.2 V taper tail, then a two-rate discharge.
    std::vector<TimeSeriesRecord> recs = {
        {"c", 10, 2.0, -1.0, 4.00, 25.0},
        {"c", 10, 4.0, -1.0, 4.20, 25.2},
        {"c", 10, 6.0, -0.5, 4.199, 25.1}, // CV taper sample
        {"c", 10, 8.0, 0.0, 4.10, 25.0},   // rest
        {"c", 10, 10.0, 2.0, 3.90, 25.5},
        {"c", 10, 12.0, 2.0, 3.70, 26.0},
        {"c", 10, 14.0, 4.0, 3.30, 27.0}, // rate jump for the resistance proxy
        {"c", 10, 16.0, 4.0, 3.00, 27.5},
    };
    FeatureRow r = extract_features(recs, 20);

    // right-rectangle integrals, dt = 2 s each
    double q_dis = (2.0 + 2.0 + 4.0 + 4.0) * 2.0;
    CHECK(r.f[0] == doctest::Approx(q_dis / 3600.0).epsilon(1e-12));
    double e_dis = (2.0 * 3.9 + 2.0 * 3.7 + 4.0 * 3.3 + 4.0 * 3.0) * 2.0;
    CHECK(r.f[1] == doctest::Approx(e_dis / 3600.0).epsilon(1e-12));
    CHECK(r.f[2] == doctest::Approx((3.9 + 3.7 + 3.3 + 3.0) / 4.0).epsilon(1e-12));
    // half charge = 12 A s falls inside the third discharge rectangle:
    // cum = [4, 8, 16, 24] -> interpolate between 8 and 16 at weight 0.5
    CHECK(r.f[3] == doctest::Approx(3.7 + 0.5 * (3.3 - 3.7)).epsilon(1e-12));
    CHECK(r.f[4] == doctest::Approx(8.0));
    CHECK(r.f[5] == doctest::Approx(27.5));
    CHECK(r.f[6] == doctest::Approx((25.5 + 26.0 + 27.0 + 27.5) / 4.0).epsilon(1e-12));
    CHECK(r.f[7] == doctest::Approx(27.5 - 25.5).epsilon(1e-12)); // T_max - T at discharge start
    // resistance proxy at discharge onset (rest -> 2 A): (4.10 - 3.90) / 2
    CHECK(r.f[8] == doctest::Approx(0.1).epsilon(1e-12));
    // both charge samples sit within 5 mV of 4.2 V with non-increasing current
    CHECK(r.f[9] == doctest::Approx(4.0));
    double q_chg = (1.0 + 1.0 + 0.5) * 2.0;
    CHECK(r.f[10] == doctest::Approx(q_chg / 3600.0).epsilon(1e-12));
    CHECK(r.f[11] == doctest::Approx(q_dis / q_chg).epsilon(1e-12));
    CHECK(r.f[12] == doctest::Approx(10.0 / 20.0));

    CHECK_THROWS_AS(extract_features({}, 20), InputError);
    // a cycle without any discharge has no usable features
    std::vector<TimeSeriesRecord> rest_only = {{"c", 1, 1.0, 0.0, 3.7, 25.0}};
    CHECK_THROWS_AS(extract_features(rest_only, 20), InputError);
}

namespace {

std::vector<FeatureRow> synthetic_rows(int families, int cells, int cycles) {
    std::vector<FeatureRow> rows;
    for (int f = 0; f < families; ++f)
        for (int c = 0; c < cells; ++c)
            for (int n = 0; n < cycles; ++n) {
                FeatureRow r;
                r.cell_id = "F" + std::to_string(f) + "_" + std::to_string(c);
                r.cycle = n;
                for (int j = 0; j < kNumFeatures; ++j)
                    r.f[j] = j + 0.1 * n + 0.01 * c + 0.001 * f;
                r.soh = 1.0 - 0.001 * n;
                rows.push_back(r);
            }
    return rows;
}

} // namespace

TEST_CASE("whole-cell stratified split") {
    std::vector<FeatureRow> rows = synthetic_rows(3, 4, 5);
    Split s = split_by_cell(rows, 0.25, 42);
    CHECK(s.train.size() + s.test.size() == rows.size());

    std::map<std::string, int> test_cells_per_family;
    std::set<std::string> train_cells, test_cells;
    for (const FeatureRow& r : s.train) train_cells.insert(r.cell_id);
    for (const FeatureRow& r : s.test) {
        test_cells.insert(r.cell_id);
        test_cells_per_family[r.cell_id.substr(0, r.cell_id.rfind('_'))]++;
    }
    // no cell appears on both sides
    for (const std::string& id : test_cells) CHECK(train_cells.count(id) == 0);
    // 25% of 4 cells = exactly one test cell per family, all its cycles
    for (const auto& [fam, count] : test_cells_per_family) CHECK(count == 5);
    CHECK(test_cells_per_family.size() == 3);

    Split s2 = split_by_cell(rows, 0.25, 42);
    CHECK(s2.test.size() == s.test.size());
    for (size_t i = 0; i < s.test.size(); ++i) CHECK(s2.test[i].cell_id == s.test[i].cell_id);

    CHECK_THROWS_AS(split_by_cell(rows, 0.0, 1), InputError);
    CHECK_THROWS_AS(split_by_cell(rows, 1.0, 1), InputError);
}

TEST_CASE("normalizer z-scores, drops constants and round-trips") {
    std::vector<FeatureRow> rows = synthetic_rows(2, 3, 4);
    for (FeatureRow& r : rows) r.f[5] = 3.14; // force one constant feature
    Normalizer norm = Normalizer::fit(rows);
    CHECK(norm.dim() == kNumFeatures - 1);
    CHECK(norm.position_of(5) == -1);
    CHECK(norm.position_of(0) == 0);
    CHECK(norm.position_of(6) == 5);

    // standardized training set has mean 0 and unit variance per kept feature
    std::vector<double> mean(norm.dim(), 0.0), var(norm.dim(), 0.0);
    for (const FeatureRow& r : rows) {
        std::vector<double> z = norm.apply(r.f);
        for (int j = 0; j < norm.dim(); ++j) { mean[j] += z[j]; var[j] += z[j] * z[j]; }
    }
    for (int j = 0; j < norm.dim(); ++j) {
        CHECK(mean[j] / rows.size() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(var[j] / rows.size() == doctest::Approx(1.0).epsilon(1e-12));
    }

    std::array<double, kNumFeatures> back = norm.invert(norm.apply(rows[3].f));
    for (int j = 0; j < kNumFeatures; ++j)
        if (j != 5) CHECK(back[j] == doctest::Approx(rows[3].f[j]).epsilon(1e-12));

    std::stringstream ss;
    norm.save(ss);
    Normalizer norm2 = Normalizer::load(ss);
    std::vector<double> za = norm.apply(rows[0].f), zb = norm2.apply(rows[0].f);
    for (size_t j = 0; j < za.size(); ++j) CHECK(za[j] == doctest::Approx(zb[j]).epsilon(1e-15));
}

TEST_CASE("features CSV round trip") {
    const char* path = "test_dataio_features.csv";
    std::vector<FeatureRow> rows = synthetic_rows(1, 2, 3);
    rows[0].soh.reset(); // unlabeled row keeps an empty cell
    write_features_csv(path, rows, "seed=5 config=f00");
    std::vector<FeatureRow> back = load_features_csv(path);
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].cell_id == rows[i].cell_id);
        CHECK(back[i].cycle == rows[i].cycle);
        for (int j = 0; j < kNumFeatures; ++j)
            CHECK(back[i].f[j] == doctest::Approx(rows[i].f[j]).epsilon(1e-9));
        CHECK(back[i].soh.has_value() == rows[i].soh.has_value());
    }
    std::remove(path);
}
