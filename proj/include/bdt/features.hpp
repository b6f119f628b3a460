#pragma once

#include "bdt/csv.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace bdt {

inline constexpr int kNumFeatures = 13;

// Per-cycle summary features computable from (t, I, V, T) telemetry alone.
extern const std::array<const char*, kNumFeatures> kFeatureNames;

struct FeatureRow {
    std::string cell_id;
    int cycle = 0;
    std::array<double, kNumFeatures> f{};
    std::optional<double> soh; // label, when joined
};

// Extracts the 13 features from one cycle's records (must contain a discharge
// segment, i.e. an I > 0 run). max_cycle feeds the cycle_norm feature.
FeatureRow extract_features(const std::vector<TimeSeriesRecord>& cycle_records, int max_cycle);

// Feature rows for every (cell, cycle) group, sorted by (cell_id, cycle),
// with labels joined when provided.
std::vector<FeatureRow> extract_all(const GroupedTelemetry& telemetry,
                                    const std::vector<SohLabel>& labels = {});

// Whole-cell split stratified by family (cell_id prefix before the last '_').
struct Split {
    std::vector<FeatureRow> train;
    std::vector<FeatureRow> test;
};
Split split_by_cell(const std::vector<FeatureRow>& rows, double test_fraction,
                    unsigned long long seed);

// Train-statistics z-scoring; constant features are dropped with a warning.
class Normalizer {
public:
    static Normalizer fit(const std::vector<FeatureRow>& train);

    std::vector<double> apply(const std::array<double, kNumFeatures>& f) const;
    std::array<double, kNumFeatures> invert(const std::vector<double>& z) const;

    int dim() const { return static_cast<int>(kept_.size()); }
    const std::vector<int>& kept() const { return kept_; }
    double mean_of(int feature) const { return mean_[feature]; }
    double std_of(int feature) const { return std_[feature]; }
    // Position of a raw feature in the standardized vector, or -1 if dropped.
    int position_of(int feature) const;

    void save(std::ostream& os) const;
    static Normalizer load(std::istream& is);

private:
    std::array<double, kNumFeatures> mean_{}, std_{};
    std::vector<int> kept_; // raw feature indices that survived
};

void write_features_csv(const std::string& path, const std::vector<FeatureRow>& rows,
                        const std::string& comment = "");
std::vector<FeatureRow> load_features_csv(const std::string& path);

} // namespace bdt
