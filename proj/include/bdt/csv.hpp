#pragma once

#include "bdt/protocol.hpp"

#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace bdt {

inline constexpr const char* kTelemetryHeader = "cell_id,cycle,t_s,current_a,voltage_v,temp_c";

// Buffered telemetry CSV writer. Optional '#'-prefixed comment line goes first.
class TelemetryWriter {
public:
    TelemetryWriter(const std::string& path, const std::string& comment = "");
    ~TelemetryWriter();
    TelemetryWriter(const TelemetryWriter&) = delete;
    TelemetryWriter& operator=(const TelemetryWriter&) = delete;

    void write(const TimeSeriesRecord& r);
    void close();

private:
    std::FILE* f_ = nullptr;
    std::string path_;
};

// Key = (cell_id, cycle); records time-sorted within each cycle.
using CycleKey = std::pair<std::string, int>;
using GroupedTelemetry = std::map<CycleKey, std::vector<TimeSeriesRecord>>;

// Loads and validates a telemetry CSV. Malformed rows abort with line numbers.
GroupedTelemetry load_telemetry(const std::string& path);

struct SohLabel {
    std::string cell_id;
    int cycle;
    double soh_true;
};

void write_labels(const std::string& path, const std::vector<SohLabel>& labels,
                  const std::string& comment = "");
std::vector<SohLabel> load_labels(const std::string& path);

} // namespace bdt
