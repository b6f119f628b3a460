#include "bdt/csv.hpp"

#include "bdt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bdt {

TelemetryWriter::TelemetryWriter(const std::string& path, const std::string& comment)
    : path_(path) {
    f_ = std::fopen(path.c_str(), "w");
    if (!f_) throw InputError("cannot write telemetry file: " + path);
    if (!comment.empty()) std::fprintf(f_, "# %s\n", comment.c_str());
    std::fprintf(f_, "%s\n", kTelemetryHeader);
}

TelemetryWriter::~TelemetryWriter() {
    if (f_) std::fclose(f_);
}

void TelemetryWriter::write(const TimeSeriesRecord& r) {
    std::fprintf(f_, "%s,%d,%.1f,%.6f,%.6f,%.4f\n", r.cell_id.c_str(), r.cycle, r.t, r.I, r.V,
                 r.T);
}

void TelemetryWriter::close() {
    if (f_) {
        if (std::fclose(f_) != 0) throw InputError("write failed: " + path_);
        f_ = nullptr;
    }
}

namespace {

// Splits a CSV line in place; returns false if the field count differs.
bool split6(char* line, char* out[6]) {
    int n = 0;
    char* p = line;
    out[n++] = p;
    while (*p && n < 6) {
        if (*p == ',') {
            *p = '\0';
            out[n++] = p + 1;
        }
        ++p;
    }
    if (n != 6) return false;
    return std::strchr(out[5], ',') == nullptr;
}

double parse_double(const char* s, int line_no, const char* col) {
    char* end = nullptr;
    double v = std::strtod(s, &end);
    while (end && (*end == '\r' || *end == ' ')) ++end;
    if (end == s || *end != '\0' || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "telemetry line " << line_no << ": cannot parse " << col << " value '" << s << "'";
        throw InputError(msg.str());
    }
    return v;
}

} // namespace

GroupedTelemetry load_telemetry(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open telemetry file: " + path);

    GroupedTelemetry out;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != kTelemetryHeader)
                throw InputError("telemetry line " + std::to_string(line_no) +
                                 ": expected header '" + kTelemetryHeader + "', got '" + line + "'");
            header_seen = true;
            continue;
        }
        std::vector<char> buf(line.begin(), line.end());
        buf.push_back('\0');
        char* cols[6];
        if (!split6(buf.data(), cols))
            throw InputError("telemetry line " + std::to_string(line_no) + ": expected 6 columns");
        TimeSeriesRecord r;
        r.cell_id = cols[0];
        r.cycle = static_cast<int>(parse_double(cols[1], line_no, "cycle"));
        r.t = parse_double(cols[2], line_no, "t_s");
        r.I = parse_double(cols[3], line_no, "current_a");
        r.V = parse_double(cols[4], line_no, "voltage_v");
        r.T = parse_double(cols[5], line_no, "temp_c");
        if (r.cell_id.empty())
            throw InputError("telemetry line " + std::to_string(line_no) + ": empty cell_id");
        out[{r.cell_id, r.cycle}].push_back(r);
    }
    if (!header_seen && line_no > 0)
        throw InputError("telemetry file has no header: " + path);

    for (auto& [key, recs] : out) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const TimeSeriesRecord& a, const TimeSeriesRecord& b) { return a.t < b.t; });
        for (size_t i = 1; i < recs.size(); ++i)
            if (!(recs[i].t > recs[i - 1].t))
                throw InputError("telemetry: non-monotone time in cell '" + key.first +
                                 "' cycle " + std::to_string(key.second) + " at t=" +
                                 std::to_string(recs[i].t));
    }
    return out;
}

void write_labels(const std::string& path, const std::vector<SohLabel>& labels,
                  const std::string& comment) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write labels file: " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    f << "cell_id,cycle,soh_true\n";
    char buf[128];
    for (const SohLabel& l : labels) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.8f\n", l.cell_id.c_str(), l.cycle, l.soh_true);
        f << buf;
    }
    if (!f) throw InputError("write failed: " + path);
}

std::vector<SohLabel> load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open labels file: " + path);
    std::vector<SohLabel> out;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "cell_id,cycle,soh_true")
                throw InputError("labels line " + std::to_string(line_no) + ": bad header");
            header_seen = true;
            continue;
        }
        std::istringstream ss(line);
        std::string id, cyc, soh;
        if (!std::getline(ss, id, ',') || !std::getline(ss, cyc, ',') || !std::getline(ss, soh))
            throw InputError("labels line " + std::to_string(line_no) + ": expected 3 columns");
        SohLabel l;
        l.cell_id = id;
        l.cycle = static_cast<int>(parse_double(cyc.c_str(), line_no, "cycle"));
        l.soh_true = parse_double(soh.c_str(), line_no, "soh_true");
        out.push_back(l);
    }
    return out;
}

} // namespace bdt
