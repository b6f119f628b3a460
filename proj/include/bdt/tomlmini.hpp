#pragma once

// Minimal TOML-subset reader: sections, dotted keys, [[arrays of tables]],
// scalars (number/string/bool) and homogeneous arrays. Covers the project's
// config files without pulling in a full TOML implementation.

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace bdt::toml {

using Scalar = std::variant<double, std::string, bool>;

struct Table {
    std::map<std::string, Scalar> scalars;
    std::map<std::string, std::vector<Scalar>> arrays;

    bool has(const std::string& key) const { return scalars.count(key) > 0; }
    double num(const std::string& key) const;
    double num_or(const std::string& key, double fallback) const;
    std::string str(const std::string& key) const;
    std::string str_or(const std::string& key, const std::string& fallback) const;
    bool flag_or(const std::string& key, bool fallback) const;
    std::vector<double> num_array(const std::string& key) const;
};

struct Document {
    // Section keys are flattened: "[thermal] C_th = 40" -> root key "thermal.C_th".
    Table root;
    // "[[schedule.steps]]" -> table_arrays["schedule.steps"], local keys only.
    std::map<std::string, std::vector<Table>> table_arrays;
};

Document parse(const std::string& text);
Document parse_file(const std::string& path);

} // namespace bdt::toml
