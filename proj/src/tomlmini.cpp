#include "bdt/tomlmini.hpp"

#include "bdt/errors.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace bdt::toml {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"') in_str = !in_str;
        if (c == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

Scalar parse_scalar(const std::string& tok, int line_no) {
    std::string t = trim(tok);
    if (t.empty()) throw InputError("toml: empty value at line " + std::to_string(line_no));
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"')
            throw InputError("toml: unterminated string at line " + std::to_string(line_no));
        return t.substr(1, t.size() - 2);
    }
    if (t == "true") return true;
    if (t == "false") return false;
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0')
        throw InputError("toml: cannot parse value '" + t + "' at line " + std::to_string(line_no));
    return v;
}

std::vector<Scalar> parse_array(const std::string& body, int line_no) {
    std::vector<Scalar> out;
    std::string cur;
    bool in_str = false;
    for (char c : body) {
        if (c == '"') in_str = !in_str;
        if (c == ',' && !in_str) {
            if (!trim(cur).empty()) out.push_back(parse_scalar(cur, line_no));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty()) out.push_back(parse_scalar(cur, line_no));
    return out;
}

} // namespace

double Table::num(const std::string& key) const {
    auto it = scalars.find(key);
    if (it == scalars.end()) throw InputError("toml: missing key '" + key + "'");
    if (const double* v = std::get_if<double>(&it->second)) return *v;
    throw InputError("toml: key '" + key + "' is not a number");
}

double Table::num_or(const std::string& key, double fallback) const {
    auto it = scalars.find(key);
    if (it == scalars.end()) return fallback;
    if (const double* v = std::get_if<double>(&it->second)) return *v;
    throw InputError("toml: key '" + key + "' is not a number");
}

std::string Table::str(const std::string& key) const {
    auto it = scalars.find(key);
    if (it == scalars.end()) throw InputError("toml: missing key '" + key + "'");
    if (const std::string* v = std::get_if<std::string>(&it->second)) return *v;
    throw InputError("toml: key '" + key + "' is not a string");
}

std::string Table::str_or(const std::string& key, const std::string& fallback) const {
    auto it = scalars.find(key);
    if (it == scalars.end()) return fallback;
    if (const std::string* v = std::get_if<std::string>(&it->second)) return *v;
    throw InputError("toml: key '" + key + "' is not a string");
}

bool Table::flag_or(const std::string& key, bool fallback) const {
    auto it = scalars.find(key);
    if (it == scalars.end()) return fallback;
    if (const bool* v = std::get_if<bool>(&it->second)) return *v;
    throw InputError("toml: key '" + key + "' is not a boolean");
}

std::vector<double> Table::num_array(const std::string& key) const {
    auto it = arrays.find(key);
    if (it == arrays.end()) throw InputError("toml: missing array '" + key + "'");
    std::vector<double> out;
    out.reserve(it->second.size());
    for (const Scalar& s : it->second) {
        if (const double* v = std::get_if<double>(&s)) out.push_back(*v);
        else throw InputError("toml: array '" + key + "' has non-numeric entries");
    }
    return out;
}

Document parse(const std::string& text) {
    Document doc;
    std::string section;      // current [section] prefix (with trailing dot) or ""
    Table* target = &doc.root;
    bool target_is_array = false;

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;

        if (line.size() >= 4 && line.substr(0, 2) == "[[" && line.substr(line.size() - 2) == "]]") {
            std::string path = trim(line.substr(2, line.size() - 4));
            if (path.empty()) throw InputError("toml: empty table-array name at line " + std::to_string(line_no));
            doc.table_arrays[path].emplace_back();
            target = &doc.table_arrays[path].back();
            target_is_array = true;
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw InputError("toml: empty section name at line " + std::to_string(line_no));
            section += '.';
            target = &doc.root;
            target_is_array = false;
            continue;
        }

        size_t eq = std::string::npos;
        {
            bool in_str = false;
            for (size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') in_str = !in_str;
                if (line[i] == '=' && !in_str) { eq = i; break; }
            }
        }
        if (eq == std::string::npos)
            throw InputError("toml: expected 'key = value' at line " + std::to_string(line_no));
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw InputError("toml: empty key at line " + std::to_string(line_no));
        if (!target_is_array) key = section + key;

        if (!val.empty() && val.front() == '[') {
            // Arrays may span lines; accumulate until the matching ']'.
            std::string body = val.substr(1);
            while (body.find(']') == std::string::npos) {
                if (!std::getline(in, raw))
                    throw InputError("toml: unterminated array at line " + std::to_string(line_no));
                ++line_no;
                body += trim(strip_comment(raw));
            }
            body = body.substr(0, body.find(']'));
            target->arrays[key] = parse_array(body, line_no);
        } else {
            target->scalars[key] = parse_scalar(val, line_no);
        }
    }
    return doc;
}

Document parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

} // namespace bdt::toml
