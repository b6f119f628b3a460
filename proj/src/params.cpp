#include "bdt/params.hpp"

#include "bdt/errors.hpp"
#include "bdt/tomlmini.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace bdt {

namespace {

void require_pos(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw InputError(std::string("cell parameter ") + name + " must be strictly positive");
}

} // namespace

void CellParameters::validate() const {
#define BDT_POS(f) require_pos(f, #f)
    BDT_POS(D_n); BDT_POS(D_p); BDT_POS(k_n); BDT_POS(k_p);
    BDT_POS(R_part_n); BDT_POS(R_part_p); BDT_POS(L_n); BDT_POS(L_p);
    BDT_POS(A_cell); BDT_POS(c_max_n); BDT_POS(c_max_p);
    BDT_POS(R0); BDT_POS(C_th); BDT_POS(hA); BDT_POS(c_e);
    BDT_POS(T_ref); BDT_POS(Q_nom);
#undef BDT_POS
    if (!(Ea_D >= 0.0 && Ea_k >= 0.0))
        throw InputError("activation energies must be non-negative");
    if (!(eps_n > 0.0 && eps_n < 1.0) || !(eps_p > 0.0 && eps_p < 1.0))
        throw InputError("active-material volume fractions must lie in (0,1)");
    auto check_window = [](double lo, double hi, const char* e) {
        if (!(0.0 < lo && lo < hi && hi < 1.0))
            throw InputError(std::string("stoichiometry window invalid for ") + e +
                             " electrode (need 0 < min < max < 1)");
    };
    check_window(x_n_min, x_n_max, "negative");
    check_window(x_p_min, x_p_max, "positive");
}

namespace {

struct FieldRef {
    const char* section;
    const char* key;
    double CellParameters::* member;
};

const FieldRef kFields[] = {
    {"electrochemical", "D_n", &CellParameters::D_n},
    {"electrochemical", "D_p", &CellParameters::D_p},
    {"electrochemical", "k_n", &CellParameters::k_n},
    {"electrochemical", "k_p", &CellParameters::k_p},
    {"electrochemical", "R_part_n", &CellParameters::R_part_n},
    {"electrochemical", "R_part_p", &CellParameters::R_part_p},
    {"electrochemical", "eps_n", &CellParameters::eps_n},
    {"electrochemical", "eps_p", &CellParameters::eps_p},
    {"electrochemical", "L_n", &CellParameters::L_n},
    {"electrochemical", "L_p", &CellParameters::L_p},
    {"electrochemical", "A_cell", &CellParameters::A_cell},
    {"electrochemical", "c_max_n", &CellParameters::c_max_n},
    {"electrochemical", "c_max_p", &CellParameters::c_max_p},
    {"electrochemical", "R0", &CellParameters::R0},
    {"electrochemical", "c_e", &CellParameters::c_e},
    {"electrochemical", "Q_nom", &CellParameters::Q_nom},
    {"electrochemical", "Ea_D", &CellParameters::Ea_D},
    {"electrochemical", "Ea_k", &CellParameters::Ea_k},
    {"thermal", "C_th", &CellParameters::C_th},
    {"thermal", "hA", &CellParameters::hA},
    {"thermal", "T_ref", &CellParameters::T_ref},
    {"windows", "x_n_min", &CellParameters::x_n_min},
    {"windows", "x_n_max", &CellParameters::x_n_max},
    {"windows", "x_p_min", &CellParameters::x_p_min},
    {"windows", "x_p_max", &CellParameters::x_p_max},
};

} // namespace

CellConfig CellConfig::load(const std::string& path) {
    toml::Document doc = toml::parse_file(path);
    CellConfig cfg;
    for (const FieldRef& f : kFields) {
        std::string key = std::string(f.section) + "." + f.key;
        cfg.params.*(f.member) = doc.root.num_or(key, cfg.params.*(f.member));
    }
    cfg.params.entropic_heat = doc.root.flag_or("thermal.entropic_heat", false);

    auto load_ocp = [&](const char* section, Electrode e) -> OcpTable {
        std::string xs = std::string("ocp.") + section + ".x";
        std::string us = std::string("ocp.") + section + ".u";
        if (doc.root.arrays.count(xs) || doc.root.arrays.count(us))
            return OcpTable(doc.root.num_array(xs), doc.root.num_array(us), e);
        return OcpTable::default_table(e);
    };
    cfg.ocp_n = load_ocp("negative", Electrode::Negative);
    cfg.ocp_p = load_ocp("positive", Electrode::Positive);
    cfg.params.validate();
    return cfg;
}

void CellConfig::save(const std::string& path, const std::string& comment) const {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write parameter file: " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    f.setf(std::ios::scientific);
    f.precision(12);
    const char* cur_section = "";
    for (const FieldRef& fr : kFields) {
        if (std::string(cur_section) != fr.section) {
            cur_section = fr.section;
            f << "\n[" << cur_section << "]\n";
        }
        f << fr.key << " = " << params.*(fr.member) << "\n";
    }
    f << "\n[thermal]\nentropic_heat = " << (params.entropic_heat ? "true" : "false") << "\n";
    auto dump_ocp = [&](const char* name, const OcpTable& t) {
        f << "\n[ocp." << name << "]\nx = [";
        for (size_t i = 0; i < t.knots_x().size(); ++i)
            f << (i ? ", " : "") << t.knots_x()[i];
        f << "]\nu = [";
        for (size_t i = 0; i < t.knots_u().size(); ++i)
            f << (i ? ", " : "") << t.knots_u()[i];
        f << "]\n";
    };
    dump_ocp("negative", ocp_n);
    dump_ocp("positive", ocp_p);
    if (!f) throw InputError("write failed: " + path);
}

double* field_ptr(CellParameters& p, const std::string& name) {
    for (const FieldRef& f : kFields)
        if (name == f.key) return &(p.*(f.member));
    return nullptr;
}

unsigned long long hash_bytes(const std::string& bytes) {
    unsigned long long h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

unsigned long long hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return hash_bytes(ss.str());
}

} // namespace bdt
