#pragma once

#include <string>
#include <vector>

namespace bdt {

enum class Electrode { Negative, Positive };

std::string electrode_name(Electrode e);

// Open-circuit potential curve: monotone cubic (Fritsch-Carlson) interpolation
// over strictly decreasing breakpoints on stoichiometry in [0, 1].
class OcpTable {
public:
    OcpTable(std::vector<double> x, std::vector<double> u, Electrode tag);

    // Potential at stoichiometry in [0, 1]; throws InputError outside.
    double eval(double stoich) const;
    // dU/dx at the given stoichiometry.
    double slope(double stoich) const;

    const std::vector<double>& knots_x() const { return x_; }
    const std::vector<double>& knots_u() const { return u_; }
    Electrode tag() const { return tag_; }

    static OcpTable default_table(Electrode e);

private:
    std::vector<double> x_, u_, d_; // knots and endpoint derivatives per knot
    Electrode tag_;
};

} // namespace bdt
