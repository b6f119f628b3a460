#pragma once

namespace bdt {

inline constexpr double kFaraday = 96485.33212;  // C/mol
inline constexpr double kGasConst = 8.314462618; // J/(mol K)
inline constexpr double kCelsiusOffset = 273.15;

} // namespace bdt
