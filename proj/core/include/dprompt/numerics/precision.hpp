#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dprompt::num {

/// Global floating-point width. f64 backs the gradient-check suites; f32 is the default for
/// training and scoring.
enum class Precision { f32, f64 };

inline std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision parse_precision(std::string_view s) {
  if (s == "f32" || s == "float" || s == "32") return Precision::f32;
  if (s == "f64" || s == "double" || s == "64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

/// Calls fn.template operator()<T>() with T matching the precision.
template <typename Fn>
decltype(auto) dispatch(Precision p, Fn&& fn) {
  if (p == Precision::f64) return fn.template operator()<double>();
  return fn.template operator()<float>();
}

}  // namespace dprompt::num
