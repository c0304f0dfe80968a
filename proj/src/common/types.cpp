#include "usonic/common/types.hpp"

#include <stdexcept>
#include <string>

namespace usonic {

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::Corona: return "Corona";
    case ClassLabel::Surface: return "Surface";
    case ClassLabel::Floating: return "Floating";
    case ClassLabel::GasLeak: return "GasLeak";
    case ClassLabel::Background: return "Background";
  }
  throw std::invalid_argument("invalid ClassLabel value");
}

ClassLabel parse_label(std::string_view name) {
  for (ClassLabel c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  throw std::invalid_argument("unknown class label '" + std::string(name) + "'");
}

double mean_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

}  // namespace usonic
