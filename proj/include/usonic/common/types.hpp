#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string_view>
#include <vector>

namespace usonic {

/// Event classes, in one-hot order.
enum class ClassLabel : int { Corona = 0, Surface = 1, Floating = 2, GasLeak = 3, Background = 4 };

inline constexpr int kNumClasses = 5;

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::Corona, ClassLabel::Surface, ClassLabel::Floating, ClassLabel::GasLeak,
    ClassLabel::Background};

std::string_view to_string(ClassLabel label);

/// Throws std::invalid_argument for an unknown name. Accepts the names
/// produced by to_string().
ClassLabel parse_label(std::string_view name);

constexpr int index_of(ClassLabel label) { return static_cast<int>(label); }

inline bool is_discharge(ClassLabel label) {
  return label == ClassLabel::Corona || label == ClassLabel::Surface ||
         label == ClassLabel::Floating;
}

/// Single-channel waveform. Amplitudes are dimensionless.
struct MonoSignal {
  std::vector<double> samples;
  int sample_rate_hz = 96000;
  ClassLabel label = ClassLabel::Background;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

/// Mean of x^2, accumulated in double.
double mean_power(const std::vector<double>& x);

}  // namespace usonic
