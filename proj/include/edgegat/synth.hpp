#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "edgegat/cloud.hpp"
#include "edgegat/error.hpp"

namespace edgegat {

/// Generates a maize-like labeled cloud: a noisy ground disk (soil), a vertical
/// cylinder (stem) and 4-8 arched elongated blades leaving the stem (leaf).
/// Class shares are drawn around 50/30/20 leaf/soil/stem with +-3 point spread.
/// Units are meters; `noise` is the standard deviation of the Gaussian jitter.
inline LabeledCloud synth_maize(std::size_t n_points, std::uint64_t seed, double noise = 0.003) {
  if (n_points < 100) throw DomainError("synth_maize needs at least 100 points");
  if (!(noise >= 0.0)) throw DomainError("noise must be >= 0");
  constexpr double pi = std::numbers::pi;

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto jitter = [&]() { return noise > 0.0 ? Vec3(noise * gauss(rng), noise * gauss(rng), noise * gauss(rng)) : Vec3::Zero(); };

  const double n = static_cast<double>(n_points);
  const auto n_soil = static_cast<std::size_t>(std::lround(n * (0.30 + uniform(-0.03, 0.03))));
  const auto n_stem = static_cast<std::size_t>(std::lround(n * (0.20 + uniform(-0.03, 0.03))));
  const std::size_t n_leaf = n_points - n_soil - n_stem;

  const double stem_radius = uniform(0.012, 0.022);
  const double stem_height = uniform(0.8, 1.3);
  const double soil_radius = uniform(0.35, 0.5);
  const double soil_hole = 2.5 * stem_radius;
  const double tilt_x = uniform(-0.03, 0.03), tilt_y = uniform(-0.03, 0.03);

  LabeledCloud out;
  out.cloud.points.reserve(n_points);
  std::vector<ClassLabel> labels;
  labels.reserve(n_points);

  // Soil: annulus around the stem base on a gently tilted, undulating ground.
  const double wave_phase = uniform(0.0, 2.0 * pi);
  for (std::size_t i = 0; i < n_soil; ++i) {
    const double r = std::sqrt(uniform(soil_hole * soil_hole, soil_radius * soil_radius));
    const double a = uniform(0.0, 2.0 * pi);
    const double x = r * std::cos(a), y = r * std::sin(a);
    const double z = tilt_x * x + tilt_y * y + 0.01 * std::sin(8.0 * x + wave_phase) * std::cos(6.0 * y);
    out.cloud.points.push_back(Vec3(x, y, z) + jitter());
    labels.push_back(ClassLabel::soil);
  }

  // Stem: cylinder surface from the ground to the top, tapering slightly.
  for (std::size_t i = 0; i < n_stem; ++i) {
    const double h = uniform(0.0, stem_height);
    const double r = stem_radius * (1.0 - 0.4 * h / stem_height);
    const double a = uniform(0.0, 2.0 * pi);
    out.cloud.points.push_back(Vec3(r * std::cos(a), r * std::sin(a), h) + jitter());
    labels.push_back(ClassLabel::stem);
  }

  // Leaves: arched blades. Each blade starts a few millimeters off the stem
  // surface and points are spread by area along a tapered width profile.
  const int n_blades = static_cast<int>(std::uniform_int_distribution<int>(4, 8)(rng));
  struct Blade {
    double height, azimuth, length, width, rise, droop, twist;
  };
  std::vector<Blade> blades;
  double azimuth = uniform(0.0, 2.0 * pi);
  for (int b = 0; b < n_blades; ++b) {
    Blade bl;
    bl.height = stem_height * (0.2 + 0.7 * (b + uniform(0.2, 0.8)) / n_blades);
    bl.azimuth = azimuth;
    azimuth += pi + uniform(-0.5, 0.5);
    bl.length = uniform(0.3, 0.6);
    bl.width = uniform(0.04, 0.08);
    bl.rise = uniform(0.6, 1.0);
    bl.droop = uniform(1.0, 1.8);
    bl.twist = uniform(-0.4, 0.4);
    blades.push_back(bl);
  }
  std::vector<double> blade_weight(blades.size());
  for (std::size_t b = 0; b < blades.size(); ++b) blade_weight[b] = blades[b].length * blades[b].width;
  std::discrete_distribution<std::size_t> pick_blade(blade_weight.begin(), blade_weight.end());

  auto width_profile = [](double t) { return std::pow(std::sin(pi * std::clamp(t, 0.0, 1.0)), 0.6); };
  for (std::size_t i = 0; i < n_leaf; ++i) {
    const Blade& bl = blades[pick_blade(rng)];
    double t = 0.0;
    // Rejection sampling so point density follows the width profile.
    do {
      t = uniform(0.0, 1.0);
    } while (uniform(0.0, 1.0) > width_profile(t));
    const double s = uniform(-0.5, 0.5) * bl.width * width_profile(t);

    const double elevation = bl.rise - bl.droop * t;  // radians, arching downward
    const double along = bl.length * t;
    // Integrate the arched centerline in closed form: d/dt (h, v) = L (cos e, sin e).
    const double e0 = bl.rise, e1 = elevation;
    const double horiz = std::abs(e1 - e0) > 1e-12 ? bl.length * (std::sin(e0) - std::sin(e1)) / bl.droop
                                                   : along * std::cos(e0);
    const double vert = std::abs(e1 - e0) > 1e-12 ? bl.length * (std::cos(e1) - std::cos(e0)) / bl.droop
                                                  : along * std::sin(e0);
    const double base = stem_radius + 0.012;
    const Vec3 dir(std::cos(bl.azimuth), std::sin(bl.azimuth), 0.0);
    const Vec3 side(-std::sin(bl.azimuth), std::cos(bl.azimuth), 0.0);
    const double tw = bl.twist * t;
    Vec3 p = dir * (base + horiz) + Vec3(0.0, 0.0, bl.height + vert);
    p += s * (std::cos(tw) * side + std::sin(tw) * Vec3::UnitZ());
    out.cloud.points.push_back(p + jitter());
    labels.push_back(ClassLabel::leaf);
  }

  out.labels = std::move(labels);
  return out;
}

}  // namespace edgegat
