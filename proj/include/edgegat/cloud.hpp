#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "edgegat/error.hpp"

namespace edgegat {

using Vec3 = Eigen::Vector3d;

/// Semantic class of a point. The numeric ids are fixed project-wide.
enum class ClassLabel : std::uint8_t { soil = 0, stem = 1, leaf = 2 };

inline constexpr std::size_t kNumClasses = 3;

inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels = {ClassLabel::soil, ClassLabel::stem,
                                                                  ClassLabel::leaf};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Display colors: soil red, stem blue, leaf green.
constexpr Rgb class_color(ClassLabel label) noexcept {
  switch (label) {
    case ClassLabel::soil: return {255, 0, 0};
    case ClassLabel::stem: return {0, 0, 255};
    case ClassLabel::leaf: return {0, 255, 0};
  }
  return {};
}

constexpr std::string_view class_name(ClassLabel label) noexcept {
  switch (label) {
    case ClassLabel::soil: return "soil";
    case ClassLabel::stem: return "stem";
    case ClassLabel::leaf: return "leaf";
  }
  return "?";
}

constexpr std::size_t class_index(ClassLabel label) noexcept { return static_cast<std::size_t>(label); }

/// Converts an integer id, throwing DomainError outside {0,1,2}.
inline ClassLabel label_from_id(long long id) {
  if (id < 0 || id >= static_cast<long long>(kNumClasses)) {
    throw DomainError("class label " + std::to_string(id) + " outside {0,1,2}");
  }
  return static_cast<ClassLabel>(id);
}

/// An ordered set of finite 3D points.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const noexcept { return points.size(); }

  /// Throws DomainError if the cloud is empty or holds a non-finite coordinate.
  void validate() const {
    if (points.empty()) throw DomainError("point cloud is empty");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!points[i].allFinite()) {
        throw DomainError("point " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
  }
};

/// A cloud plus optional per-point labels. Unlabeled clouds carry std::nullopt and
/// are rejected by every training entry point.
struct LabeledCloud {
  PointCloud cloud;
  std::optional<std::vector<ClassLabel>> labels;

  std::size_t size() const noexcept { return cloud.size(); }
  bool is_labeled() const noexcept { return labels.has_value(); }

  void validate() const {
    cloud.validate();
    if (labels && labels->size() != cloud.size()) {
      throw DomainError("label count " + std::to_string(labels->size()) + " differs from point count " +
                        std::to_string(cloud.size()));
    }
  }

  const std::vector<ClassLabel>& require_labels() const {
    if (!labels) throw DomainError("cloud is unlabeled");
    return *labels;
  }
};

/// Length of the axis-aligned bounding-box diagonal.
inline double cloud_diameter(const PointCloud& cloud) {
  if (cloud.points.empty()) return 0.0;
  Vec3 lo = cloud.points.front();
  Vec3 hi = lo;
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

inline Vec3 cloud_centroid(const PointCloud& cloud) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : cloud.points) c += p;
  return cloud.points.empty() ? c : Vec3(c / static_cast<double>(cloud.points.size()));
}

/// Centers on the centroid and divides by the largest centroid distance, so the
/// result fits in the unit ball. A single-point (or all-coincident) cloud maps to the origin.
inline PointCloud normalize_cloud(const PointCloud& cloud) {
  const Vec3 c = cloud_centroid(cloud);
  double radius = 0.0;
  for (const auto& p : cloud.points) radius = std::max(radius, (p - c).norm());
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    out.points.push_back(radius > 0.0 ? Vec3((p - c) / radius) : Vec3::Zero());
  }
  return out;
}

inline LabeledCloud select_points(const LabeledCloud& in, const std::vector<std::size_t>& indices) {
  LabeledCloud out;
  out.cloud.points.reserve(indices.size());
  for (auto i : indices) out.cloud.points.push_back(in.cloud.points[i]);
  if (in.labels) {
    std::vector<ClassLabel> labels;
    labels.reserve(indices.size());
    for (auto i : indices) labels.push_back((*in.labels)[i]);
    out.labels = std::move(labels);
  }
  return out;
}

/// Uniform random subset of `n` points without replacement, original order kept.
/// Clouds with at most `n` points are returned unchanged.
inline LabeledCloud downsample(const LabeledCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("downsample target must be >= 1");
  if (cloud.size() <= n) return cloud;
  std::vector<std::size_t> all(cloud.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), n, rng);
  return select_points(cloud, chosen);
}

/// Random similarity transform plus jitter. Lengths are absolute; see
/// default_augment_params() for diameter-relative defaults.
struct AugmentParams {
  double jitter_sigma = 0.0;
  std::array<double, 2> rotation_range = {0.0, 2.0 * std::numbers::pi};  // radians about +z
  double translation_range = 0.0;                                         // per-axis, uniform in [-t, t]
  std::array<double, 2> scale_range = {0.9, 1.1};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(scale_range[0] > 0.0 && scale_range[1] > 0.0)) throw DomainError("scale bounds must be > 0");
    if (scale_range[0] > scale_range[1]) throw DomainError("scale range is inverted");
    if (rotation_range[0] > rotation_range[1]) throw DomainError("rotation range is inverted");
    if (!(jitter_sigma >= 0.0)) throw DomainError("jitter sigma must be >= 0");
    if (!(translation_range >= 0.0)) throw DomainError("translation range must be >= 0");
  }
};

/// Defaults scaled to the cloud: jitter 0.005 and translation 0.05 of the diameter.
inline AugmentParams default_augment_params(const PointCloud& cloud, std::uint64_t seed) {
  const double d = cloud_diameter(cloud);
  AugmentParams p;
  p.jitter_sigma = 0.005 * d;
  p.translation_range = 0.05 * d;
  p.seed = seed;
  return p;
}

/// Rotation about z, uniform scale (both about the centroid), translation, then
/// per-point Gaussian jitter. Labels are carried unchanged.
inline LabeledCloud augment(const LabeledCloud& in, const AugmentParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  auto draw = [&rng](double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double angle = draw(params.rotation_range[0], params.rotation_range[1]);
  const double scale = draw(params.scale_range[0], params.scale_range[1]);
  const double t = params.translation_range;
  const Vec3 shift(draw(-t, t), draw(-t, t), draw(-t, t));

  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d rot;
  rot << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  const Vec3 center = cloud_centroid(in.cloud);

  LabeledCloud out = in;
  std::normal_distribution<double> jitter(0.0, params.jitter_sigma > 0.0 ? params.jitter_sigma : 1.0);
  for (auto& p : out.cloud.points) {
    p = center + scale * (rot * (p - center)) + shift;
    if (params.jitter_sigma > 0.0) {
      p += Vec3(jitter(rng), jitter(rng), jitter(rng));
    }
  }
  return out;
}

}  // namespace edgegat
