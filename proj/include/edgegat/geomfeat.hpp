#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cctype>
#include <filesystem>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "edgegat/cloud.hpp"
#include "edgegat/error.hpp"
#include "edgegat/kdtree.hpp"

namespace edgegat {

using Mat3 = Eigen::Matrix3d;

/// Eigen-decomposition of a 3x3 symmetric PSD matrix, ascending eigenvalues.
struct EigenTriple {
  std::array<double, 3> values{};  // lambda0 <= lambda1 <= lambda2
  std::array<Vec3, 3> vectors{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};

  double sum() const noexcept { return values[0] + values[1] + values[2]; }
};

/// Column layout of the per-point descriptor.
enum FeatureColumn : std::size_t {
  kX = 0, kY, kZ, kNx, kNy, kNz,
  kCurvature, kLinearity, kPlanarity, kScattering, kOmnivariance, kAnisotropy, kEigenentropy,
  kNumFeatures
};

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "x", "y", "z", "nx", "ny", "nz", "curvature", "linearity", "planarity",
    "scattering", "omnivariance", "anisotropy", "eigenentropy"};

/// 13-d point descriptor: coordinates, normal, then seven eigenvalue scalars.
struct PointDescriptor {
  Vec3 xyz = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double curvature = 0, linearity = 0, planarity = 0, scattering = 0;
  double omnivariance = 0, anisotropy = 0, eigenentropy = 0;

  std::array<double, kNumFeatures> row() const {
    return {xyz.x(), xyz.y(), xyz.z(), normal.x(), normal.y(), normal.z(), curvature, linearity,
            planarity, scattering, omnivariance, anisotropy, eigenentropy};
  }
};

/// N x 13 row-major feature matrix, rows in cloud order.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ablation feature subsets: leading columns of the 13-d layout.
enum class FeatureSet { xyz, xyz_n, xyz_nc, xyz_nclpsoae };

constexpr std::size_t feature_width(FeatureSet fs) noexcept {
  switch (fs) {
    case FeatureSet::xyz: return 3;
    case FeatureSet::xyz_n: return 6;
    case FeatureSet::xyz_nc: return 7;
    case FeatureSet::xyz_nclpsoae: return 13;
  }
  return 13;
}

constexpr std::string_view feature_set_name(FeatureSet fs) noexcept {
  switch (fs) {
    case FeatureSet::xyz: return "XYZ";
    case FeatureSet::xyz_n: return "XYZ-N";
    case FeatureSet::xyz_nc: return "XYZ-NC";
    case FeatureSet::xyz_nclpsoae: return "XYZ-NCLPSOAE";
  }
  return "?";
}

/// Accepts the acronyms (case-insensitive); "13" and "all" alias the full set.
inline FeatureSet parse_feature_set(std::string_view text) {
  std::string s(text);
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s == "XYZ") return FeatureSet::xyz;
  if (s == "XYZ-N") return FeatureSet::xyz_n;
  if (s == "XYZ-NC") return FeatureSet::xyz_nc;
  if (s == "XYZ-NCLPSOAE" || s == "13" || s == "ALL") return FeatureSet::xyz_nclpsoae;
  throw ConfigError("unknown feature set '" + std::string(text) + "'");
}

inline FeatureMatrix select_features(const FeatureMatrix& full, FeatureSet fs) {
  return full.leftCols(static_cast<Eigen::Index>(feature_width(fs)));
}

/// Population covariance (divisor k) of the given neighbor points.
inline Mat3 covariance_of(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 c = Mat3::Zero();
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    c.noalias() += d * d.transpose();
  }
  return c / static_cast<double>(pts.size());
}

/// Covariance of the k nearest points to `index` (self excluded, ties to lower index).
inline Mat3 neighborhood_covariance(const KdTree& tree, std::size_t index, std::size_t k) {
  if (k < 3) throw DomainError("neighborhood size k must be >= 3, got " + std::to_string(k));
  if (tree.size() < k + 1) {
    throw DomainError("cloud of " + std::to_string(tree.size()) + " points too small for k=" + std::to_string(k));
  }
  const auto& pts = tree.points();
  const auto nbrs = tree.knn(pts[index], k, static_cast<std::uint32_t>(index));
  std::vector<Vec3> local;
  local.reserve(k);
  for (const auto& n : nbrs) local.push_back(pts[n.index]);
  return covariance_of(local);
}

inline Mat3 neighborhood_covariance(const PointCloud& cloud, std::size_t index, std::size_t k) {
  return neighborhood_covariance(KdTree(cloud.points), index, k);
}

/// Cyclic Jacobi eigen-solver for symmetric 3x3 matrices. Eigenvalues are sorted
/// ascending and clamped at zero; eigenvectors form a right-handed orthonormal basis.
inline EigenTriple eigen3(const Mat3& input) {
  const double scale = input.cwiseAbs().maxCoeff();
  if (!input.allFinite()) throw DomainError("eigen3: non-finite matrix");
  if ((input - input.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, scale)) {
    throw DomainError("eigen3: matrix is not symmetric");
  }
  Mat3 a = 0.5 * (input + input.transpose());
  Mat3 v = Mat3::Identity();
  if (scale > 0.0) {
    for (int sweep = 0; sweep < 50; ++sweep) {
      const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
      if (off <= 1e-30 * scale * scale) break;
      for (int p = 0; p < 2; ++p) {
        for (int q = p + 1; q < 3; ++q) {
          if (a(p, q) == 0.0) continue;
          const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
          const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          Mat3 rot = Mat3::Identity();
          rot(p, p) = c;
          rot(q, q) = c;
          rot(p, q) = s;
          rot(q, p) = -s;
          a = rot.transpose() * a * rot;
          a(p, q) = a(q, p) = 0.0;
          v = v * rot;
        }
      }
    }
  }
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });
  EigenTriple out;
  for (int i = 0; i < 3; ++i) {
    out.values[i] = std::max(0.0, a(order[i], order[i]));
    out.vectors[i] = v.col(order[i]).normalized();
  }
  if (out.vectors[0].cross(out.vectors[1]).dot(out.vectors[2]) < 0.0) out.vectors[2] = -out.vectors[2];
  return out;
}

/// Flips `n` so that n_z >= 0, falling back to n_y and then n_x on exact zeros.
inline Vec3 orient_normal(Vec3 n) {
  const bool flip = n.z() < 0.0 || (n.z() == 0.0 && (n.y() < 0.0 || (n.y() == 0.0 && n.x() < 0.0)));
  return flip ? Vec3(-n) : n;
}

/// Eigen-features of one point. `degenerate_eps` is the eigenvalue-sum threshold
/// below which every scalar is 0 and the normal is +z.
inline PointDescriptor descriptor(const EigenTriple& triple, const Vec3& xyz, double degenerate_eps = 0.0) {
  PointDescriptor d;
  d.xyz = xyz;
  const double l0 = triple.values[0], l1 = triple.values[1], l2 = triple.values[2];
  const double sum = l0 + l1 + l2;
  if (!(sum > degenerate_eps) || !(l2 > 0.0)) {
    d.normal = Vec3::UnitZ();
    return d;
  }
  d.normal = orient_normal(triple.vectors[0].normalized());
  d.curvature = l0 / sum;
  d.linearity = (l2 - l1) / l2;
  d.planarity = (l1 - l0) / l2;
  d.scattering = l0 / l2;
  d.omnivariance = std::cbrt(l0 * l1 * l2);
  d.anisotropy = (l2 - l0) / l2;
  double entropy = 0.0;
  for (double l : triple.values) {
    const double p = l / sum;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  d.eigenentropy = entropy;
  return d;
}

/// Relative threshold used for degenerate neighborhoods.
inline double degenerate_threshold(const PointCloud& cloud) {
  const double diam = cloud_diameter(cloud);
  return 1e-12 * diam * diam;
}

/// Per-point 13-d descriptors from k-nearest-neighbor PCA.
inline FeatureMatrix featurize(const PointCloud& cloud, std::size_t k_features = 16) {
  cloud.validate();
  if (k_features < 3) throw DomainError("k_features must be >= 3");
  if (cloud.size() < k_features + 1) {
    throw DomainError("cloud of " + std::to_string(cloud.size()) + " points too small for k_features=" +
                      std::to_string(k_features));
  }
  const KdTree tree(cloud.points);
  const double eps = degenerate_threshold(cloud);
  FeatureMatrix out(static_cast<Eigen::Index>(cloud.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto d = descriptor(eigen3(neighborhood_covariance(tree, i, k_features)), cloud.points[i], eps);
    const auto row = d.row();
    for (std::size_t c = 0; c < kNumFeatures; ++c) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
  }
  return out;
}

/// Writes the feature CSV: header of feature names (plus `label` when given), one row per point.
inline void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& features, FeatureSet fs,
                              const std::vector<ClassLabel>* labels = nullptr) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto width = feature_width(fs);
  for (std::size_t c = 0; c < width; ++c) out << (c ? "," : "") << kFeatureNames[c];
  if (labels) out << ",label";
  out << '\n';
  out.precision(17);
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < width; ++c) out << (c ? "," : "") << features(r, static_cast<Eigen::Index>(c));
    if (labels) out << ',' << class_index((*labels)[static_cast<std::size_t>(r)]);
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace edgegat
