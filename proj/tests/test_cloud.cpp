#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "edgegat/cloud_io.hpp"
#include "edgegat/synth.hpp"
#include "oracles.hpp"

using namespace edgegat;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "edgegat_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

double pair_dist(const PointCloud& c, std::size_t i, std::size_t j) { return (c.points[i] - c.points[j]).norm(); }

}  // namespace

TEST(Cloud, ClassColorsAreFixed) {
  EXPECT_EQ(class_color(ClassLabel::leaf), (Rgb{0, 255, 0}));
  EXPECT_EQ(class_color(ClassLabel::soil), (Rgb{255, 0, 0}));
  EXPECT_EQ(class_color(ClassLabel::stem), (Rgb{0, 0, 255}));
  EXPECT_THROW(label_from_id(3), DomainError);
  EXPECT_THROW(label_from_id(-1), DomainError);
}

TEST(CloudIo, SingleRecord) {
  const auto p = temp_file("one.xyz");
  write_text(p, "0 0 0 2\n");
  const auto c = read_cloud(p);
  ASSERT_EQ(c.size(), 1u);
  ASSERT_TRUE(c.is_labeled());
  EXPECT_EQ((*c.labels)[0], ClassLabel::leaf);
}

TEST(CloudIo, NanIsAParseErrorOnItsLine) {
  const auto p = temp_file("nan.xyz");
  write_text(p, "0 0 nan 1\n");
  try {
    read_cloud(p);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
  write_text(p, "# comment\n1 2 3 0\n1 2 x 0\n");
  try {
    read_cloud(p);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(CloudIo, LabelOutOfRangeIsDomainError) {
  const auto p = temp_file("badlabel.xyz");
  write_text(p, "0 0 0 7\n");
  EXPECT_THROW(read_cloud(p), DomainError);
}

TEST(CloudIo, UnlabeledFileHasNoLabels) {
  const auto p = temp_file("nolabel.xyz");
  write_text(p, "0 0 0\n1 1 1\n");
  const auto c = read_cloud(p);
  EXPECT_FALSE(c.is_labeled());
  EXPECT_THROW(c.require_labels(), DomainError);
}

TEST(CloudIo, MissingFileIsIoError) { EXPECT_THROW(read_cloud("/nonexistent/dir/x.xyz"), IoError); }

TEST(CloudIo, XyzRoundTripIsExact) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::uniform_int_distribution<int> lab(0, 2);
  LabeledCloud c;
  std::vector<ClassLabel> labels;
  for (int i = 0; i < 50000; ++i) {
    c.cloud.points.emplace_back(u(rng), u(rng), u(rng) * 1e-7);
    labels.push_back(label_from_id(lab(rng)));
  }
  c.labels = labels;
  const auto p = temp_file("rt.xyz");
  write_cloud(c, p, CloudFormat::xyz_label);
  const auto back = read_cloud(p);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    ASSERT_EQ(back.cloud.points[i], c.cloud.points[i]) << i;
    ASSERT_EQ((*back.labels)[i], labels[i]);
  }
}

TEST(CloudIo, PlyColorsFollowClassMap) {
  LabeledCloud c;
  c.cloud.points = {Vec3(0.5, 1, 2), Vec3(3, 4, 5)};
  c.labels = std::vector<ClassLabel>{ClassLabel::stem, ClassLabel::soil};
  const auto text = format_cloud(c, CloudFormat::ply_ascii);
  EXPECT_NE(text.find("0.5 1 2 0 0 255 1\n"), std::string::npos) << text;
  EXPECT_NE(text.find("3 4 5 255 0 0 0\n"), std::string::npos) << text;
  const auto p = temp_file("c.ply");
  write_cloud(c, p, CloudFormat::ply_ascii);
  const auto back = read_cloud(p);
  EXPECT_EQ(back.cloud.points, c.cloud.points);
  EXPECT_EQ(*back.labels, *c.labels);
}

TEST(CloudIo, PlyHeaderErrors) {
  const auto p = temp_file("bad.ply");
  write_text(p, "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n");
  EXPECT_THROW(read_cloud(p), ParseError);
  write_text(p, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
                "end_header\n1 2 3\n");
  EXPECT_THROW(read_cloud(p), ParseError);
}

TEST(CloudIo, UnwritablePathIsIoError) {
  LabeledCloud c;
  c.cloud.points = {Vec3(0, 0, 0)};
  EXPECT_THROW(write_cloud(c, "/nonexistent/dir/out.xyz", CloudFormat::xyz_label), IoError);
}

TEST(Downsample, SubsetOfRequestedSize) {
  const auto c = synth_maize(5000, 3);
  const auto d = downsample(c, 1024, 11);
  ASSERT_EQ(d.size(), 1024u);
  std::set<std::tuple<double, double, double>> in;
  for (const auto& p : c.cloud.points) in.emplace(p.x(), p.y(), p.z());
  std::set<std::tuple<double, double, double>> seen;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& p = d.cloud.points[i];
    EXPECT_TRUE(in.count({p.x(), p.y(), p.z()}));
    seen.emplace(p.x(), p.y(), p.z());
  }
  EXPECT_EQ(seen.size(), 1024u);  // without replacement
  const auto again = downsample(c, 1024, 11);
  EXPECT_EQ(again.cloud.points, d.cloud.points);
  EXPECT_EQ(*again.labels, *d.labels);
}

TEST(Downsample, LabelsTravelWithPoints) {
  LabeledCloud c;
  std::vector<ClassLabel> labels;
  for (int i = 0; i < 100; ++i) {
    c.cloud.points.emplace_back(i, 0, 0);
    labels.push_back(label_from_id(i % 3));
  }
  c.labels = labels;
  const auto d = downsample(c, 10, 5);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(class_index((*d.labels)[i]), static_cast<std::size_t>(d.cloud.points[i].x()) % 3);
  }
}

TEST(Downsample, SmallCloudUnchangedAndZeroRejected) {
  const auto c = synth_maize(800, 2);
  const auto d = downsample(c, 1024, 1);
  EXPECT_EQ(d.cloud.points, c.cloud.points);
  EXPECT_THROW(downsample(c, 0, 1), DomainError);
}

TEST(Augment, IdentityComposition) {
  const auto c = synth_maize(300, 4);
  AugmentParams p;
  p.rotation_range = {2 * std::numbers::pi, 2 * std::numbers::pi};
  p.scale_range = {1, 1};
  const auto a = augment(c, p);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((a.cloud.points[i] - c.cloud.points[i]).norm(), 1e-9);
  EXPECT_EQ(*a.labels, *c.labels);
}

TEST(Augment, ScaleDoublesDistances) {
  const auto c = synth_maize(200, 5);
  AugmentParams p;
  p.rotation_range = {0, 0};
  p.scale_range = {2, 2};
  const auto a = augment(c, p);
  for (std::size_t i = 0; i + 1 < c.size(); i += 7) {
    EXPECT_NEAR(pair_dist(a.cloud, i, i + 1), 2 * pair_dist(c.cloud, i, i + 1), 1e-12);
  }
}

TEST(Augment, RigidMotionPreservesDistances) {
  const auto c = synth_maize(200, 6);
  AugmentParams p;
  p.scale_range = {1, 1};
  p.translation_range = 0.3;
  p.seed = 99;
  const auto a = augment(c, p);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); j += 13) {
      EXPECT_NEAR(pair_dist(a.cloud, i, j), pair_dist(c.cloud, i, j), 1e-9);
    }
  }
  EXPECT_EQ(augment(c, p).cloud.points, a.cloud.points);
}

TEST(Augment, InvalidParamsRejected) {
  const auto c = synth_maize(200, 6);
  AugmentParams p;
  p.scale_range = {0.0, 1.0};
  EXPECT_THROW(augment(c, p), DomainError);
  p = AugmentParams{};
  p.jitter_sigma = -1;
  EXPECT_THROW(augment(c, p), DomainError);
}

TEST(Synth, ContractAndProportions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = synth_maize(1024, seed);
    ASSERT_EQ(c.size(), 1024u);
    ASSERT_TRUE(c.is_labeled());
    std::array<double, 3> frac{};
    for (auto l : *c.labels) frac[class_index(l)] += 1.0 / 1024.0;
    EXPECT_NEAR(frac[class_index(ClassLabel::leaf)], 0.50, 0.10);
    EXPECT_NEAR(frac[class_index(ClassLabel::soil)], 0.30, 0.10);
    EXPECT_NEAR(frac[class_index(ClassLabel::stem)], 0.20, 0.10);
    for (double f : frac) EXPECT_GT(f, 0.0);
  }
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = synth_maize(1024, 42), b = synth_maize(1024, 42), c = synth_maize(1024, 43);
  EXPECT_EQ(a.cloud.points, b.cloud.points);
  EXPECT_EQ(*a.labels, *b.labels);
  EXPECT_NE(a.cloud.points, c.cloud.points);
  EXPECT_THROW(synth_maize(99, 1), DomainError);
}

TEST(Normalize, FitsUnitBallAtOrigin) {
  const auto c = synth_maize(500, 8);
  const auto n = normalize_cloud(c.cloud);
  EXPECT_LT(cloud_centroid(n).norm(), 1e-12);
  double r = 0;
  for (const auto& p : n.points) r = std::max(r, p.norm());
  EXPECT_NEAR(r, 1.0, 1e-12);
}
