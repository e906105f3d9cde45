// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fastpoint/error.hpp"
#include "fastpoint/refiner_features.hpp"

namespace fastpoint {
namespace {

const CropRange kWorld{{0, 8}, {-4, 4}, {-3, 1}};

FeatureMap ramp_map() {
  // 4 rows x 2 cols, channel 0 = row, channel 1 = col.
  FeatureMap m{4, 2, 2, {}};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      m.data.push_back(static_cast<double>(r));
      m.data.push_back(static_cast<double>(c));
    }
  return m;
}

TEST(FeatureMap, FromChannelFirstTensor) {
  const nn::Tensor t({2, 1, 2}, {1, 2, 3, 4});
  const FeatureMap m = feature_map_from_tensor(t);
  EXPECT_EQ(m.rows, 1u);
  EXPECT_EQ(m.cols, 2u);
  EXPECT_EQ(m.at(0, 1)[0], 2.0);
  EXPECT_EQ(m.at(0, 1)[1], 4.0);
}

TEST(FeatureCell, FloorsAndClamps) {
  const FeatureMap m = ramp_map();
  EXPECT_EQ(feature_cell(0.0, -4.0, m, kWorld), (std::array<std::size_t, 2>{0, 0}));
  EXPECT_EQ(feature_cell(4.0, 1.9, m, kWorld), (std::array<std::size_t, 2>{1, 2}));
  EXPECT_EQ(feature_cell(99.0, -99.0, m, kWorld), (std::array<std::size_t, 2>{1, 0}));
  const auto f = lookup_feature(5.0, 3.5, m, kWorld);
  EXPECT_EQ(f[0], 3.0);
  EXPECT_EQ(f[1], 1.0);
}

TEST(BoxFeature, CanonizedCoordsAndLookedUpFeatures) {
  const FeatureMap m = ramp_map();
  const Box3D proposal{5, 1, -1, 2, 2, 2, kPi / 2};
  const PointCloud pts{{5, 1.5, -1, 0}, {5.2, 1.0, -0.5, 0}, {0.5, -3.5, -1, 0}};
  const BoxFeature f = build_box_feature(pts, m, kWorld, proposal, 0.7);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_NEAR(f.coords[0].x, 0.5, 1e-12);
  EXPECT_NEAR(f.coords[0].y, 0.0, 1e-12);
  EXPECT_NEAR(f.coords[1].y, -0.2, 1e-12);
  EXPECT_EQ(f.features[0], 2.0);
  EXPECT_EQ(f.features[1], 1.0);
  EXPECT_EQ(f.score, 0.7);
}

TEST(BoxFeature, MarginWidensTheCrop) {
  const FeatureMap m = ramp_map();
  const Box3D proposal{5, 1, -1, 2, 2, 2, 0};
  const PointCloud pts{{6.2, 1, -1, 0}};
  EXPECT_THROW(build_box_feature(pts, m, kWorld, proposal, 0.5, 0.1), EmptyProposal);
  EXPECT_EQ(build_box_feature(pts, m, kWorld, proposal, 0.5, 0.3).size(), 1u);
  EXPECT_EQ(crop_points(pts, proposal, 0.3).size(), 1u);
}

}  // namespace
}  // namespace fastpoint
