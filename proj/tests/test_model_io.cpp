#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ieclof/injector.hpp"
#include "ieclof/model_io.hpp"
#include "test_util.hpp"

using namespace ieclof;

TEST(ModelIo, SaveLoadPreservesScores) {
  auto dir = ieclof::test::scratch_dir();
  auto s = extract_merged(generate_normal({.period = 1.0, .jitter_fraction = 0.02, .count = 7001, .seed = 8}));
  WindowConfig cfg;
  cfg.window_size = 3000;
  auto set = train(s, cfg);
  save_model(set, dir / "m.lof");
  auto back = load_model(dir / "m.lof");
  EXPECT_EQ(back.models().size(), 3u);
  EXPECT_EQ(back.threshold(), set.threshold());
  EXPECT_EQ(back.k(), cfg.k);
  for (double q : {0.5, 0.99, 1.0, 1.015, 3.0, 60.0}) EXPECT_EQ(back.score(q), set.score(q));
}

TEST(ModelIo, DuplicatePointsSurviveInfinity) {
  auto dir = ieclof::test::scratch_dir();
  FeatureSeries s;
  for (std::size_t i = 1; i <= 100; ++i) s.samples.push_back({i, 1.0, Timestamp{}});
  WindowConfig cfg;
  cfg.policy = ThresholdPolicy::auto_quantile;
  auto set = train(s, cfg);
  save_model(set, dir / "m.lof");
  auto back = load_model(dir / "m.lof");
  EXPECT_EQ(back.policy(), ThresholdPolicy::auto_quantile);
  EXPECT_TRUE(std::isinf(back.models()[0].lrd()[0]));
  EXPECT_EQ(back.score(1.0), 1.0);
}

TEST(ModelIo, RejectsCorruptFiles) {
  auto dir = ieclof::test::scratch_dir();
  std::ofstream(dir / "v.lof") << "ieclof-model 7\n";
  EXPECT_THROW(load_model(dir / "v.lof"), Error);
  std::ofstream(dir / "t.lof") << "ieclof-model 1\npolicy fixed\nthreshold 1.5\nwindows 1\nwindow 0 k 1 dim 1 points 3\n"
                                  "0 1 1 1\n1 1 1 1\n";
  EXPECT_THROW(load_model(dir / "t.lof"), Error);
  // Consistent layout, but the stored lof disagrees with the points.
  std::ofstream(dir / "x.lof") << "ieclof-model 1\npolicy fixed\nthreshold 1.5\nwindows 1\nwindow 0 k 1 dim 1 points 3\n"
                                  "0 1 1 1\n1 1 1 1\n2 1 1 7\n";
  EXPECT_THROW(load_model(dir / "x.lof"), Error);
  EXPECT_THROW(load_model(dir / "missing.lof"), Error);
}
