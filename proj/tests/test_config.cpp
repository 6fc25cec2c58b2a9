#include <gtest/gtest.h>

#include "gcvrnn/config.hpp"

using namespace gcvrnn;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(RunConfig, Defaults) {
  const RunConfig c = parse_run_config("");
  EXPECT_EQ(c.epochs, 200u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-3);
  EXPECT_DOUBLE_EQ(c.lr_decay, 0.9);
  EXPECT_EQ(c.lr_decay_interval, 20u);
  EXPECT_EQ(c.checkpoint_interval, 20u);
  EXPECT_EQ(c.scenarios.size(), 6u);
  EXPECT_EQ(c.units, "ft");
}

TEST(RunConfig, CommentsBlankLinesAndModelKeys) {
  const RunConfig c = parse_run_config("# header\n\nepochs = 3  # short\nhidden=32\nuse_td=false\nunits=m\n");
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.model.hidden, 32u);
  EXPECT_FALSE(c.model.use_td);
  EXPECT_EQ(c.units, "m");
}

TEST(RunConfig, UnknownKeyIsRejectedWithLocation) {
  const std::string e = error_of("epochs=3\nuse_tdd=false\n");
  EXPECT_NE(e.find("run.cfg:2"), std::string::npos) << e;
  EXPECT_NE(e.find("use_tdd"), std::string::npos) << e;
}

TEST(RunConfig, DuplicateAndMalformedLines) {
  EXPECT_NE(error_of("epochs=3\nepochs=4\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("epochs\n").find("run.cfg:1"), std::string::npos);
  EXPECT_FALSE(error_of("epochs=three\n").empty());
  EXPECT_FALSE(error_of("batch_size=0\n").empty());
  EXPECT_FALSE(error_of("baselines=mean,knn\n").empty());
}

TEST(RunConfig, ScenarioGrid) {
  const RunConfig c = parse_run_config("scenarios=circle:3,5;camera:15\ncamera_y=-40\n");
  ASSERT_EQ(c.scenarios.size(), 3u);
  EXPECT_EQ(c.scenarios[0].mode, MaskMode::circle);
  EXPECT_EQ(c.scenarios[1].parameter, 5.0);
  EXPECT_EQ(c.scenarios[2].mode, MaskMode::camera);
  EXPECT_EQ(c.scenarios[2].parameter, 15.0);
  EXPECT_EQ(c.scenarios[2].camera, (Vec2{0, -40}));
  EXPECT_FALSE(error_of("scenarios=square:3\n").empty());
  EXPECT_FALSE(error_of("scenarios=camera:180\n").empty());
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c = parse_run_config("epochs=7\nlatent=4\nscenarios=camera:10,20\nbaselines=median\ndyn_noise=0.125\n");
  const RunConfig back = parse_run_config(to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(back.epochs, 7u);
  EXPECT_EQ(back.model.latent, 4u);
  EXPECT_EQ(back.baselines, std::vector<std::string>{"median"});
  EXPECT_EQ(back.dynamics.noise, 0.125);
}

TEST(RunConfig, MissingFileIsConfigError) { EXPECT_THROW(load_run_config("/nonexistent/run.cfg"), ConfigError); }
