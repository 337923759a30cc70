#include <gtest/gtest.h>

#include <variant>

#include "spinlat/config.hpp"

using namespace spinlat;

namespace {

std::string error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const config_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.lattice.depth_up, 850.0);
  EXPECT_EQ(c.solver.n_max, 15);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.spectrum.shifts_nm.size(), 4u);
}

TEST(Config, RoundTripThroughJson) {
  RunConfig c;
  c.lattice.theta_rad = 0.4;
  c.spectrum.shifts_nm = {12.5};
  c.fit.free = {"shift"};
  c.filter.fit_ceiling = true;
  c.engineer.sequence = json::array({{{"type", "wait"}, {"duration_us", 5.0}}});
  c.seed = 42;
  const json j = to_json(c);
  EXPECT_TRUE(j["fit"]["depth_offset"].is_null());
  const RunConfig back = parse_config(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_TRUE(std::isnan(back.fit.depth_offset));
}

TEST(Config, RejectsUnknownKeysWithPath) {
  EXPECT_EQ(error_of({{"lattice", {{"depthh", 3.0}}}}), "unknown key 'lattice.depthh'");
  EXPECT_EQ(error_of({{"bogus", 1}}), "unknown key 'bogus'");
}

TEST(Config, RejectsWrongTypes) {
  EXPECT_NE(error_of({{"lattice", {{"depth_up", "deep"}}}}).find("lattice.depth_up"), std::string::npos);
  EXPECT_NE(error_of({{"solver", {{"n_max", 2.5}}}}).find("expected an integer"), std::string::npos);
  EXPECT_NE(error_of({{"seed", -1}}).find("non-negative"), std::string::npos);
  EXPECT_NE(error_of({{"spectrum", {{"shifts_nm", {1.0, "x"}}}}}).find("spectrum.shifts_nm[1]"), std::string::npos);
  EXPECT_NE(error_of({{"atom", 3}}).find("expected an object"), std::string::npos);
}

TEST(Config, ConvertersValidate) {
  RunConfig c;
  EXPECT_NEAR(to_geometry(c).spacing(), 433.0, 1e-12);
  EXPECT_EQ(to_setup(c).n_max, 15);
  c.lattice.depth_up = -1.0;
  EXPECT_THROW(to_geometry(c), config_error);
  c = RunConfig{};
  c.cool.branching_up = 0.9;
  EXPECT_THROW(to_cooling_params(c), config_error);
  c = RunConfig{};
  c.spectrum.initial = "hot";
  EXPECT_THROW(to_spectrum_settings(c), config_error);
}

TEST(Config, ParsesSequenceSteps) {
  const LatticeGeometry g;
  const json steps = json::parse(R"([
    {"type": "shift", "shift_nm": 43.3, "mode": "timed"},
    {"type": "microwave", "area": 0.5, "n_up": 0, "n_down": 2, "detuning_offset_hz": 1000.0},
    {"type": "repump", "conditioned": false},
    {"type": "push_out", "efficiency": 0.9},
    {"type": "wait", "duration_us": 12.0, "dephase": true}
  ])");
  const auto s = parse_sequence(steps, g);
  ASSERT_EQ(s.size(), 5u);
  const auto& shift = std::get<LatticeShiftStep>(s[0]);
  EXPECT_NEAR(shift.shift, 0.1, 1e-12);
  EXPECT_EQ(shift.mode, ShiftMode::timed);
  const auto& mw = std::get<MicrowaveStep>(s[1]);
  EXPECT_EQ(mw.area.value(), 0.5);
  EXPECT_EQ(mw.n_down, 2);
  EXPECT_NEAR(mw.detuning_offset, two_pi * 1000.0, 1e-9);
  EXPECT_FALSE(std::get<RepumpStep>(s[2]).conditioned);
  EXPECT_EQ(std::get<PushOutStep>(s[3]).efficiency, 0.9);
  EXPECT_NEAR(std::get<WaitStep>(s[4]).duration, 12e-6, 1e-18);
  EXPECT_TRUE(std::get<WaitStep>(s[4]).dephase);
}

TEST(Config, RejectsMalformedSequenceSteps) {
  const LatticeGeometry g;
  EXPECT_THROW(parse_sequence(json::object(), g), config_error);
  EXPECT_THROW(parse_sequence(json::parse(R"([{"shift_nm": 1}])"), g), config_error);
  EXPECT_THROW(parse_sequence(json::parse(R"([{"type": "teleport"}])"), g), config_error);
  EXPECT_THROW(parse_sequence(json::parse(R"([{"type": "wait", "duraton_us": 1}])"), g), config_error);
  EXPECT_THROW(parse_sequence(json::parse(R"([{"type": "microwave"}])"), g), config_error);
  EXPECT_THROW(parse_sequence(json::parse(R"([{"type": "shift", "mode": "slow"}])"), g), config_error);
  EXPECT_THROW(parse_spin("left", "x"), config_error);
}

TEST(Config, LoadReportsMissingAndInvalidFiles) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), config_error);
  const std::string path = ::testing::TempDir() + "broken.json";
  std::ofstream(path) << "{ \"lattice\": ";
  EXPECT_THROW(load_config(path), config_error);
}
