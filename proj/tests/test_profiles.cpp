#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "turbo/profiles.hpp"

using namespace turbo;

namespace {

const std::string kExampleProfiles =
    std::string(TURBO_SOURCE_DIR) + "/data/example_profiles.json";

nlohmann::json minimal_doc() {
  return nlohmann::json::parse(R"({
    "services": [
      {"service_id": "svc", "name": "svc", "slo_ms": 150,
       "local_config": "local", "remote_configs": ["remote"]}
    ],
    "configs": [
      {"config_id": "local", "model_name": "m0", "placement": "on_vehicle",
       "accuracy": 0.3,
       "stages": {"preprocess_local_ms": 10, "inference_local_ms": 50},
       "input_size_mbit": 0, "output_size_kbit": 8},
      {"config_id": "remote", "model_name": "m1", "placement": "cloud",
       "pipeline": "on_vehicle_preprocess", "accuracy": 0.5,
       "stages": {"preprocess_local_ms": 12, "inference_remote_ms": 20},
       "input_size_mbit": 14.2, "output_size_kbit": 8}
    ]
  })");
}

}  // namespace

TEST_CASE("example profile set loads with the expected registry size") {
  ProfileSet ps = load_profiles(kExampleProfiles);
  CHECK(ps.services().size() == 6);
  CHECK(ps.configs().size() == 36);

  size_t motion = 0, cameras = 0;
  for (const auto& s : ps.services()) {
    if (s.service_id == "motion") ++motion;
    else ++cameras;
  }
  CHECK(motion == 1);
  CHECK(cameras == 5);
}

TEST_CASE("exec_time_ms follows the pipeline critical path") {
  ProfileSet ps = load_profiles(kExampleProfiles);
  CHECK(exec_time_ms(ps.config("det_f_ed2_cloud")) == Catch::Approx(35.0));
  CHECK(exec_time_ms(ps.config("det_ed2_onveh")) == Catch::Approx(43.0));
  CHECK(exec_time_ms(ps.config("det_ed7x_onveh")) == Catch::Approx(134.0));
  // compression pipelines include both codec stages
  CHECK(exec_time_ms(ps.config("det_f_ed2_img_jpeg90")) == Catch::Approx(24 + 6 + 12 + 23));
  CHECK(exec_time_ms(ps.config("det_ed2_dnn_jpeg90")) == Catch::Approx(20 + 8 + 3 + 23));
  CHECK(exec_time_ms(ps.config("ed1")) == Catch::Approx(18 + 118));
}

TEST_CASE("exec_time_ms is monotone in each stage duration") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dur(0.0, 100.0);
  std::uniform_int_distribution<int> which(0, 5);
  std::uniform_int_distribution<int> kind(0, 3);
  for (int i = 0; i < 200; ++i) {
    ModelConfig c;
    c.config_id = "c";
    c.placement = i % 5 == 0 ? Placement::OnVehicle : Placement::Cloud;
    c.pipeline.kind = static_cast<PipelineKind>(kind(rng));
    c.input_size_mbit = c.placement == Placement::Cloud ? 1.0 : 0.0;
    c.stages = {dur(rng), dur(rng), dur(rng), dur(rng), dur(rng), dur(rng)};
    const double base = exec_time_ms(c);
    ModelConfig bumped = c;
    double* fields[] = {&bumped.stages.preprocess_local_ms, &bumped.stages.preprocess_remote_ms,
                        &bumped.stages.inference_remote_ms, &bumped.stages.inference_local_ms,
                        &bumped.stages.compress_local_ms, &bumped.stages.decompress_remote_ms};
    *fields[which(rng)] += 10.0;
    CHECK(exec_time_ms(bumped) >= base);
  }
}

TEST_CASE("network cost arithmetic") {
  CHECK(estimate_network_cost(0.75, 100.0) == Catch::Approx(33.75));
  CHECK(estimate_network_cost(0.001, 100.0) == Catch::Approx(0.045));
  CHECK(estimate_network_cost(0.062, 100.0) == Catch::Approx(2.79));
  CHECK(estimate_network_cost(123.0, 0.0) == 0.0);
}

TEST_CASE("round-trip serialization reproduces the profile set") {
  ProfileSet ps = load_profiles(kExampleProfiles);
  const std::string tmp = "roundtrip_profiles.json";
  save_profiles(ps, tmp);
  ProfileSet again = load_profiles(tmp);
  CHECK(ps == again);
  std::remove(tmp.c_str());
}

TEST_CASE("validation rejects a local_config that references a cloud config") {
  auto doc = minimal_doc();
  doc["services"][0]["local_config"] = "remote";
  try {
    parse_profiles(doc);
    FAIL("expected validation_error");
  } catch (const validation_error& e) {
    CHECK(std::string(e.what()).find("local_config") != std::string::npos);
  }
}

TEST_CASE("validation rejects an empty services list") {
  auto doc = minimal_doc();
  doc["services"] = nlohmann::json::array();
  CHECK_THROWS_WITH(parse_profiles(doc), Catch::Matchers::ContainsSubstring("no services"));
}

TEST_CASE("validation names the offending field") {
  SECTION("accuracy out of range") {
    auto doc = minimal_doc();
    doc["configs"][1]["accuracy"] = 1.5;
    CHECK_THROWS_WITH(parse_profiles(doc), Catch::Matchers::ContainsSubstring("accuracy"));
  }
  SECTION("negative duration") {
    auto doc = minimal_doc();
    doc["configs"][0]["stages"]["preprocess_local_ms"] = -1.0;
    CHECK_THROWS_WITH(parse_profiles(doc),
                      Catch::Matchers::ContainsSubstring("negative stage duration"));
  }
  SECTION("dangling remote reference") {
    auto doc = minimal_doc();
    doc["services"][0]["remote_configs"].push_back("nope");
    CHECK_THROWS_WITH(parse_profiles(doc), Catch::Matchers::ContainsSubstring("nope"));
  }
  SECTION("cloud config with zero input size") {
    auto doc = minimal_doc();
    doc["configs"][1]["input_size_mbit"] = 0.0;
    CHECK_THROWS_WITH(parse_profiles(doc),
                      Catch::Matchers::ContainsSubstring("input_size_mbit"));
  }
  SECTION("malformed document") {
    CHECK_THROWS_AS(parse_profiles(nlohmann::json::parse("[1,2,3]")), parse_error);
  }
}

TEST_CASE("wire ids are stable and invertible") {
  ProfileSet ps = load_profiles(kExampleProfiles);
  for (const auto& [id, cfg] : ps.configs()) {
    const uint16_t wire = ps.config_wire_id(id);
    REQUIRE(ps.config_by_wire_id(wire) != nullptr);
    CHECK(ps.config_by_wire_id(wire)->config_id == id);
  }
  for (const auto& svc : ps.services()) {
    const uint16_t wire = ps.service_wire_id(svc.service_id);
    REQUIRE(ps.service_by_wire_id(wire) != nullptr);
    CHECK(ps.service_by_wire_id(wire)->service_id == svc.service_id);
  }
  CHECK(ps.config_by_wire_id(60000) == nullptr);
}
