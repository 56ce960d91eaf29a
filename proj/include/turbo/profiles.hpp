#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace turbo {

struct profile_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed document (bad JSON, missing/mistyped keys).
struct parse_error : profile_error {
  using profile_error::profile_error;
};

// Well-formed document that violates an invariant; the message names the field.
struct validation_error : profile_error {
  using profile_error::profile_error;
};

// Per-stage compute durations. A stage that does not apply to a pipeline is 0.
struct StageProfile {
  double preprocess_local_ms = 0.0;
  double preprocess_remote_ms = 0.0;
  double inference_remote_ms = 0.0;
  double inference_local_ms = 0.0;  // on-vehicle configs only
  double compress_local_ms = 0.0;
  double decompress_remote_ms = 0.0;

  bool operator==(const StageProfile&) const = default;
};

enum class Placement { OnVehicle, Cloud };

enum class Codec { Png, Jpeg };

enum class PipelineKind {
  CloudPreprocess,      // ship the raw image, preprocess remotely
  OnVehiclePreprocess,  // preprocess locally, ship the model input
  ImageCompression,     // compress the raw image, decompress + preprocess remotely
  DnnInputCompression,  // preprocess locally, compress the model input
};

struct Pipeline {
  PipelineKind kind = PipelineKind::CloudPreprocess;
  Codec codec = Codec::Jpeg;  // compression pipelines only
  int quality = 0;            // JPEG quality factor; 0 for PNG

  bool operator==(const Pipeline&) const = default;
};

// One deployable (model, placement, pipeline) choice with its measured profile.
struct ModelConfig {
  std::string config_id;
  std::string model_name;
  Placement placement = Placement::Cloud;
  Pipeline pipeline;
  double accuracy = 0.0;  // mAP as a fraction in [0, 1]
  StageProfile stages;
  double input_size_mbit = 0.0;  // uplink transfer size; 0 for on-vehicle
  double output_size_kbit = 0.0;

  bool operator==(const ModelConfig&) const = default;
};

// Application-level re-weighting f(x) = a*x + b.
struct Transform {
  double a = 1.0;
  double b = 0.0;

  double operator()(double u) const { return a * u + b; }
  bool operator==(const Transform&) const = default;
};

struct ServiceSpec {
  std::string service_id;
  std::string name;
  double slo_ms = 0.0;
  std::string local_config;
  std::vector<std::string> remote_configs;
  Transform transform;

  bool operator==(const ServiceSpec&) const = default;
};

// Validated registry of services and model configs. Immutable after load;
// safe to share read-only across threads.
class ProfileSet {
 public:
  ProfileSet() = default;
  ProfileSet(std::vector<ServiceSpec> services, std::map<std::string, ModelConfig> configs)
      : services_(std::move(services)), configs_(std::move(configs)) {
    validate();
  }

  const std::vector<ServiceSpec>& services() const { return services_; }
  const std::map<std::string, ModelConfig>& configs() const { return configs_; }

  const ModelConfig& config(const std::string& id) const {
    auto it = configs_.find(id);
    if (it == configs_.end()) throw validation_error("unknown config_id: " + id);
    return it->second;
  }

  const ServiceSpec& service(const std::string& id) const {
    for (const auto& s : services_)
      if (s.service_id == id) return s;
    throw validation_error("unknown service_id: " + id);
  }

  const ServiceSpec* find_service(const std::string& id) const {
    for (const auto& s : services_)
      if (s.service_id == id) return &s;
    return nullptr;
  }

  // Stable small integer ids for the wire protocol: index into the sorted
  // config-id (resp. service-id) list.
  uint16_t config_wire_id(const std::string& id) const {
    auto it = configs_.find(id);
    if (it == configs_.end()) throw validation_error("unknown config_id: " + id);
    return static_cast<uint16_t>(std::distance(configs_.begin(), it));
  }

  const ModelConfig* config_by_wire_id(uint16_t wire) const {
    if (wire >= configs_.size()) return nullptr;
    auto it = configs_.begin();
    std::advance(it, wire);
    return &it->second;
  }

  uint16_t service_wire_id(const std::string& id) const {
    auto ids = sorted_service_ids();
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) throw validation_error("unknown service_id: " + id);
    return static_cast<uint16_t>(std::distance(ids.begin(), it));
  }

  const ServiceSpec* service_by_wire_id(uint16_t wire) const {
    auto ids = sorted_service_ids();
    if (wire >= ids.size()) return nullptr;
    return find_service(ids[wire]);
  }

  bool operator==(const ProfileSet&) const = default;

 private:
  std::vector<std::string> sorted_service_ids() const {
    std::vector<std::string> ids;
    ids.reserve(services_.size());
    for (const auto& s : services_) ids.push_back(s.service_id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  void validate() const;

  std::vector<ServiceSpec> services_;
  std::map<std::string, ModelConfig> configs_;
};

// Total compute time on the critical path for the config's pipeline,
// excluding network transfer.
inline double exec_time_ms(const ModelConfig& c) {
  const StageProfile& st = c.stages;
  if (c.placement == Placement::OnVehicle) {
    return st.preprocess_local_ms + st.inference_local_ms;
  }
  switch (c.pipeline.kind) {
    case PipelineKind::CloudPreprocess:
      return st.preprocess_remote_ms + st.inference_remote_ms;
    case PipelineKind::OnVehiclePreprocess:
      return st.preprocess_local_ms + st.inference_remote_ms;
    case PipelineKind::ImageCompression:
      return st.compress_local_ms + st.decompress_remote_ms + st.preprocess_remote_ms +
             st.inference_remote_ms;
    case PipelineKind::DnnInputCompression:
      return st.preprocess_local_ms + st.compress_local_ms + st.decompress_remote_ms +
             st.inference_remote_ms;
  }
  return 0.0;
}

// Hourly network cost of streaming avg_mbps continuously at price_per_gb.
inline double estimate_network_cost(double price_per_gb, double avg_mbps) {
  const double gb_per_hour = avg_mbps * 3600.0 / 8.0 / 1000.0;
  return price_per_gb * gb_per_hour;
}

inline void ProfileSet::validate() const {
  if (services_.empty()) throw validation_error("no services");

  for (const auto& [id, c] : configs_) {
    if (c.config_id != id) throw validation_error("config map key mismatch for " + id);
    if (c.accuracy < 0.0 || c.accuracy > 1.0)
      throw validation_error("config " + id + ": accuracy out of [0,1]");
    const double durs[] = {c.stages.preprocess_local_ms, c.stages.preprocess_remote_ms,
                           c.stages.inference_remote_ms, c.stages.inference_local_ms,
                           c.stages.compress_local_ms,   c.stages.decompress_remote_ms};
    for (double d : durs)
      if (d < 0.0) throw validation_error("config " + id + ": negative stage duration");
    if (c.input_size_mbit < 0.0)
      throw validation_error("config " + id + ": input_size_mbit negative");
    if (c.output_size_kbit < 0.0)
      throw validation_error("config " + id + ": output_size_kbit negative");
    if (c.placement == Placement::OnVehicle && c.input_size_mbit != 0.0)
      throw validation_error("config " + id + ": on_vehicle placement requires input_size_mbit = 0");
    if (c.placement == Placement::Cloud && c.input_size_mbit <= 0.0)
      throw validation_error("config " + id + ": cloud placement requires input_size_mbit > 0");
  }

  std::vector<std::string> seen;
  for (const auto& s : services_) {
    if (std::find(seen.begin(), seen.end(), s.service_id) != seen.end())
      throw validation_error("duplicate service_id: " + s.service_id);
    seen.push_back(s.service_id);
    if (s.slo_ms <= 0.0) throw validation_error("service " + s.service_id + ": slo_ms must be > 0");
    if (s.local_config.empty())
      throw validation_error("service " + s.service_id + ": local_config missing");
    auto lit = configs_.find(s.local_config);
    if (lit == configs_.end())
      throw validation_error("service " + s.service_id + ": local_config dangling reference " +
                             s.local_config);
    if (lit->second.placement != Placement::OnVehicle)
      throw validation_error("service " + s.service_id + ": local_config " + s.local_config +
                             " is not an on_vehicle config");
    for (const auto& rc : s.remote_configs) {
      auto rit = configs_.find(rc);
      if (rit == configs_.end())
        throw validation_error("service " + s.service_id + ": remote_config dangling reference " +
                               rc);
      if (rit->second.placement != Placement::Cloud)
        throw validation_error("service " + s.service_id + ": remote_config " + rc +
                               " is not a cloud config");
    }
  }
}

// ---- JSON document (canonical profile format) ----

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& key,
                             const std::string& ctx) {
  if (!j.contains(key)) throw parse_error(ctx + ": missing key \"" + key + "\"");
  if (!j.at(key).is_number()) throw parse_error(ctx + ": key \"" + key + "\" is not a number");
  return j.at(key).get<double>();
}

inline std::string require_string(const nlohmann::json& j, const std::string& key,
                                  const std::string& ctx) {
  if (!j.contains(key)) throw parse_error(ctx + ": missing key \"" + key + "\"");
  if (!j.at(key).is_string()) throw parse_error(ctx + ": key \"" + key + "\" is not a string");
  return j.at(key).get<std::string>();
}

inline Codec codec_from_string(const std::string& s, const std::string& ctx) {
  if (s == "png") return Codec::Png;
  if (s == "jpeg") return Codec::Jpeg;
  throw parse_error(ctx + ": unknown codec \"" + s + "\"");
}

inline Pipeline pipeline_from_json(const nlohmann::json& j, const std::string& ctx) {
  Pipeline p;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "cloud_preprocess") {
      p.kind = PipelineKind::CloudPreprocess;
    } else if (s == "on_vehicle_preprocess") {
      p.kind = PipelineKind::OnVehiclePreprocess;
    } else {
      throw parse_error(ctx + ": unknown pipeline \"" + s + "\"");
    }
    return p;
  }
  if (j.is_object()) {
    const bool img = j.contains("image_compression");
    const bool dnn = j.contains("dnn_input_compression");
    if (img == dnn) throw parse_error(ctx + ": pipeline object must have exactly one compression key");
    const nlohmann::json& c = img ? j.at("image_compression") : j.at("dnn_input_compression");
    p.kind = img ? PipelineKind::ImageCompression : PipelineKind::DnnInputCompression;
    p.codec = codec_from_string(require_string(c, "codec", ctx), ctx);
    p.quality = p.codec == Codec::Png ? 0 : static_cast<int>(require_number(c, "quality", ctx));
    return p;
  }
  throw parse_error(ctx + ": pipeline must be a string or an object");
}

inline nlohmann::json pipeline_to_json(const Pipeline& p) {
  switch (p.kind) {
    case PipelineKind::CloudPreprocess:
      return "cloud_preprocess";
    case PipelineKind::OnVehiclePreprocess:
      return "on_vehicle_preprocess";
    case PipelineKind::ImageCompression:
    case PipelineKind::DnnInputCompression: {
      nlohmann::json c;
      c["codec"] = p.codec == Codec::Png ? "png" : "jpeg";
      if (p.codec == Codec::Jpeg) c["quality"] = p.quality;
      nlohmann::json out;
      out[p.kind == PipelineKind::ImageCompression ? "image_compression"
                                                   : "dnn_input_compression"] = c;
      return out;
    }
  }
  return nullptr;
}

}  // namespace detail

inline ProfileSet parse_profiles(const nlohmann::json& doc) {
  if (!doc.is_object()) throw parse_error("profile document: top level must be an object");
  if (!doc.contains("services") || !doc.at("services").is_array())
    throw parse_error("profile document: missing \"services\" array");
  if (!doc.contains("configs") || !doc.at("configs").is_array())
    throw parse_error("profile document: missing \"configs\" array");

  std::map<std::string, ModelConfig> configs;
  for (const auto& jc : doc.at("configs")) {
    ModelConfig c;
    c.config_id = detail::require_string(jc, "config_id", "config");
    const std::string ctx = "config " + c.config_id;
    c.model_name = detail::require_string(jc, "model_name", ctx);
    const std::string placement = detail::require_string(jc, "placement", ctx);
    if (placement == "on_vehicle") {
      c.placement = Placement::OnVehicle;
    } else if (placement == "cloud") {
      c.placement = Placement::Cloud;
    } else {
      throw parse_error(ctx + ": unknown placement \"" + placement + "\"");
    }
    if (c.placement == Placement::Cloud) {
      if (!jc.contains("pipeline")) throw parse_error(ctx + ": missing key \"pipeline\"");
      c.pipeline = detail::pipeline_from_json(jc.at("pipeline"), ctx);
    }
    c.accuracy = detail::require_number(jc, "accuracy", ctx);
    if (!jc.contains("stages") || !jc.at("stages").is_object())
      throw parse_error(ctx + ": missing \"stages\" object");
    const nlohmann::json& st = jc.at("stages");
    auto stage = [&](const char* key) {
      return st.contains(key) ? detail::require_number(st, key, ctx + ".stages") : 0.0;
    };
    c.stages.preprocess_local_ms = stage("preprocess_local_ms");
    c.stages.preprocess_remote_ms = stage("preprocess_remote_ms");
    c.stages.inference_remote_ms = stage("inference_remote_ms");
    c.stages.inference_local_ms = stage("inference_local_ms");
    c.stages.compress_local_ms = stage("compress_local_ms");
    c.stages.decompress_remote_ms = stage("decompress_remote_ms");
    if (c.placement == Placement::OnVehicle && !st.contains("inference_local_ms"))
      throw validation_error(ctx + ": on_vehicle config requires stages.inference_local_ms");
    if (c.placement == Placement::Cloud && !st.contains("inference_remote_ms"))
      throw validation_error(ctx + ": cloud config requires stages.inference_remote_ms");
    c.input_size_mbit = detail::require_number(jc, "input_size_mbit", ctx);
    c.output_size_kbit = detail::require_number(jc, "output_size_kbit", ctx);
    if (configs.count(c.config_id)) throw validation_error("duplicate config_id: " + c.config_id);
    configs.emplace(c.config_id, std::move(c));
  }

  std::vector<ServiceSpec> services;
  for (const auto& js : doc.at("services")) {
    ServiceSpec s;
    s.service_id = detail::require_string(js, "service_id", "service");
    const std::string ctx = "service " + s.service_id;
    s.name = detail::require_string(js, "name", ctx);
    s.slo_ms = detail::require_number(js, "slo_ms", ctx);
    s.local_config = detail::require_string(js, "local_config", ctx);
    if (!js.contains("remote_configs") || !js.at("remote_configs").is_array())
      throw parse_error(ctx + ": missing \"remote_configs\" array");
    for (const auto& rc : js.at("remote_configs")) {
      if (!rc.is_string()) throw parse_error(ctx + ": remote_configs entries must be strings");
      s.remote_configs.push_back(rc.get<std::string>());
    }
    if (js.contains("transform")) {
      s.transform.a = detail::require_number(js.at("transform"), "a", ctx + ".transform");
      s.transform.b = detail::require_number(js.at("transform"), "b", ctx + ".transform");
    }
    services.push_back(std::move(s));
  }

  return ProfileSet(std::move(services), std::move(configs));
}

inline nlohmann::json to_json(const ProfileSet& ps) {
  nlohmann::json doc;
  doc["services"] = nlohmann::json::array();
  for (const auto& s : ps.services()) {
    nlohmann::json js;
    js["service_id"] = s.service_id;
    js["name"] = s.name;
    js["slo_ms"] = s.slo_ms;
    js["local_config"] = s.local_config;
    js["remote_configs"] = s.remote_configs;
    js["transform"] = {{"a", s.transform.a}, {"b", s.transform.b}};
    doc["services"].push_back(js);
  }
  doc["configs"] = nlohmann::json::array();
  for (const auto& [id, c] : ps.configs()) {
    nlohmann::json jc;
    jc["config_id"] = c.config_id;
    jc["model_name"] = c.model_name;
    jc["placement"] = c.placement == Placement::OnVehicle ? "on_vehicle" : "cloud";
    if (c.placement == Placement::Cloud) jc["pipeline"] = detail::pipeline_to_json(c.pipeline);
    jc["accuracy"] = c.accuracy;
    nlohmann::json st;
    st["preprocess_local_ms"] = c.stages.preprocess_local_ms;
    st["preprocess_remote_ms"] = c.stages.preprocess_remote_ms;
    if (c.placement == Placement::Cloud) st["inference_remote_ms"] = c.stages.inference_remote_ms;
    if (c.placement == Placement::OnVehicle) st["inference_local_ms"] = c.stages.inference_local_ms;
    st["compress_local_ms"] = c.stages.compress_local_ms;
    st["decompress_remote_ms"] = c.stages.decompress_remote_ms;
    jc["stages"] = st;
    jc["input_size_mbit"] = c.input_size_mbit;
    jc["output_size_kbit"] = c.output_size_kbit;
    doc["configs"].push_back(jc);
  }
  return doc;
}

inline ProfileSet load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open profile file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error("malformed profile document " + path + ": " + e.what());
  }
  return parse_profiles(doc);
}

inline void save_profiles(const ProfileSet& ps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw profile_error("cannot write profile file: " + path);
  out << to_json(ps).dump(2) << "\n";
}

}  // namespace turbo
