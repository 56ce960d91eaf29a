// turbo: joint bandwidth-allocation and model-selection toolkit.
// Subcommands cover curve derivation, one-shot allocation, trace-driven
// simulation, sweeps, factor reports, cost estimation, synthetic trace
// generation, and the offload client/server runtime.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "turbo/turbo.hpp"

namespace {

using namespace turbo;

std::ostream& out_stream(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw trace_error("cannot write output file: " + path);
  return file;
}

// "a,b,c" or "start:stop:count"
std::vector<double> parse_axis(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    double start = 0, stop = 0;
    int count = 0;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &start, &stop, &count) != 3 || count < 1)
      throw CLI::ValidationError("axis", "expected start:stop:count");
    for (int i = 0; i < count; ++i)
      out.push_back(count == 1 ? start : start + (stop - start) * i / (count - 1));
    return out;
  }
  std::istringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  if (out.empty()) throw CLI::ValidationError("axis", "no values in axis");
  return out;
}

PolicyKind parse_policy(const std::string& s) {
  if (s == "global") return PolicyKind::global_static();
  if (s == "scenario") return PolicyKind::scenario_static();
  if (s == "oracle") return PolicyKind::per_frame_oracle();
  if (s.rfind("window:", 0) == 0) return PolicyKind::windowed(std::stoul(s.substr(7)));
  throw CLI::ValidationError("policy", "expected global|scenario|window:N|oracle");
}

std::pair<std::string, uint16_t> parse_addr(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos)
    throw CLI::ValidationError("address", "expected host:port");
  return {s.substr(0, colon), static_cast<uint16_t>(std::stoul(s.substr(colon + 1)))};
}

std::map<std::string, std::string> parse_fixed(const std::vector<std::string>& pairs) {
  std::map<std::string, std::string> out;
  for (const auto& p : pairs) {
    const auto eq = p.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("fixed", "expected service=config");
    out[p.substr(0, eq)] = p.substr(eq + 1);
  }
  return out;
}

int run_curves(const std::string& profiles_path, double rtt_ms, bool downlink,
               const std::string& out_path) {
  ProfileSet ps = load_profiles(profiles_path);
  std::ofstream file;
  std::ostream& out = out_stream(file, out_path);
  out << "service_id,b_c_mbps,accuracy,config_id\n";
  char buf[160];
  for (const auto& svc : ps.services()) {
    CurveOptions opts;
    opts.include_downlink = downlink;
    auto curve = build_service_curve(svc, ps, rtt_ms, opts);
    std::snprintf(buf, sizeof(buf), "%s,0.000000,%.6f,%s", svc.service_id.c_str(),
                  curve.floor_accuracy, svc.local_config.c_str());
    out << buf << '\n';
    for (const auto& s : curve.steps) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%s", svc.service_id.c_str(), s.b_c_mbps,
                    s.accuracy, s.config_id.c_str());
      out << buf << '\n';
    }
  }
  return 0;
}

int run_allocate(const std::string& profiles_path, double bandwidth, double rtt_ms,
                 double granularity, bool downlink, const std::string& out_path) {
  ProfileSet ps = load_profiles(profiles_path);
  AllocationProblem problem;
  problem.total_bandwidth_mbps = bandwidth;
  CurveOptions opts;
  opts.include_downlink = downlink;
  for (const auto& svc : ps.services())
    problem.entries.push_back({build_service_curve(svc, ps, rtt_ms, opts), svc.transform});
  Allocation alloc = solve_dp(problem, granularity);

  nlohmann::json j;
  j["budget_mbps"] = bandwidth;
  j["rtt_ms"] = rtt_ms;
  j["total_utility"] = alloc.total_utility;
  j["total_bandwidth_mbps"] = alloc.total_bandwidth();
  for (const auto& [svc, cfg] : alloc.choices) {
    j["choices"][svc] = cfg ? nlohmann::json(*cfg) : nlohmann::json(nullptr);
    j["bandwidth_mbps"][svc] = alloc.bandwidth_mbps.at(svc);
  }
  std::ofstream file;
  std::ostream& out = out_stream(file, out_path);
  out << j.dump(2) << "\n";

  // human-readable table on stderr so stdout stays machine-parseable
  std::fprintf(stderr, "%-18s %-22s %12s\n", "service", "config", "mbps");
  for (const auto& [svc, cfg] : alloc.choices)
    std::fprintf(stderr, "%-18s %-22s %12.2f\n", svc.c_str(),
                 cfg ? cfg->c_str() : "(local)", alloc.bandwidth_mbps.at(svc));
  std::fprintf(stderr, "total utility %.6f, bandwidth %.2f / %.2f Mbps\n", alloc.total_utility,
               alloc.total_bandwidth(), bandwidth);
  return 0;
}

SimConfig make_sim_config(const std::string& mode, const std::string& policy, double realloc_ms,
                          double frame_ms, double granularity, bool downlink,
                          const std::vector<std::string>& fixed) {
  SimConfig sim;
  if (mode == "b0") sim.mode = SimMode::B0;
  else if (mode == "b1") sim.mode = SimMode::B1;
  else if (mode == "b2") sim.mode = SimMode::B2;
  else if (mode == "turbo") sim.mode = SimMode::Turbo;
  else throw CLI::ValidationError("mode", "expected b0|b1|b2|turbo");
  sim.policy = parse_policy(policy);
  sim.realloc_period_ms = realloc_ms;
  sim.frame_period_ms = frame_ms;
  sim.granularity_mbps = granularity;
  sim.include_downlink = downlink;
  sim.fixed_configs = parse_fixed(fixed);
  return sim;
}

int run_simulate(const std::string& profiles_path, const std::string& acc_path,
                 const std::string& net_path, const SimConfig& sim, const std::string& out_path) {
  ProfileSet ps = load_profiles(profiles_path);
  AccuracyTrace acc = load_accuracy_trace(acc_path);
  NetworkTrace net = load_network_trace(net_path);
  auto outcomes = simulate(ps, acc, net, sim);
  std::ofstream file;
  write_outcomes_csv(outcomes, out_stream(file, out_path));
  std::fprintf(stderr, "%zu frame rows, mean accuracy %.6f\n", outcomes.size(),
               mean_accuracy(outcomes));
  return 0;
}

int run_sweep(const std::string& profiles_path, const std::string& acc_path,
              const std::string& bandwidths, const std::string& rtts, const SimConfig& sim,
              const std::string& out_path) {
  ProfileSet ps = load_profiles(profiles_path);
  AccuracyTrace acc = load_accuracy_trace(acc_path);
  SweepResult result = sweep(ps, acc, parse_axis(bandwidths), parse_axis(rtts), sim);
  std::ofstream file;
  write_sweep_csv(result, out_stream(file, out_path));
  return 0;
}

int run_factors(const std::string& profiles_path, const std::string& acc_path,
                const std::string& bandwidths, double rtt_ms, const SimConfig& sim,
                const std::string& out_path) {
  ProfileSet ps = load_profiles(profiles_path);
  AccuracyTrace acc = load_accuracy_trace(acc_path);
  FactorReport report = factor_report(ps, acc, parse_axis(bandwidths), sim, rtt_ms);
  std::ofstream file;
  write_factor_csv(report, out_stream(file, out_path));
  return 0;
}

int run_gen_traces(const std::string& profiles_path, uint64_t seed, uint32_t scenarios,
                   uint32_t frames, uint32_t services, double spread, double noise,
                   double frame_ms, double bw_mean, double bw_spread, double rtt_mean,
                   double rtt_spread, double step_ms, const std::string& out_acc,
                   const std::string& out_net) {
  ProfileSet ps = load_profiles(profiles_path);
  AccuracyGenParams ap;
  ap.scenarios = scenarios;
  ap.frames = frames;
  ap.spread = spread;
  ap.noise = noise;
  ap.seed = seed;
  if (services > 0) {
    for (const auto& svc : ps.services()) {
      if (ap.services.size() >= services) break;
      ap.services.push_back(svc.service_id);
    }
  }
  save_accuracy_trace(gen_accuracy_trace(ps, ap), out_acc);

  NetworkGenParams np;
  np.duration_ms = static_cast<double>(scenarios) * frames * frame_ms;
  np.step_ms = step_ms;
  np.bandwidth_mean_mbps = bw_mean;
  np.bandwidth_spread = bw_spread;
  np.rtt_mean_ms = rtt_mean;
  np.rtt_spread = rtt_spread;
  np.seed = seed;
  save_network_trace(gen_network_trace(np), out_net);
  std::fprintf(stderr, "wrote %s and %s\n", out_acc.c_str(), out_net.c_str());
  return 0;
}

int run_server(const std::string& listen, const std::string& profiles_path) {
  auto [host, port] = parse_addr(listen);
  runtime::OffloadServer server(load_profiles(profiles_path), host, port);
  std::fprintf(stderr, "offload server listening on %s:%u\n", host.c_str(), server.port());
  server.serve_forever();
  return 0;
}

int run_client(const std::string& server, const std::string& profiles_path,
               const std::string& cameras, double realloc_ms, double hysteresis, double fps,
               double duration_s, const std::string& shape_path, const std::string& log_dir,
               uint64_t seed) {
  auto [host, port] = parse_addr(server);
  ProfileSet ps = load_profiles(profiles_path);

  runtime::ClientConfig cfg;
  cfg.server_host = host;
  cfg.server_port = port;
  cfg.realloc_period_ms = realloc_ms;
  cfg.hysteresis = hysteresis;
  if (!log_dir.empty()) cfg.log_path = log_dir + "/frames.csv";
  if (!shape_path.empty()) cfg.shaper = runtime::netem_shape(load_network_trace(shape_path));

  // camera sources: an integer selects the first n services as synthetic
  // lanes; a directory serves its files as frame payloads, cycling
  std::vector<std::vector<uint8_t>> source_frames;
  size_t lane_count = 0;
  namespace fs = std::filesystem;
  if (fs::is_directory(cameras)) {
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(cameras))
      if (e.is_regular_file()) paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      std::ifstream in(p, std::ios::binary);
      source_frames.emplace_back(std::istreambuf_iterator<char>(in),
                                 std::istreambuf_iterator<char>());
    }
    if (source_frames.empty()) throw trace_error("no frame files in " + cameras);
    lane_count = ps.services().size();
  } else {
    try {
      lane_count = std::stoul(cameras);
    } catch (const std::exception&) {
      throw trace_error("--cameras expects a count or a directory: " + cameras);
    }
  }
  if (lane_count == 0 || lane_count > ps.services().size())
    throw trace_error("camera count must be in [1, " + std::to_string(ps.services().size()) +
                      "]");
  for (size_t i = 0; i < lane_count; ++i)
    cfg.services.push_back(ps.services()[i].service_id);

  if (source_frames.empty()) {
    std::mt19937_64 rng(seed);
    std::vector<uint8_t> synth(4096);
    for (auto& b : synth) b = static_cast<uint8_t>(rng());
    source_frames.push_back(std::move(synth));
  }

  runtime::OffloadClient client(ps, cfg);
  client.start();

  std::vector<std::thread> drivers;
  for (size_t i = 0; i < cfg.services.size(); ++i) {
    drivers.emplace_back([&, i] {
      const auto period = std::chrono::nanoseconds(static_cast<int64_t>(1e9 / fps));
      auto next = std::chrono::steady_clock::now() + std::chrono::milliseconds(7 * i);
      const auto end = std::chrono::steady_clock::now() +
                       std::chrono::nanoseconds(static_cast<int64_t>(duration_s * 1e9));
      size_t k = i;
      while (next < end) {
        std::this_thread::sleep_until(next);
        client.submit_frame(cfg.services[i], source_frames[k++ % source_frames.size()]);
        next += period;
      }
    });
  }
  for (auto& d : drivers) d.join();
  client.drain(std::chrono::milliseconds(2000));
  auto results = client.take_results();
  auto stats = client.stats();
  auto est = client.monitor().estimate(std::chrono::steady_clock::now());
  client.stop();

  size_t remote = 0, on_time = 0;
  double max_serialize_ms = 0.0;
  for (const auto& r : results) {
    if (r.used_remote) ++remote;
    if (r.finalized_steady <= r.deadline_steady + std::chrono::milliseconds(5)) ++on_time;
    if (r.t_serialized_us > 0)
      max_serialize_ms = std::max(
          max_serialize_ms, static_cast<double>(r.t_serialized_us - r.t_capture_us) / 1000.0);
  }
  nlohmann::json j;
  j["frames_submitted"] = stats.submitted;
  j["frames_finalized"] = stats.finalized;
  j["remote_used"] = remote;
  j["on_time_within_5ms"] = on_time;
  j["stale_responses"] = stats.stale_responses;
  j["dropped_before_send"] = stats.dropped_before_send;
  j["max_serialize_ms"] = max_serialize_ms;
  j["alloc_mean_ms"] = stats.alloc_mean_ms;
  j["alloc_max_ms"] = stats.alloc_max_ms;
  j["bandwidth_estimate_mbps"] = est.bandwidth_mbps;
  j["srtt_ms"] = est.rtt_ms;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint bandwidth allocation and model selection for edge-cloud offload"};
  app.require_subcommand(1);

  std::string profiles_path, out_path, acc_path, net_path;
  double rtt_ms = 20.0, bandwidth = 0.0, granularity = 1.0;
  bool downlink = false;

  std::string mode = "turbo", policy = "global";
  double realloc_ms = 500.0, frame_ms = 100.0;
  std::vector<std::string> fixed;
  std::string bandwidths, rtts;

  auto add_profiles = [&](CLI::App* cmd) {
    cmd->add_option("--profiles", profiles_path, "profile JSON document")
        ->required()
        ->check(CLI::ExistingFile);
  };

  auto* curves = app.add_subcommand("curves", "derive service utility curves as CSV");
  add_profiles(curves);
  curves->add_option("--rtt-ms", rtt_ms, "round-trip time estimate");
  curves->add_flag("--include-downlink", downlink, "charge result download to the allocation");
  curves->add_option("--out", out_path, "output file (default stdout)");

  auto* allocate = app.add_subcommand("allocate", "solve one allocation instance");
  add_profiles(allocate);
  allocate->add_option("--bandwidth", bandwidth, "available bandwidth budget in Mbps")
      ->required();
  allocate->add_option("--rtt-ms", rtt_ms, "round-trip time estimate");
  allocate->add_option("--granularity", granularity, "DP grid in Mbps");
  allocate->add_flag("--include-downlink", downlink, "charge result download to the allocation");
  allocate->add_option("--out", out_path, "output file (default stdout)");

  auto add_sim_flags = [&](CLI::App* cmd) {
    cmd->add_option("--policy", policy, "global|scenario|window:N|oracle");
    cmd->add_option("--realloc-ms", realloc_ms, "reallocation period");
    cmd->add_option("--frame-ms", frame_ms, "frame period");
    cmd->add_option("--granularity", granularity, "DP grid in Mbps");
    cmd->add_flag("--include-downlink", downlink, "charge result download to the allocation");
    cmd->add_option("--out", out_path, "output file (default stdout)");
  };

  auto* simulate_cmd = app.add_subcommand("simulate", "trace-driven simulation");
  add_profiles(simulate_cmd);
  simulate_cmd->add_option("--acc-trace", acc_path, "accuracy trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  simulate_cmd->add_option("--net-trace", net_path, "network trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  simulate_cmd->add_option("--mode", mode, "b0|b1|b2|turbo");
  simulate_cmd->add_option("--fixed", fixed, "service=config for b1/b2 (repeatable)");
  add_sim_flags(simulate_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "bandwidth x RTT improvement grid");
  add_profiles(sweep_cmd);
  sweep_cmd->add_option("--acc-trace", acc_path, "accuracy trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--bandwidths", bandwidths, "list a,b,c or start:stop:count")
      ->required();
  sweep_cmd->add_option("--rtts", rtts, "list a,b,c or start:stop:count")->required();
  add_sim_flags(sweep_cmd);

  auto* factors_cmd = app.add_subcommand("factors", "design-factor accuracy ladders");
  add_profiles(factors_cmd);
  factors_cmd->add_option("--acc-trace", acc_path, "accuracy trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  factors_cmd->add_option("--bandwidths", bandwidths, "list a,b,c or start:stop:count")
      ->required();
  factors_cmd->add_option("--rtt-ms", rtt_ms, "round-trip time for the ladders");
  add_sim_flags(factors_cmd);

  double price_per_gb = 0.0, avg_mbps = 100.0;
  auto* cost_cmd = app.add_subcommand("cost", "hourly network cost estimate");
  cost_cmd->add_option("--price-per-gb", price_per_gb, "cellular price per GB")->required();
  cost_cmd->add_option("--mbps", avg_mbps, "average utilization in Mbps");

  uint64_t seed = 1;
  uint32_t scenarios = 4, frames = 50, services = 0;
  double spread = 0.1, noise = 0.002;
  double bw_mean = 500.0, bw_spread = 0.3, rtt_mean = 30.0, rtt_spread = 0.2, step_ms = 500.0;
  std::string out_acc = "accuracy_trace.csv", out_net = "network_trace.csv";
  auto* gen = app.add_subcommand("gen-traces", "generate synthetic accuracy + network traces");
  add_profiles(gen);
  gen->add_option("--seed", seed, "RNG seed (same seed, same files)");
  gen->add_option("--scenarios", scenarios, "scenario count")->check(CLI::PositiveNumber);
  gen->add_option("--frames", frames, "frames per scenario")->check(CLI::PositiveNumber);
  gen->add_option("--services", services, "limit to the first n services (0 = all)");
  gen->add_option("--spread", spread, "relative accuracy drift amplitude");
  gen->add_option("--noise", noise, "per-config jitter bound");
  gen->add_option("--frame-ms", frame_ms, "frame period for the network trace length");
  gen->add_option("--bw-mean", bw_mean, "mean bandwidth Mbps");
  gen->add_option("--bw-spread", bw_spread, "relative bandwidth spread");
  gen->add_option("--rtt-mean", rtt_mean, "mean RTT ms");
  gen->add_option("--rtt-spread", rtt_spread, "relative RTT spread");
  gen->add_option("--step-ms", step_ms, "network trace step");
  gen->add_option("--out-acc", out_acc, "accuracy trace output path");
  gen->add_option("--out-net", out_net, "network trace output path");

  std::string listen = "127.0.0.1:9000";
  auto* server_cmd = app.add_subcommand("server", "run the cloud offload worker");
  server_cmd->add_option("--listen", listen, "listen address host:port");
  add_profiles(server_cmd);

  std::string server_addr = "127.0.0.1:9000", cameras = "3", shape_path, log_dir;
  double fps = 10.0, duration_s = 10.0, hysteresis = 0.0;
  auto* client_cmd = app.add_subcommand("client", "run the on-vehicle offload client");
  client_cmd->add_option("--server", server_addr, "server address host:port");
  add_profiles(client_cmd);
  client_cmd->add_option("--cameras", cameras, "synthetic camera count or a frame directory");
  client_cmd->add_option("--realloc-ms", realloc_ms, "reallocation period");
  client_cmd->add_option("--hysteresis", hysteresis, "reallocation hysteresis fraction");
  client_cmd->add_option("--fps", fps, "frame rate per camera");
  client_cmd->add_option("--duration-s", duration_s, "run duration");
  client_cmd->add_option("--shape", shape_path, "netem network trace CSV (loopback only)")
      ->check(CLI::ExistingFile);
  client_cmd->add_option("--log", log_dir, "directory for the per-frame timestamp CSV");
  client_cmd->add_option("--seed", seed, "synthetic frame seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (curves->parsed()) return run_curves(profiles_path, rtt_ms, downlink, out_path);
    if (allocate->parsed())
      return run_allocate(profiles_path, bandwidth, rtt_ms, granularity, downlink, out_path);
    if (simulate_cmd->parsed())
      return run_simulate(
          profiles_path, acc_path, net_path,
          make_sim_config(mode, policy, realloc_ms, frame_ms, granularity, downlink, fixed),
          out_path);
    if (sweep_cmd->parsed())
      return run_sweep(
          profiles_path, acc_path, bandwidths, rtts,
          make_sim_config("turbo", policy, realloc_ms, frame_ms, granularity, downlink, {}),
          out_path);
    if (factors_cmd->parsed())
      return run_factors(
          profiles_path, acc_path, bandwidths, rtt_ms,
          make_sim_config("turbo", policy, realloc_ms, frame_ms, granularity, downlink, {}),
          out_path);
    if (cost_cmd->parsed()) {
      std::printf("%.2f $/hr\n", estimate_network_cost(price_per_gb, avg_mbps));
      return 0;
    }
    if (gen->parsed())
      return run_gen_traces(profiles_path, seed, scenarios, frames, services, spread, noise,
                            frame_ms, bw_mean, bw_spread, rtt_mean, rtt_spread, step_ms, out_acc,
                            out_net);
    if (server_cmd->parsed()) return run_server(listen, profiles_path);
    if (client_cmd->parsed())
      return run_client(server_addr, profiles_path, cameras, realloc_ms, hysteresis, fps,
                        duration_s, shape_path, log_dir, seed);
  } catch (const profile_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const trace_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const runtime::capability_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const runtime::transport_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
