#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpc/aec.hpp"
#include "dpc/metrics.hpp"
#include "dpc/model.hpp"
#include "dpc/model_config.hpp"
#include "dpc/profiler.hpp"
#include "dpc/simulate.hpp"
#include "dpc/wav.hpp"
#include "dpc/weights.hpp"

// Command-line front end: enhance | profile | simulate | metrics | init-weights.
// Exit codes: 0 ok, 2 invalid arguments or inputs, 3 I/O failures,
// 4 configuration / weight mismatches.

namespace dpc::cli {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

inline LogLevel log_level() {
  const char* env = std::getenv("DPC_LOG");
  if (!env) return LogLevel::warn;
  std::string s(env);
  if (s == "debug") return LogLevel::debug;
  if (s == "info") return LogLevel::info;
  if (s == "error") return LogLevel::error;
  return LogLevel::warn;
}

inline void log(LogLevel lvl, const std::string& msg) {
  static const char* names[] = {"debug", "info", "warn", "error"};
  if (static_cast<int>(lvl) >= static_cast<int>(log_level()))
    std::cerr << "[dpc:" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

namespace detail {

inline RunConfig load_run_config(const std::string& config_path, const std::string& preset) {
  if (!config_path.empty() && !preset.empty())
    throw ConfigError("give either --config or --preset, not both");
  if (!preset.empty()) return preset_run_config(preset);
  if (config_path.empty()) throw ConfigError("one of --config or --preset is required");
  std::ifstream f(config_path);
  if (!f) throw IoError("cannot open config file: " + config_path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config JSON in " + config_path + ": " + e.what());
  }
  return parse_run_config(j);
}

inline std::vector<std::string> list_wavs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .wav files in directory: " + dir);
  return out;
}

inline double run_pesq(const std::string& bin, const std::string& ref, const std::string& deg) {
  std::string cmd = bin + " +16000 +wb '" + ref + "' '" + deg + "' 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw IoError("cannot run WB-PESQ binary: " + bin);
  std::string output;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) output += buf;
  int rc = pclose(pipe);
  auto pos = output.rfind("MOS-LQO");
  if (rc != 0 || pos == std::string::npos)
    throw IoError("WB-PESQ run failed (binary " + bin + "): " + output.substr(0, 200));
  const char* p = output.c_str() + pos;
  while (*p && (*p < '0' || *p > '9') && *p != '-') ++p;
  char* end = nullptr;
  double score = std::strtod(p, &end);
  if (end == p) throw IoError("could not parse WB-PESQ output");
  return score;
}

}  // namespace detail

inline int cmd_profile(const std::string& config, const std::string& preset,
                       const std::string& compare, bool compact, std::ostream& out) {
  RunConfig cfg = detail::load_run_config(config, preset);
  int bins = cfg.stft.bins();
  auto rep = profile(cfg.model, bins);
  ModelConfig base_cfg = uncompressed_of(cfg.model);
  if (!compare.empty()) base_cfg = detail::load_run_config(compare, "").model;
  auto base = profile(base_cfg, bins);
  nlohmann::json j = rep.to_json();
  j["model"] = run_config_to_json(cfg)["model"];
  j["freq"] = run_config_to_json(cfg)["freq"];
  j["time"] = run_config_to_json(cfg)["time"];
  j["postnet_enabled"] = cfg.model.postnet.enabled;
  j["totals"]["macs_per_second"] = rep.macs_per_second;
  j["baseline"] = {{"params", base.total_params}, {"macs_per_second", base.macs_per_second}};
  j["compression_ratio"] = base.macs_per_second / rep.macs_per_second;
  out << (compact ? j.dump() : j.dump(2)) << "\n";
  return 0;
}

inline int cmd_init_weights(const std::string& config, const std::string& preset, uint64_t seed,
                            const std::string& out_path) {
  RunConfig cfg = detail::load_run_config(config, preset);
  auto w = init_weights(cfg.model, seed, cfg.stft.bins());
  w.save(out_path);
  log(LogLevel::info, "wrote " + std::to_string(w.total_params()) + " parameters to " + out_path);
  return 0;
}

inline int cmd_enhance(const std::string& mic_path, const std::string& ref_path,
                       const std::string& config, const std::string& preset,
                       const std::string& weights_path, const std::string& out_path,
                       bool streaming, const std::string& aec_out) {
  RunConfig cfg = detail::load_run_config(config, preset);
  auto weights = WeightContainer::load(weights_path);
  auto mic = read_wav(mic_path);
  auto ref = read_wav(ref_path);
  auto enhanced = enhance(cfg, weights, mic, ref, streaming ? cfg.stft.hop : 0);
  write_wav(out_path, enhanced);
  log(LogLevel::info, "wrote " + out_path);
  if (!aec_out.empty()) {
    write_wav(aec_out, aec_process(mic, ref, cfg.aec, cfg.stft));
    log(LogLevel::info, "wrote " + aec_out);
  }
  return 0;
}

inline int cmd_metrics(const std::string& est_path, const std::string& ref_path,
                       const std::string& mic_path, const std::string& pesq_bin, bool compact,
                       std::ostream& out) {
  auto est = read_wav(est_path);
  auto ref = read_wav(ref_path);
  if (est.size() != ref.size()) {
    size_t n = std::min(est.size(), ref.size());
    est.resize(n);
    ref.resize(n);
  }
  nlohmann::json j;
  j["si_snr_db"] = si_snr(est, ref);
  j["stoi"] = stoi(est, ref);
  if (!mic_path.empty()) {
    auto mic = read_wav(mic_path);
    mic.resize(est.size(), 0.0f);
    j["erle_db"] = erle(mic, est);
  }
  if (!pesq_bin.empty()) j["pesq_mos_lqo"] = detail::run_pesq(pesq_bin, ref_path, est_path);
  out << (compact ? j.dump() : j.dump(2)) << "\n";
  return 0;
}

inline int cmd_simulate(const std::string& near_dir, const std::string& far_dir,
                        const std::string& noise_dir, const std::string& rir_dir, int count,
                        uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  auto nears = detail::list_wavs(near_dir);
  auto fars = detail::list_wavs(far_dir);
  auto noises = detail::list_wavs(noise_dir);
  std::vector<std::string> rirs;
  if (!rir_dir.empty()) rirs = detail::list_wavs(rir_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir);

  for (int i = 0; i < count; ++i) {
    uint64_t clip_seed = seed + static_cast<uint64_t>(i);
    std::mt19937_64 rng(clip_seed * 0x2545F4914F6CDD1Dull + 1);
    auto pick = [&](const std::vector<std::string>& v) {
      return v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng)];
    };
    auto spec = sample_mix_spec(clip_seed);
    auto near = read_wav(pick(nears));
    auto far = read_wav(pick(fars));
    auto noise = read_wav(pick(noises));
    std::vector<float> rir;
    std::string rir_path;
    if (!rirs.empty()) {
      rir_path = pick(rirs);
      rir = read_wav(rir_path);
    }
    auto res = mix(near, far, noise, rir, spec);

    char stem_buf[32];
    std::snprintf(stem_buf, sizeof(stem_buf), "clip_%04d", i);
    std::string stem = (fs::path(out_dir) / stem_buf).string();
    write_wav(stem + ".mic.wav", res.mic);
    write_wav(stem + ".farend.wav", res.farend);
    write_wav(stem + ".target.wav", res.target);
    nlohmann::json manifest = res.manifest(spec);
    manifest["mic"] = stem + ".mic.wav";
    manifest["farend"] = stem + ".farend.wav";
    manifest["target"] = stem + ".target.wav";
    if (!rir_path.empty()) manifest["rir"] = rir_path;
    std::ofstream mf(stem + ".json");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw IoError("cannot write manifest: " + stem + ".json");
    log(LogLevel::info, "wrote " + stem + ".{mic,farend,target}.wav");
  }
  return 0;
}

/// Builds and runs the CLI over the given arguments (argv[0] excluded).
/// stdout-style output goes to `out` so tests can capture it.
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout) {
  CLI::App app{"streaming echo/noise suppression engine with dual-path compression", "dpc"};
  app.require_subcommand(1);

  std::string config, preset, compare, weights_path, out_path;
  std::string mic_path, ref_path, est_path, aec_out, pesq_bin;
  std::string near_dir, far_dir, noise_dir, rir_dir, out_dir;
  bool streaming = false, compact = false;
  uint64_t seed = 0;
  int count = 1;

  auto* profile_cmd = app.add_subcommand("profile", "analytic parameters and MACs/s");
  profile_cmd->add_option("--config", config, "run-config JSON file");
  profile_cmd->add_option("--preset", preset, "named preset (e.g. uncompressed, dualpath-2x4)");
  profile_cmd->add_option("--compare", compare, "baseline config for the compression ratio");
  profile_cmd->add_flag("--json", compact, "compact single-line JSON");

  auto* init_cmd = app.add_subcommand("init-weights", "write a seeded random weight container");
  init_cmd->add_option("--config", config, "run-config JSON file");
  init_cmd->add_option("--preset", preset, "named preset");
  init_cmd->add_option("--seed", seed, "RNG seed")->required();
  init_cmd->add_option("--out", out_path, "output .bin path")->required();

  auto* enhance_cmd = app.add_subcommand("enhance", "run the full pipeline over a wav pair");
  enhance_cmd->add_option("--mic", mic_path, "microphone wav")->required();
  enhance_cmd->add_option("--ref", ref_path, "far-end reference wav")->required();
  enhance_cmd->add_option("--config", config, "run-config JSON file");
  enhance_cmd->add_option("--preset", preset, "named preset");
  enhance_cmd->add_option("--weights", weights_path, "weight container")->required();
  enhance_cmd->add_option("--out", out_path, "output wav")->required();
  enhance_cmd->add_flag("--streaming", streaming, "feed hop-sized chunks");
  enhance_cmd->add_option("--aec-out", aec_out, "also write the linear-AEC residual");

  auto* metrics_cmd = app.add_subcommand("metrics", "SI-SNR / STOI / ERLE of an output");
  metrics_cmd->add_option("--est", est_path, "estimate wav")->required();
  metrics_cmd->add_option("--ref", ref_path, "clean reference wav")->required();
  metrics_cmd->add_option("--mic", mic_path, "unprocessed mic wav (enables ERLE)");
  metrics_cmd->add_option("--pesq-bin", pesq_bin, "external WB-PESQ executable to shell out to");
  metrics_cmd->add_flag("--json", compact, "compact single-line JSON");

  auto* sim_cmd = app.add_subcommand("simulate", "mix scenario clips with manifests");
  sim_cmd->add_option("--near", near_dir, "near-end speech wav directory")->required();
  sim_cmd->add_option("--far", far_dir, "far-end speech wav directory")->required();
  sim_cmd->add_option("--noise", noise_dir, "noise wav directory")->required();
  sim_cmd->add_option("--rir", rir_dir, "impulse-response wav directory");
  sim_cmd->add_option("--count", count, "number of clips")->required();
  sim_cmd->add_option("--seed", seed, "base seed");
  sim_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    std::reverse(args.begin(), args.end());  // CLI11's vector overload wants reversed argv
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (profile_cmd->parsed()) return cmd_profile(config, preset, compare, compact, out);
    if (init_cmd->parsed()) return cmd_init_weights(config, preset, seed, out_path);
    if (enhance_cmd->parsed())
      return cmd_enhance(mic_path, ref_path, config, preset, weights_path, out_path, streaming,
                         aec_out);
    if (metrics_cmd->parsed())
      return cmd_metrics(est_path, ref_path, mic_path, pesq_bin, compact, out);
    if (sim_cmd->parsed())
      return cmd_simulate(near_dir, far_dir, noise_dir, rir_dir, count, seed, out_dir);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dpc::cli
