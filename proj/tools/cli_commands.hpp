#pragma once

// Command layer of the avfusion tool. Kept separate from main() so the
// commands can be driven from tests with captured streams.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avfusion/event_sync.hpp"
#include "avfusion/geometry.hpp"
#include "avfusion/pipeline.hpp"
#include "avfusion/simulator.hpp"

namespace avfusion::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDegenerate = 3;

enum class PipelineKind { motion_guided, face_guided };

struct RunConfig {
  std::string scenario;  // built-in name or path to a spec file
  std::optional<PipelineKind> pipeline;  // default follows the scenario
  std::filesystem::path mic_config;      // empty: built-in geometry
  std::filesystem::path out = "out";
  std::filesystem::path input;           // observations.jsonl or *.replay
  std::filesystem::path pairs;           // calibration pairs
  std::optional<std::uint64_t> seed;
  std::optional<double> duration_s;  // trims or extends the scenario
  double tau_loc = 0.35;
  PipelineKnobs knobs;
};

/// Applies the keys present in a JSON config object on top of `cfg`.
/// Relative paths in it are taken relative to `base_dir` when one is given.
void apply_config_file(RunConfig& cfg, const nlohmann::json& j, const std::filesystem::path& base_dir = {});

[[nodiscard]] nlohmann::json to_json(const RunConfig& cfg);

/// 64-bit FNV-1a of a string, as 16 hex digits.
[[nodiscard]] std::string fnv1a_hex(const std::string& text);

/// Resolves `cfg.scenario` to a spec (built-in name first, then file path)
/// and applies the seed override.
[[nodiscard]] ScenarioSpec resolve_scenario(const RunConfig& cfg);

[[nodiscard]] MicPairConfig resolve_mic(const RunConfig& cfg);

/// Vision and audio event streams for a generated dataset.
[[nodiscard]] std::vector<TimedEvent> to_events(const std::vector<GeneratedInterval>& data);

/// Rebuilds interval records from replayed event streams by pairing the
/// vision streams with ApproximateTime and attaching ITDs with TimeFrame.
[[nodiscard]] std::vector<GeneratedInterval> from_events(const std::vector<TimedEvent>& events);

int cmd_generate(const RunConfig& cfg, std::ostream& out);
int cmd_run(const RunConfig& cfg, std::ostream& out);
int cmd_calibrate(const RunConfig& cfg, std::ostream& out);
int cmd_scenarios(std::ostream& out);

/// Full command-line entry point. Returns the process exit code.
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace avfusion::cli
