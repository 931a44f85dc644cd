#include "cli_commands.hpp"

#include <Eigen/Core>
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "avfusion/error.hpp"
#include "avfusion/evaluation.hpp"
#include "avfusion/io.hpp"

#ifndef AVFUSION_VERSION
#define AVFUSION_VERSION "unknown"
#endif

namespace avfusion::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFeatureScope = "/vision/features";
constexpr const char* kAnnotationScope = "/vision/annotations";
constexpr const char* kItdScope = "/audio/itd";
constexpr const char* kFrameScope = "/vision/frame";
constexpr std::int64_t kAnnotationLatencyNs = 1'000'000;
constexpr int kHistogramBins = 50;

std::string pipeline_name(PipelineKind k) {
  return k == PipelineKind::face_guided ? "face_guided" : "motion_guided";
}

PipelineKind parse_pipeline(const std::string& s) {
  if (s == "motion_guided" || s == "motion") return PipelineKind::motion_guided;
  if (s == "face_guided" || s == "face") return PipelineKind::face_guided;
  throw InvalidInput("unknown pipeline '" + s + "' (expected motion_guided or face_guided)");
}

std::int64_t to_ns(double seconds) { return std::llround(seconds * 1e9); }

std::vector<std::uint8_t> bytes_of(const json& j) {
  const std::string s = j.dump();
  return {s.begin(), s.end()};
}

json json_of(const std::vector<std::uint8_t>& bytes) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed event payload: ") + e.what());
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw InvalidInput("cannot write " + p.string());
  return os;
}

void write_text(const fs::path& p, const std::string& text) { open_out(p) << text; }

json manifest(const std::string& command, const RunConfig& cfg, const ScenarioSpec* spec) {
  const json config = to_json(cfg);
  // The output location does not change results, so it stays out of the hash.
  json hashed = config;
  hashed.erase("out");
  json m = {{"tool", "avfusion"},
            {"version", AVFUSION_VERSION},
            {"command", command},
            {"config", config},
            {"config_hash", fnv1a_hex(hashed.dump())},
            {"libraries",
             {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
#if defined(__VERSION__)
            {"compiler", __VERSION__},
#endif
  };
  if (spec) {
    m["scenario"] = spec->name;
    m["seed"] = spec->seed;
    m["scenario_hash"] = fnv1a_hex(json(*spec).dump());
  }
  return m;
}

std::vector<GeneratedInterval> load_observations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  if (path.extension() == ".replay") return from_events(read_replay(in));
  std::vector<GeneratedInterval> out;
  for (const auto& j : read_jsonl(in)) {
    try {
      out.push_back(j.get<GeneratedInterval>());
    } catch (const json::exception& e) {
      throw InvalidInput(path.string() + ": " + e.what());
    }
  }
  return out;
}

json histogram(const std::vector<double>& itds, const OutlierDomain& d, const std::vector<AVObject>& objects,
               const MicPairConfig& mic, int interval) {
  std::vector<int> counts(kHistogramBins, 0);
  for (double a : itds) {
    const auto bin = static_cast<int>(std::floor((a - d.lo) / d.width() * kHistogramBins));
    ++counts[static_cast<std::size_t>(std::clamp(bin, 0, kHistogramBins - 1))];
  }
  json marks = json::array();
  for (const auto& o : objects) marks.push_back({{"itd", itd_map_corrected(o.position, mic)}, {"speaking", o.speaking}});
  return {{"interval_index", interval}, {"lo", d.lo}, {"hi", d.hi}, {"counts", counts}, {"objects", marks}};
}

}  // namespace

void apply_config_file(RunConfig& cfg, const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw InvalidInput("config file must hold a JSON object");
  auto path = [&](const char* key) {
    const fs::path p = j.at(key).get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  try {
    if (j.contains("scenario")) {
      const auto name = j.at("scenario").get<std::string>();
      cfg.scenario = builtin_scenarios().contains(name) ? name : path("scenario").string();
    }
    if (j.contains("pipeline")) cfg.pipeline = parse_pipeline(j.at("pipeline").get<std::string>());
    if (j.contains("mic_config")) cfg.mic_config = path("mic_config");
    if (j.contains("out")) cfg.out = path("out");
    if (j.contains("input")) cfg.input = path("input");
    if (j.contains("pairs")) cfg.pairs = path("pairs");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("duration")) cfg.duration_s = j.at("duration").get<double>();
    if (j.contains("tau_loc")) cfg.tau_loc = j.at("tau_loc").get<double>();
    if (j.contains("tol")) cfg.knobs.em.tol = j.at("tol").get<double>();
    if (j.contains("max_iter")) cfg.knobs.em.max_iter = j.at("max_iter").get<int>();
    if (j.contains("n_max")) cfg.knobs.n_max = j.at("n_max").get<int>();
    if (j.contains("det_threshold")) cfg.knobs.det_threshold = j.at("det_threshold").get<double>();
    if (j.contains("domain_margin")) cfg.knobs.domain_margin = j.at("domain_margin").get<double>();
    if (j.contains("energy_gate")) cfg.knobs.energy_gate = j.at("energy_gate").get<double>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config file: ") + e.what());
  }
}

json to_json(const RunConfig& cfg) {
  json j = {{"scenario", cfg.scenario},
            {"mic_config", cfg.mic_config.string()},
            {"out", cfg.out.string()},
            {"input", cfg.input.string()},
            {"tau_loc", cfg.tau_loc},
            {"knobs", cfg.knobs}};
  j["pipeline"] = cfg.pipeline ? json(pipeline_name(*cfg.pipeline)) : json(nullptr);
  j["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
  j["duration"] = cfg.duration_s ? json(*cfg.duration_s) : json(nullptr);
  return j;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

ScenarioSpec resolve_scenario(const RunConfig& cfg) {
  if (cfg.scenario.empty()) throw InvalidInput("no scenario given (--scenario NAME|FILE)");
  ScenarioSpec spec;
  const auto builtin = builtin_scenarios();
  if (const auto it = builtin.find(cfg.scenario); it != builtin.end()) {
    spec = it->second;
  } else {
    const fs::path path(cfg.scenario);
    if (!fs::exists(path)) throw InvalidInput("unknown scenario or missing spec file: " + path.string());
    try {
      spec = read_json_file(path).get<ScenarioSpec>();
    } catch (const json::exception& e) {
      throw InvalidInput(path.string() + ": " + e.what());
    }
    if (spec.name.empty()) spec.name = path.stem().string();
  }
  if (cfg.seed) spec.seed = *cfg.seed;
  if (cfg.duration_s) spec.duration_s = *cfg.duration_s;
  spec.domain_margin = cfg.knobs.domain_margin;
  return spec;
}

MicPairConfig resolve_mic(const RunConfig& cfg) {
  if (cfg.mic_config.empty()) return {};
  return load_mic_config(cfg.mic_config);
}

std::vector<TimedEvent> to_events(const std::vector<GeneratedInterval>& data) {
  std::vector<TimedEvent> events;
  for (const auto& g : data) {
    const double dt = g.obs.duration;
    const std::int64_t mid = to_ns(g.t_start + 0.5 * dt);
    events.push_back({kFeatureScope, mid,
                      bytes_of({{"interval_index", g.obs.interval_index},
                                {"t_start", g.t_start},
                                {"duration", dt},
                                {"visual", g.obs.visual}})});
    events.push_back({kAnnotationScope, mid + kAnnotationLatencyNs,
                      bytes_of({{"interval_index", g.obs.interval_index},
                                {"truth", g.truth.objects},
                                {"visual_tags", g.truth.visual_tags}})});
    const std::size_t k = g.obs.auditory.size();
    for (std::size_t i = 0; i < k; ++i) {
      json p = {{"itd", g.obs.auditory[i]}};
      if (i < g.obs.auditory_energy.size()) p["energy"] = g.obs.auditory_energy[i];
      if (i < g.truth.itd_tags.size()) p["tag"] = g.truth.itd_tags[i];
      const double t = g.t_start + (static_cast<double>(i) + 0.5) * dt / static_cast<double>(k);
      events.push_back({kItdScope, to_ns(t), bytes_of(p)});
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.timestamp_ns < b.timestamp_ns; });
  return events;
}

std::vector<GeneratedInterval> from_events(const std::vector<TimedEvent>& events) {
  // The attachment window is half an interval on each side of the frame.
  double duration = kDefaultIntervalSeconds;
  for (const auto& e : events) {
    if (e.scope == kFeatureScope) {
      duration = json_of(e.payload).value("duration", duration);
      break;
    }
  }
  const std::int64_t half = to_ns(0.5 * duration);

  std::vector<GeneratedInterval> out;
  TimeFrameSynchronizer frames(kFrameScope, {kItdScope}, half, half, [&](SyncSet set) {
    const json frame = json_of(set.events.at(kFrameScope).at(0).payload);
    GeneratedInterval g;
    g.obs.interval_index = frame.at("interval_index").get<int>();
    g.t_start = frame.at("t_start").get<double>();
    g.obs.duration = frame.at("duration").get<double>();
    g.obs.visual = frame.at("visual").get<std::vector<ScenePoint>>();
    g.truth.objects = frame.at("truth").get<std::vector<TruthObject>>();
    g.truth.visual_tags = frame.at("visual_tags").get<std::vector<int>>();
    for (const auto& e : set.events[kItdScope]) {
      const json p = json_of(e.payload);
      g.obs.auditory.push_back(p.at("itd").get<double>());
      if (p.contains("energy")) g.obs.auditory_energy.push_back(p.at("energy").get<double>());
      if (p.contains("tag")) g.truth.itd_tags.push_back(p.at("tag").get<int>());
    }
    if (!g.obs.auditory_energy.empty() && g.obs.auditory_energy.size() != g.obs.auditory.size()) {
      throw InvalidInput("replayed ITD events mix records with and without energies");
    }
    out.push_back(std::move(g));
  });
  ApproximateTimeSynchronizer vision({kFeatureScope, kAnnotationScope}, [&](SyncSet set) {
    const auto& feat = set.events.at(kFeatureScope).at(0);
    json frame = json_of(feat.payload);
    const json ann = json_of(set.events.at(kAnnotationScope).at(0).payload);
    frame["truth"] = ann.value("truth", json::array());
    frame["visual_tags"] = ann.value("visual_tags", json::array());
    frames.push({kFrameScope, feat.timestamp_ns, bytes_of(frame)});
  });

  std::vector<TimedEvent> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.timestamp_ns < b.timestamp_ns; });
  try {
    for (auto& e : sorted) {
      if (e.scope == kFeatureScope || e.scope == kAnnotationScope) {
        vision.push(std::move(e));
      } else if (e.scope == kItdScope) {
        frames.push(std::move(e));
      } else {
        throw InvalidInput("unknown scope in replay: " + e.scope);
      }
    }
    vision.close();
    frames.close();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed replay record: ") + e.what());
  }
  return out;
}

int cmd_generate(const RunConfig& cfg, std::ostream& out) {
  const ScenarioSpec spec = resolve_scenario(cfg);
  const MicPairConfig mic = resolve_mic(cfg);
  const auto data = generate(spec, mic);
  fs::create_directories(cfg.out);

  auto obs = open_out(cfg.out / "observations.jsonl");
  double visual = 0.0, auditory = 0.0;
  for (const auto& g : data) {
    obs << json(g).dump() << '\n';
    visual += static_cast<double>(g.obs.visual.size());
    auditory += static_cast<double>(g.obs.auditory.size());
  }
  auto replay = open_out(cfg.out / "events.replay");
  replay << "# scope timestamp_ns payload_hex\n";
  write_replay(replay, to_events(data));
  write_text(cfg.out / "scenario.json", json(spec).dump(2) + "\n");
  write_text(cfg.out / "mic_config.json", json(mic).dump(2) + "\n");
  write_text(cfg.out / "manifest.json", manifest("generate", cfg, &spec).dump(2) + "\n");

  const double n = static_cast<double>(std::max<std::size_t>(1, data.size()));
  out << "generated " << data.size() << " intervals of " << spec.name << " (seed " << spec.seed << ") in "
      << cfg.out.string() << '\n'
      << std::fixed << std::setprecision(1) << "per interval: " << visual / n << " visual, " << auditory / n
      << " auditory\n";
  return kExitOk;
}

int cmd_run(const RunConfig& cfg, std::ostream& out) {
  const MicPairConfig mic = resolve_mic(cfg);
  std::vector<GeneratedInterval> data;
  std::string name;
  std::optional<ScenarioSpec> spec;
  PipelineKind kind = PipelineKind::motion_guided;
  if (!cfg.input.empty()) {
    data = load_observations(cfg.input);
    name = cfg.input.parent_path().filename().string();
    const fs::path sidecar = cfg.input.parent_path() / "scenario.json";
    if (fs::exists(sidecar)) {
      const auto s = read_json_file(sidecar).get<ScenarioSpec>();
      name = s.name;
      if (s.face_guided) kind = PipelineKind::face_guided;
    }
  } else {
    spec = resolve_scenario(cfg);
    data = generate(*spec, mic);
    name = spec->name;
    if (spec->face_guided) kind = PipelineKind::face_guided;
  }
  if (cfg.pipeline) kind = *cfg.pipeline;
  if (name.empty()) name = "run";

  fs::create_directories(cfg.out);
  auto results = open_out(cfg.out / "results.jsonl");
  auto scores_file = open_out(cfg.out / "scores.jsonl");
  auto hist = open_out(cfg.out / "itd_histograms.jsonl");
  const auto domain = outlier_domain_for(mic, cfg.knobs.domain_margin);

  std::vector<IntervalScore> scores;
  std::optional<MixtureParams> prev;
  double total_ms = 0.0;
  for (const auto& g : data) {
    const auto gated = gate_auditory(g.obs, cfg.knobs.energy_gate);
    const auto start = std::chrono::steady_clock::now();
    std::vector<AVObject> objects;
    json record = {{"interval_index", g.obs.interval_index}, {"t_start", g.t_start}};
    if (kind == PipelineKind::motion_guided) {
      auto res = motion_guided_interval(gated, mic, prev, cfg.knobs);
      prev = res.model;
      record["n_selected"] = res.n_selected;
      record["bic"] = res.bic;
      objects = std::move(res.objects);
    } else {
      objects = face_guided_interval(gated.visual, gated.auditory, mic, cfg.knobs);
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    total_ms += ms;
    record["objects"] = objects;
    results << record.dump() << '\n';

    std::vector<TruthCluster> truth;
    for (const auto& t : g.truth.objects) {
      if (t.visible) truth.push_back({t.position, t.speaking});
    }
    scores.push_back(match_clusters(objects, truth, cfg.tau_loc));
    json sj = scores.back();
    sj["interval_index"] = g.obs.interval_index;
    scores_file << sj.dump() << '\n';
    hist << histogram(gated.auditory, domain, objects, mic, g.obs.interval_index).dump() << '\n';

    const auto speaking = std::count_if(objects.begin(), objects.end(), [](const AVObject& o) { return o.speaking; });
    out << "interval " << g.obs.interval_index << ": " << objects.size() << " objects, " << speaking << " speaking, "
        << std::fixed << std::setprecision(2) << ms << " ms\n";
  }

  const SummaryTable table = aggregate(scores);
  const std::vector<std::pair<std::string, SummaryTable>> rows{{name, table}};
  const std::string text = format_summary(rows);
  write_text(cfg.out / "summary.txt", text);
  json summary = table;
  summary["scenario"] = name;
  summary["pipeline"] = pipeline_name(kind);
  summary["tau_loc"] = cfg.tau_loc;
  write_text(cfg.out / "summary.json", summary.dump(2) + "\n");
  write_text(cfg.out / "manifest.json", manifest("run", cfg, spec ? &*spec : nullptr).dump(2) + "\n");

  out << text << std::fixed << std::setprecision(2) << "mean wall-clock per interval: "
      << (data.empty() ? 0.0 : total_ms / static_cast<double>(data.size())) << " ms\n";
  return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
  if (cfg.pairs.empty()) throw InvalidInput("no calibration pairs given (--pairs FILE)");
  const MicPairConfig mic = resolve_mic(cfg);
  std::ifstream in(cfg.pairs);
  if (!in) throw InvalidInput("cannot open " + cfg.pairs.string());
  std::vector<CalibrationSample> samples;
  try {
    for (const auto& j : read_jsonl(in)) {
      samples.push_back({j.at("position").get<ScenePoint>(), j.at("itd").get<double>()});
    }
  } catch (const json::exception& e) {
    throw InvalidInput(cfg.pairs.string() + ": " + e.what());
  }
  const MicPairConfig fitted = calibrate(samples, mic);
  const fs::path target = cfg.out.extension() == ".json" ? cfg.out : cfg.out / "mic_config.json";
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  write_text(target, json(fitted).dump(2) + "\n");
  out << std::setprecision(10) << "c1 = " << fitted.c1 << "\nc0 = " << fitted.c0 << "\nresidual RMS = "
      << calibration_rms(samples, fitted) << " s\nwrote " << target.string() << '\n';
  return kExitOk;
}

int cmd_scenarios(std::ostream& out) {
  for (const auto& [name, spec] : builtin_scenarios()) {
    out << std::left << std::setw(8) << name << (spec.face_guided ? "face_guided  " : "motion_guided")
        << "  " << spec.duration_s << " s, " << spec.objects.size() << " objects\n";
  }
  return kExitOk;
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual speaker detection: simulate, run and score the fusion pipelines"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string pipeline;
  std::string config_file;
  std::string out_dir;
  std::uint64_t seed = 0;
  double duration = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON config file; its keys override command-line flags");
    sub->add_option("--mic-config", cfg.mic_config, "Microphone geometry JSON");
    sub->add_option("--out", out_dir, "Output directory");
  };
  auto add_scenario = [&](CLI::App* sub) {
    sub->add_option("--scenario", cfg.scenario, "Built-in scenario name or scenario spec file");
    sub->add_option("--seed", seed, "Override the scenario seed");
    sub->add_option("--duration", duration, "Override the scenario length in seconds");
    sub->add_option("--domain-margin", cfg.knobs.domain_margin, "Outlier-domain margin (fraction of width)");
  };

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (observations and event replay)");
  add_common(gen);
  add_scenario(gen);

  auto* run = app.add_subcommand("run", "Run a pipeline over a scenario or dataset and score it");
  add_common(run);
  add_scenario(run);
  run->add_option("--input", cfg.input, "observations.jsonl or events.replay from 'generate'");
  run->add_option("--pipeline", pipeline, "motion_guided or face_guided (default follows the scenario)");
  run->add_option("--tau-loc", cfg.tau_loc, "Localisation gate in metres")->capture_default_str();
  run->add_option("--n-max", cfg.knobs.n_max, "Largest model order tried")->capture_default_str();
  run->add_option("--det-threshold", cfg.knobs.det_threshold, "Covariance determinant floor (m^6)")
      ->capture_default_str();
  run->add_option("--tol", cfg.knobs.em.tol, "EM log-likelihood gain tolerance")->capture_default_str();
  run->add_option("--max-iter", cfg.knobs.em.max_iter, "EM iteration cap")->capture_default_str();
  run->add_option("--energy-gate", cfg.knobs.energy_gate, "Minimum frame energy for an ITD")->capture_default_str();

  auto* cal = app.add_subcommand("calibrate", "Fit the affine ITD correction from (position, itd) pairs");
  add_common(cal);
  cal->add_option("--pairs", cfg.pairs, "JSON lines with 'position' and 'itd'")->required();

  auto* list = app.add_subcommand("scenarios", "List the built-in scenarios");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (!pipeline.empty()) cfg.pipeline = parse_pipeline(pipeline);
    if (!out_dir.empty()) cfg.out = out_dir;
    for (auto* sub : {gen, run}) {
      if (sub->parsed() && sub->count("--seed") > 0) cfg.seed = seed;
      if (sub->parsed() && sub->count("--duration") > 0) cfg.duration_s = duration;
    }
    if (!config_file.empty()) apply_config_file(cfg, read_json_file(config_file), fs::path(config_file).parent_path());
    if (cfg.knobs.n_max < 0 || cfg.knobs.em.max_iter < 1 || !(cfg.knobs.em.tol > 0.0) || !(cfg.tau_loc > 0.0)) {
      throw InvalidInput("knobs out of range: need n_max >= 0, max_iter >= 1, tol > 0, tau_loc > 0");
    }

    if (gen->parsed()) return cmd_generate(cfg, out);
    if (run->parsed()) return cmd_run(cfg, out);
    if (cal->parsed()) return cmd_calibrate(cfg, out);
    if (list->parsed()) return cmd_scenarios(out);
  } catch (const DegenerateFit& e) {
    err << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const InvalidModel& e) {
    err << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace avfusion::cli
