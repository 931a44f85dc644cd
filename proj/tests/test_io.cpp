#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "avfusion/io.hpp"

using namespace avfusion;

TEST_CASE("scenario specs round-trip through JSON", "[io]") {
  for (const auto& [name, spec] : builtin_scenarios()) {
    const json j = spec;
    const auto back = j.get<ScenarioSpec>();
    CHECK(json(back) == j);
    CHECK(back.objects.size() == spec.objects.size());
  }
}

TEST_CASE("missing scenario keys fall back to defaults", "[io]") {
  const auto spec = json::parse(R"({"name": "tiny", "objects": [{"waypoints": [{"t": 0, "position": [0, 0, 2]}]}]})")
                        .get<ScenarioSpec>();
  const ScenarioSpec d;
  CHECK(spec.name == "tiny");
  CHECK(spec.duration_s == d.duration_s);
  CHECK(spec.visual_points_per_object == d.visual_points_per_object);
  REQUIRE(spec.objects.size() == 1);
  CHECK(spec.objects[0].visible.empty());
  CHECK_THROWS(json::parse(R"({"objects": [{"waypoints": [{"t": 0, "position": [0, 2]}]}]})").get<ScenarioSpec>());
}

TEST_CASE("interval records round-trip exactly", "[io]") {
  auto spec = builtin_scenarios().at("DynVar");
  spec.duration_s = 1.2;
  for (const auto& g : generate(spec, {})) {
    const auto back = json::parse(json(g).dump()).get<GeneratedInterval>();
    CHECK(back.obs.visual == g.obs.visual);
    CHECK(back.obs.auditory == g.obs.auditory);
    CHECK(back.obs.auditory_energy == g.obs.auditory_energy);
    CHECK(back.truth.itd_tags == g.truth.itd_tags);
    CHECK(back.t_start == g.t_start);
    REQUIRE(back.truth.objects.size() == g.truth.objects.size());
    CHECK(back.truth.objects[1].position == g.truth.objects[1].position);
  }
}

TEST_CASE("objects, knobs and mic configs round-trip", "[io]") {
  AVObject o;
  o.position = {0.1, -0.2, 2.5};
  o.covariance << 1e-3, 2e-4, 0, 2e-4, 2e-3, 0, 0, 0, 4e-3;
  o.weight = 0.3;
  o.speaking = true;
  o.auditory_mass = 7.5;
  const auto ob = json(o).get<AVObject>();
  CHECK(ob.position == o.position);
  CHECK(ob.covariance == o.covariance);
  CHECK(ob.speaking);

  PipelineKnobs k;
  k.em.tol = 1e-8;
  k.n_max = 4;
  k.energy_gate = 0.01;
  const auto kb = json(k).get<PipelineKnobs>();
  CHECK(kb.em.tol == 1e-8);
  CHECK(kb.n_max == 4);
  CHECK(kb.energy_gate == 0.01);

  MicPairConfig m;
  m.c1 = 1.1;
  m.mic_left = {-0.06, 0.01, 0.0};
  const auto mb = json(m).get<MicPairConfig>();
  CHECK(mb.c1 == 1.1);
  CHECK(mb.mic_left == m.mic_left);
}

TEST_CASE("summary JSON mirrors the table columns", "[io]") {
  SummaryTable t;
  t.loc_fn = 16;
  t.loc_tp = 392;
  const json j = t;
  CHECK(j.at("FN").get<int>() == 16);
  CHECK(std::abs(j.at("TP_pct").get<double>() - 96.078) < 1e-3);
  for (const char* key : {"FP", "FN_pct", "ALE_m", "audio_FP", "audio_FN", "audio_TP", "audio_TP_pct"}) {
    CHECK(j.contains(key));
  }
}

TEST_CASE("line-delimited reader reports the bad line", "[io]") {
  std::istringstream good("{\"a\": 1}\n\n{\"a\": 2}\n");
  CHECK(read_jsonl(good).size() == 2);
  std::istringstream bad("{\"a\": 1}\n{oops\n");
  try {
    (void)read_jsonl(bad);
    FAIL("expected an exception");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(read_json_file("/nonexistent/mic.json"), InvalidInput);
}
