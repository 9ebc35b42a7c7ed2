#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

using namespace testing_support;
namespace ek = enforcekit;

namespace {

const CorpusModel& corpus_model(const std::string& name) {
  for (const auto& cm : corpus_models()) {
    if (cm.entry.name == name) return cm;
  }
  FAIL("no corpus model " << name);
  throw std::logic_error("unreachable");
}

ek::PolicyParams camera_policy() {
  return {ek::PolicyTemplate::InvokeWhenCallback, ek::parse_method_ref("android.hardware.Camera.open"),
          ek::parse_method_ref("android.hardware.Camera.release"), ek::parse_method_ref("android.app.Activity.onPause")};
}

ek::Scenario scenario(const char* json) { return ek::scenario_from_json(nlohmann::json::parse(json)); }

const char* kPlayerLeak = R"({
  "name": "player_leak",
  "components": [{"id": "main", "class": "com.t.PlayerActivity", "kind": "Activity"}],
  "script": [
    {"step": "lifecycle", "component": "main", "callback": "create",
     "body": [{"class": "android.media.MediaPlayer", "method": "create", "receiver": "mp", "new": true}]},
    {"step": "lifecycle", "component": "main", "callback": "start"},
    {"step": "lifecycle", "component": "main", "callback": "resume"},
    {"step": "call", "component": "main", "class": "android.media.MediaPlayer", "method": "start", "receiver": "mp"},
    {"step": "lifecycle", "component": "main", "callback": "pause"},
    {"step": "lifecycle", "component": "main", "callback": "stop"}
  ]})";

// Holders per exclusive resource class never exceed one.
std::size_t max_exclusive_holders(const ek::Trace& t, const ek::ApiCatalog& catalog) {
  std::map<std::string, std::set<std::int64_t>> holders;
  std::size_t worst = 0;
  for (const auto& e : t) {
    const auto* info = catalog.resource_info(e.class_name);
    if (!info || info->resource_kind != ek::ResourceKind::Exclusive) continue;
    if (e.phase == ek::Phase::AfterCall && info->acquire.count(e.method_name)) holders[e.class_name].insert(e.receiver_id);
    if (e.phase == ek::Phase::BeforeCall && info->release.count(e.method_name)) holders[e.class_name].erase(e.receiver_id);
    worst = std::max(worst, holders[e.class_name].size());
  }
  return worst;
}

}  // namespace

TEST_CASE("the camera running example: leak without enforcement") {
  const auto s = ek::load_scenario(data_dir() / "scenarios" / "plumeria_camera_leak.json");
  const auto off = ek::run_scenario(s, {}, {camera_policy()}, android_catalog(), false);
  CHECK(off.verdict == ek::Verdict::ViolationUnhealed);
  REQUIRE(off.exceptions.size() == 1);
  CHECK(off.exceptions[0].kind == "CameraInUse");
  // The exception happens in the second onCreate.
  const auto& step = std::get<ek::LifecycleStep>(s.script.at(off.exceptions[0].step));
  CHECK(step.callback == "create");
  CHECK(off.exceptions[0].step > 0);
  CHECK_FALSE(off.report);
}

TEST_CASE("the camera running example: healed with enforcement") {
  const auto s = ek::load_scenario(data_dir() / "scenarios" / "plumeria_camera_leak.json");
  const auto on = ek::run_scenario(s, {model_file("camera_policy1.json")}, {camera_policy()}, android_catalog(), true);
  CHECK(on.verdict == ek::Verdict::Healed);
  CHECK(on.exceptions.empty());
  CHECK(on.leaks.empty());
  REQUIRE(on.report);
  CHECK(on.report->balanced());
  std::size_t resumes = 0;
  for (const auto& inst : on.report->instances) resumes += inst.resumes;
  CHECK(resumes == 1);

  // The re-opened camera is the same object the app holds.
  std::vector<std::string> reopened;
  for (const auto& e : on.trace_out) {
    if (e.source == ek::Source::Enforcer && e.method_name == "open") reopened.push_back(on.names.at(e.receiver_id));
  }
  CHECK(reopened == std::vector<std::string>{"cam1", "cam1"});
  CHECK(ek::accepts_all({camera_policy()}, ek::scenario_catalog(s, android_catalog()).hierarchy(), on.trace_out));
  CHECK_FALSE(ek::accepts_all({camera_policy()}, ek::scenario_catalog(s, android_catalog()).hierarchy(), on.trace_in));
  CHECK(max_exclusive_holders(on.trace_out, android_catalog()) <= 1);
}

TEST_CASE("leaks of paused components are reported and healed") {
  const auto s = scenario(kPlayerLeak);
  const auto& mp = corpus_model("MediaPlayerReleaseOnPause");
  const auto off = ek::run_scenario(s, {}, mp.entry.policies, android_catalog(), false);
  CHECK(off.verdict == ek::Verdict::ViolationUnhealed);
  REQUIRE(off.leaks.size() == 1);
  CHECK(off.leaks[0] == ek::Leak{"main", "android.media.MediaPlayer", "mp"});

  const auto on = ek::run_scenario(s, {mp.model}, mp.entry.policies, android_catalog(), true);
  CHECK(on.verdict == ek::Verdict::Healed);
  CHECK(on.leaks.empty());
  CHECK(on.clean() == false);
}

TEST_CASE("a compliant app is left alone") {
  const auto s = ek::load_scenario(data_dir() / "corpus" / "scenarios" / "getbackgps_location_activity.json");
  const auto& m = corpus_model("LocationRemoveUpdatesOnPause");
  const auto on = ek::run_scenario(s, {m.model}, m.entry.policies, android_catalog(), true);
  CHECK(on.verdict == ek::Verdict::NoViolation);
  CHECK(on.trace_out == on.trace_in);
  CHECK(on.clean());
}

TEST_CASE("use after a forced release raises ResourceReleased") {
  const auto s = scenario(R"({
    "name": "preview_after_pause",
    "components": [{"id": "main", "class": "com.t.Cam", "kind": "Activity"}],
    "script": [
      {"step": "lifecycle", "component": "main", "callback": "create",
       "body": [{"class": "android.hardware.Camera", "method": "open", "receiver": "cam", "new": true},
                {"class": "android.hardware.Camera", "method": "startPreview", "receiver": "cam"}]},
      {"step": "lifecycle", "component": "main", "callback": "start"},
      {"step": "lifecycle", "component": "main", "callback": "resume"},
      {"step": "lifecycle", "component": "main", "callback": "pause"},
      {"step": "lifecycle", "component": "main", "callback": "resume",
       "body": [{"class": "android.hardware.Camera", "method": "startPreview", "receiver": "cam"}]}
    ]})");
  const auto& m = corpus_model("CameraReleaseAfterPreviewOnPause");
  const auto on = ek::run_scenario(s, {m.model}, m.entry.policies, android_catalog(), true);
  REQUIRE(on.exceptions.size() == 1);
  CHECK(on.exceptions[0] == ek::SimException{4, "ResourceReleased"});
  // Verdicts come from the acceptors alone; the crash is reported beside it.
  CHECK(on.verdict == ek::Verdict::Healed);
  CHECK_FALSE(on.clean());
}

TEST_CASE("scenario errors") {
  auto code = [](const char* json) {
    try {
      ek::run_scenario(ek::scenario_from_json(nlohmann::json::parse(json)), {}, {}, android_catalog(), false);
    } catch (const ek::Error& e) {
      return e.code();
    }
    return std::string();
  };
  CHECK(code(R"({"name": "x", "components": [{"id": "a", "class": "com.t.A", "kind": "Activity"}],
                 "script": [{"step": "lifecycle", "component": "a", "callback": "resume"}]})") == "ScenarioError");
  CHECK(code(R"({"name": "x", "components": [{"id": "a", "class": "com.t.A", "kind": "Activity"}],
                 "script": [{"step": "lifecycle", "component": "a", "callback": "create",
                             "body": [{"class": "android.hardware.Camera", "method": "open", "receiver": "c"}]}]})") ==
        "ScenarioError");
  CHECK(code(R"({"name": "x", "components": [{"id": "a", "class": "com.t.A", "kind": "Activity"}],
                 "script": [{"step": "lifecycle", "component": "b", "callback": "create"}]})") == "ScenarioError");
  CHECK(code(R"({"name": "x", "components": [{"id": "s", "class": "com.t.S", "kind": "Service"}],
                 "script": [{"step": "lifecycle", "component": "s", "callback": "create"},
                            {"step": "lifecycle", "component": "s", "callback": "pause"}]})") == "ScenarioError");
}

TEST_CASE("scenario catalog adds component classes") {
  const auto s = scenario(kPlayerLeak);
  const auto cat = ek::scenario_catalog(s, android_catalog());
  CHECK(cat.hierarchy().is_subclass("com.t.PlayerActivity", "android.app.Activity"));
  CHECK_FALSE(android_catalog().find("com.t.PlayerActivity"));
}

TEST_CASE("runs are deterministic and serialisable") {
  const auto s = ek::load_scenario(data_dir() / "scenarios" / "plumeria_camera_leak.json");
  const auto a = ek::run_scenario(s, {model_file("camera_policy1.json")}, {camera_policy()}, android_catalog(), true);
  const auto b = ek::run_scenario(s, {model_file("camera_policy1.json")}, {camera_policy()}, android_catalog(), true);
  CHECK(a.trace_out == b.trace_out);
  const auto doc = ek::outcome_to_json(a);
  CHECK(doc["verdict"] == "Healed");
  CHECK(ek::parse_verdict("NoViolation") == ek::Verdict::NoViolation);
  CHECK_THROWS_AS(ek::parse_verdict("Fine"), ek::Error);
}

TEST_CASE("the corpus reproduces its expected verdicts") {
  const auto report = ek::run_corpus(data_dir() / "corpus", data_dir() / "models", android_catalog(), true);
  CHECK(report.cases.size() == 27);
  CHECK(report.models_loaded == 19);
  CHECK(report.healed == 17);
  CHECK(report.no_violation == 10);
  CHECK(report.unhealed == 0);
  for (const auto& c : report.cases) {
    CAPTURE(c.row.app);
    CHECK(c.matches());
    CHECK(c.outcome.exceptions.empty());
    CHECK(c.outcome.leaks.empty());
    REQUIRE(c.outcome.report);
    CHECK(c.outcome.report->balanced());
    CHECK(max_exclusive_holders(c.outcome.trace_out, android_catalog()) <= 1);
  }
  CHECK(ek::format_corpus(report).find("17 healed") != std::string::npos);
  CHECK(ek::corpus_to_json(report)["healed"] == 17);
}

TEST_CASE("without enforcement every healed case shows its violation") {
  const auto on = ek::run_corpus(data_dir() / "corpus", data_dir() / "models", android_catalog(), true);
  const auto off = ek::run_corpus(data_dir() / "corpus", data_dir() / "models", android_catalog(), false);
  REQUIRE(on.cases.size() == off.cases.size());
  for (std::size_t i = 0; i < on.cases.size(); ++i) {
    CAPTURE(on.cases[i].row.app);
    const bool healed = on.cases[i].outcome.verdict == ek::Verdict::Healed;
    CHECK(off.cases[i].outcome.clean() != healed);
    CHECK(off.cases[i].outcome.trace_in == on.cases[i].outcome.trace_in);
  }
  CHECK(off.flagged == 17);
}

TEST_CASE("missing corpus files are reported") {
  try {
    ek::run_corpus(data_dir() / "no-corpus", data_dir() / "models", android_catalog(), true);
    FAIL("expected MissingFixture");
  } catch (const ek::Error& e) {
    CHECK(e.code() == "MissingFixture");
  }
}

TEST_CASE("bench rows and CSV") {
  const auto s = ek::load_scenario(data_dir() / "corpus" / "scenarios" / "bluechat.json");
  std::vector<ek::EnforcementModel> pool;
  for (const auto& cm : corpus_models()) pool.push_back(cm.model);
  const auto rows = ek::bench_overhead(s, pool, android_catalog(), {1, 3}, 1);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].n_modules == 0);
  CHECK(rows[0].overhead_pct == 0.0);
  CHECK(rows[1].n_modules == 1);
  CHECK(rows[2].n_modules == 3);
  for (const auto& r : rows) CHECK(r.mean_us_per_event > 0.0);
  const auto csv = ek::bench_csv(rows);
  CHECK(csv.rfind("n_modules,mean_us_per_event,overhead_pct\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
