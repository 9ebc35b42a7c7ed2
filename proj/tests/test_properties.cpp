#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

using namespace testing_support;
namespace ek = enforcekit;

namespace {

constexpr std::size_t kMaxLen = 5;

struct Subject {
  std::string label;
  ek::EnforcementModel model;
  std::vector<ek::PolicyParams> policies;
  const ek::ApiCatalog* catalog;
};

std::vector<Subject> subjects() {
  std::vector<Subject> out;
  for (const auto& cm : corpus_models()) out.push_back({cm.entry.name, cm.model, cm.entry.policies, &android_catalog()});
  out.push_back({"fig1", model_file("fig1.json"), {}, &demo_catalog()});
  return out;
}

template <typename Fn>
void for_all(Fn&& fn) {
  for (const auto& s : subjects()) {
    CAPTURE(s.label);
    const auto h = s.catalog->hierarchy();
    const auto enforcer = ek::deploy({s.model}, config_for(*s.catalog));
    const auto alphabet = brute_force_alphabet(s.model, *s.catalog);
    std::size_t failures = 0;
    for_each_trace(s.model, h, alphabet, kMaxLen, [&](const ek::Trace& t) {
      if (!fn(s, h, enforcer, t)) ++failures;
    });
    CHECK(failures == 0);
  }
}

}  // namespace

TEST_CASE("compliant traces pass through unchanged") {
  for_all([](const Subject& s, const ek::ClassHierarchy& h, const auto& enforcer, const ek::Trace& t) {
    if (s.policies.empty() || !accepted(s.policies, h, t)) return true;
    return run_session(enforcer, t) == t;
  });
}

TEST_CASE("every output satisfies the policy") {
  for_all([](const Subject& s, const ek::ClassHierarchy& h, const auto& enforcer, const ek::Trace& t) {
    return s.policies.empty() || accepted(s.policies, h, run_session(enforcer, t));
  });
}

TEST_CASE("the engine agrees with a direct interpretation of the automaton") {
  for_all([](const Subject& s, const ek::ClassHierarchy& h, const auto& enforcer, const ek::Trace& t) {
    if (s.model.uses_special("resume")) return true;
    return project(run_session(enforcer, t)) == reference_enforce(s.model, h, t);
  });
}

TEST_CASE("bookkeeping balances and the enforcer never fires on its own events") {
  for_all([](const Subject&, const ek::ClassHierarchy&, const auto& enforcer, const ek::Trace& t) {
    ek::EnforcementReport r;
    const auto out = run_session(enforcer, t, &r);
    return r.balanced() && r.events_in == t.size() && r.events_out == out.size() &&
           r.fired_by_source[static_cast<std::size_t>(ek::Source::Enforcer)] == 0;
  });
}

TEST_CASE("enforcer-sourced events change no instance state") {
  for_all([](const Subject&, const ek::ClassHierarchy&, const auto& enforcer, const ek::Trace& t) {
    ek::Trace noisy;
    for (const auto& e : t) {
      noisy.push_back(e);
      auto echo = e;
      echo.source = ek::Source::Enforcer;
      noisy.push_back(echo);
    }
    ek::EnforcementReport plain_report, noisy_report;
    run_session(enforcer, t, &plain_report);
    run_session(enforcer, noisy, &noisy_report);
    if (plain_report.instances.size() != noisy_report.instances.size()) return false;
    for (std::size_t i = 0; i < plain_report.instances.size(); ++i) {
      const auto& a = plain_report.instances[i];
      const auto& b = noisy_report.instances[i];
      if (a.final_state != b.final_state || a.inserted != b.inserted || a.suppressed != b.suppressed) return false;
    }
    return noisy_report.inserted == plain_report.inserted && noisy_report.suppressed == plain_report.suppressed;
  });
}

TEST_CASE("output of a prefix is a prefix of the output") {
  for_all([](const Subject&, const ek::ClassHierarchy&, const auto& enforcer, const ek::Trace& t) {
    const auto full = run_session(enforcer, t);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const auto part = run_session(enforcer, ek::Trace(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(k)));
      if (part.size() > full.size() || !std::equal(part.begin(), part.end(), full.begin())) return false;
    }
    return true;
  });
}

TEST_CASE("enforcement is deterministic") {
  for_all([](const Subject& s, const ek::ClassHierarchy&, const auto& enforcer, const ek::Trace& t) {
    const auto fresh = ek::deploy({s.model}, config_for(*s.catalog));
    return run_session(enforcer, t) == run_session(fresh, t);
  });
}

TEST_CASE("the lifecycle filter only narrows the camera model") {
  for (const auto& s : subjects()) {
    CAPTURE(s.label);
    const auto h = s.catalog->hierarchy();
    const auto alphabet = brute_force_alphabet(s.model, *s.catalog);
    const auto stats = for_each_trace(s.model, h, alphabet, 3, [](const ek::Trace&) {});
    const bool narrowed = LifecycleLegality(s.model, h, alphabet).active();
    CHECK(narrowed == (s.label == "CameraReleaseOnPause"));
    if (narrowed) {
      CHECK(stats.legal < stats.total);
    } else {
      CHECK(stats.legal == stats.total);
    }
  }
}
