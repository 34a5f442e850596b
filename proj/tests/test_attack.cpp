#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specshield/attack.hpp"
#include "specshield/parser.hpp"

using namespace specshield;

namespace {

const PocVariant::Kind kKinds[] = {PocVariant::Kind::v2_call,
                                   PocVariant::Kind::v2_jump,
                                   PocVariant::Kind::v5};

}  // namespace

TEST_CASE("variant names round-trip") {
  for (auto kind : kKinds) CHECK(variant_from_name(variant_name(kind)) == kind);
  CHECK(variant_from_name("v2_call") == PocVariant::Kind::v2_call);
  CHECK(!variant_from_name("v1"));
}

TEST_CASE("poc fixtures parse, lay out and round-trip") {
  MachineConfig config;
  for (auto kind : kKinds) {
    PocVariant v;
    v.kind = kind;
    AsmUnit unit = build_poc(v, config);
    CHECK(parse_unit(print_unit(unit)) == unit);
    // loadable with a resolvable entry and the harness hooks
    Program program(unit, config);
    CHECK(program.symbol("attackPos"));
    CHECK(program.symbol("results"));
    CHECK(program.symbol("array2"));
    CHECK(program.entry() == *program.symbol("main"));
  }
}

TEST_CASE("poc parameter validation") {
  MachineConfig config;
  PocVariant v;
  v.secret = "";
  CHECK_THROWS_AS(build_poc(v, config), AsmError);
  v.secret = "a\"b";
  CHECK_THROWS_AS(build_poc(v, config), AsmError);
  v.secret = "ok";
  v.mistrain = 0;
  CHECK_THROWS_AS(build_poc(v, config), AsmError);
}

TEST_CASE("unmitigated attacks recover the secret exactly") {
  MachineConfig config;
  for (auto kind : kKinds) {
    PocVariant v;
    v.kind = kind;
    CAPTURE(variant_name(kind));
    AttackOutcome outcome = run_attack(v, config);
    CHECK(outcome.recovered == "BOOM!");
    CHECK(!outcome.mitigated);
    for (const auto& pos : outcome.per_char) {
      CHECK(pos.modal_byte() == int(uint8_t(pos.expected)));
      CHECK(pos.modal_count() == v.trials_per_char);
    }
    std::string t = outcome.transcript();
    CHECK(t.find("The attacker guessed character B 10 times.") != std::string::npos);
    CHECK(t.find("The guessed secret is BOOM!") != std::string::npos);
  }
}

TEST_CASE("matching mitigation stops its attack cold") {
  MachineConfig config;
  for (auto kind : kKinds) {
    PocVariant v;
    v.kind = kind;
    CAPTURE(variant_name(kind));
    AttackOutcome outcome = run_attack(v, config, matching_mitigation(kind));
    CHECK(outcome.mitigated);
    CHECK(outcome.recovered == "?????");
    for (size_t i = 0; i < outcome.per_char.size(); ++i) {
      const auto& pos = outcome.per_char[i];
      auto correct = pos.guesses.find(int(uint8_t(v.secret[i])));
      int correct_n = correct == pos.guesses.end() ? 0 : correct->second;
      CHECK(correct_n <= 1);
    }
    std::string t = outcome.transcript();
    CHECK(t.find("The guessed secret is \n") != std::string::npos);
  }
}

TEST_CASE("non-matching mitigations leave the vector open") {
  MachineConfig config;

  // return-stack hardening does not touch the BTB-trained call site
  PocVariant v2;
  v2.kind = PocVariant::Kind::v2_call;
  auto rsb = matching_mitigation(PocVariant::Kind::v5);
  CHECK(run_attack(v2, config, rsb).recovered == "BOOM!");

  // call/prologue hardening does not stop the return-address desync
  PocVariant v5;
  v5.kind = PocVariant::Kind::v5;
  auto calls = matching_mitigation(PocVariant::Kind::v2_call);
  CHECK(run_attack(v5, config, calls).recovered == "BOOM!");
}

TEST_CASE("custom secrets and shorter training still work") {
  MachineConfig config;
  PocVariant v;
  v.kind = PocVariant::Kind::v2_jump;
  v.secret = "Zx9";
  v.mistrain = 5;
  v.trials_per_char = 4;
  AttackOutcome outcome = run_attack(v, config);
  CHECK(outcome.recovered == "Zx9");
  CHECK(outcome.per_char.size() == 3);
  CHECK(outcome.per_char[0].modal_count() == 4);
}

TEST_CASE("outcome json is canonical and deterministic") {
  MachineConfig config;
  PocVariant v;
  v.kind = PocVariant::Kind::v5;
  auto a = run_attack(v, config);
  auto b = run_attack(v, config);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_json().find("\"variant\": \"v5\"") != std::string::npos);
  CHECK(a.to_json().find("\"recovered\": \"BOOM!\"") != std::string::npos);
  CHECK(a.to_json().find("\"expected\": \"B\"") != std::string::npos);
}

TEST_CASE("observer sees every halted trial") {
  MachineConfig config;
  PocVariant v;
  v.kind = PocVariant::Kind::v2_call;
  v.secret = "Hi";
  v.trials_per_char = 3;
  int seen = 0;
  run_attack(v, config, std::nullopt, [&](const Machine& m, const Program&) {
    CHECK(m.halted());
    ++seen;
  });
  CHECK(seen == 6);
}
