#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specshield/asm_unit.hpp"
#include "specshield/harden.hpp"
#include "specshield/machine.hpp"

namespace specshield {

struct PocVariant {
  enum class Kind { v2_call, v2_jump, v5 };
  Kind kind = Kind::v2_call;
  std::string secret = "BOOM!";
  int mistrain = 40;
  int trials_per_char = 10;
};

std::optional<PocVariant::Kind> variant_from_name(const std::string& name);
std::string variant_name(PocVariant::Kind kind);

// The mitigation that targets the attack vector of the given variant.
HardenConfig matching_mitigation(PocVariant::Kind kind, IsaProfile isa = IsaProfile::rv64gc);

// Emits the self-contained guest program for one attack variant: victim
// data (array1, array2, the secret), an eviction buffer sized for
// 4 * ways * sets blocks, the gadget, in-guest mistraining, and a reload
// phase that stores per-candidate timings to the `results` region. The
// probed character position is read from the `attackPos` data slot, poked
// by the harness before each run.
AsmUnit build_poc(const PocVariant& variant, const MachineConfig& config);

struct CharOutcome {
  char expected = 0;
  std::map<int, int> guesses;  // candidate byte -> count over trials

  int modal_count() const;
  std::optional<int> modal_byte() const;
};

struct AttackOutcome {
  PocVariant::Kind variant = PocVariant::Kind::v2_call;
  bool mitigated = false;
  std::vector<CharOutcome> per_char;
  std::string recovered;  // '?' marks positions without a confident guess

  std::string transcript() const;
  std::string to_json() const;
};

// Runs trials_per_char independent simulations per secret position and
// aggregates guesses. When `harden` is given the fixture goes through
// harden_unit first. Deterministic for fixed inputs. The observer, when
// set, sees every trial machine after it halts.
AttackOutcome run_attack(
    const PocVariant& variant, const MachineConfig& config,
    const std::optional<HardenConfig>& harden = std::nullopt,
    const std::function<void(const Machine&, const Program&)>& observer = {});

}  // namespace specshield
