#pragma once

#include <optional>
#include <string>
#include <vector>

#include "specshield/asm_unit.hpp"
#include "specshield/size_model.hpp"

namespace specshield {

enum class SiteKind { indirect_jump, indirect_call, direct_call, prologue };

struct RewriteSite {
  SiteKind kind;
  size_t index = 0;          // item index of the matched instruction
  Register target{};         // indirect kinds
  std::string callee;        // direct_call
  std::string function;      // prologue
};

struct HardenConfig {
  bool jumps = false;
  bool calls = false;
  bool rsb = false;
  IsaProfile isa = IsaProfile::rv64gc;
  int label_seed = 0;
  // Proceed even when some function's prologue is unrecognized (the +S skip
  // applied at indirect-call sites is then unsafe for those functions).
  bool force = false;

  bool any() const { return jumps || calls || rsb; }
};

struct CategoryOverhead {
  int count = 0;
  int64_t delta_total = 0;
  // Per-site delta when uniform across all sites of the category.
  std::optional<int64_t> delta_bytes;
};

struct OverheadReport {
  IsaProfile isa = IsaProfile::rv64gc;
  CategoryOverhead indirect_jumps;
  CategoryOverhead indirect_calls;
  CategoryOverhead prologues;
  CategoryOverhead direct_calls;
  uint64_t total_before = 0;
  uint64_t total_after = 0;

  int64_t total_delta() const {
    return indirect_jumps.delta_total + indirect_calls.delta_total +
           prologues.delta_total + direct_calls.delta_total;
  }
  std::string to_json() const;
};

struct HardenResult {
  AsmUnit unit;
  OverheadReport report;
  std::vector<std::string> diagnostics;
};

class HardenError : public AsmError {
 public:
  using AsmError::AsmError;
};

// Matched sites in item order, original-origin instructions only. `ret`
// (jalr x0, ra, 0) is never a site. Prologue sites cover functions whose
// body starts with the canonical four-instruction prologue.
std::vector<RewriteSite> find_rewrite_sites(const AsmUnit& unit, const HardenConfig& config);

// Recognized canonical prologue: addi sp,sp,-N; sd ra,N-8(sp);
// sd fp,N-16(sp); addi fp,sp,K with N >= 16, N % 8 == 0.
struct PrologueShape {
  int64_t frame = 0;   // N
  int64_t fp_off = 0;  // K
  size_t first = 0;    // item index of the addi sp,sp,-N
};
std::optional<PrologueShape> match_prologue(const AsmUnit& unit, const FunctionSpan& fn);

// Applies the enabled rewrites in one pass (prologues before calls). Throws
// HardenError when calls are enabled and a function prologue is unrecognized,
// unless config.force is set.
HardenResult harden_unit(const AsmUnit& unit, const HardenConfig& config);

}  // namespace specshield
