#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace specshield {

// RV64 integer register, identified by hardware index. x0 is hardwired zero.
struct Register {
  uint8_t index = 0;

  bool operator==(const Register&) const = default;
};

// Canonical ABI name table (zero, ra, sp, ..., t6).
const std::string& abi_name(Register r);
std::optional<Register> reg_from_name(const std::string& name);

constexpr Register reg_zero{0};
constexpr Register reg_ra{1};
constexpr Register reg_sp{2};
constexpr Register reg_fp{8};

// Relocation modifier on a symbol operand (%hi/%lo of the address-
// materialization pair).
enum class Reloc { none, hi, lo };

struct SymRef {
  std::string name;
  Reloc reloc = Reloc::none;

  bool operator==(const SymRef&) const = default;
};

struct MemRef {
  int64_t offset = 0;
  Register base;

  bool operator==(const MemRef&) const = default;
};

using Operand = std::variant<Register, int64_t, SymRef, MemRef>;

enum class Origin { original, synthesized };

struct SourceLoc {
  std::string file;
  int line = 0;
};

struct Instruction {
  std::string mnemonic;
  std::vector<Operand> operands;
  Origin origin = Origin::original;
  // Forces the full 4-byte encoding under rv64gc for this instruction.
  bool no_compress = false;
  SourceLoc loc{};

  // Structural equality; source locations are not part of identity.
  bool operator==(const Instruction& o) const {
    return mnemonic == o.mnemonic && operands == o.operands &&
           origin == o.origin && no_compress == o.no_compress;
  }

  const Register& reg(size_t i) const { return std::get<Register>(operands.at(i)); }
  int64_t imm(size_t i) const { return std::get<int64_t>(operands.at(i)); }
  const SymRef& sym(size_t i) const { return std::get<SymRef>(operands.at(i)); }
  const MemRef& mem(size_t i) const { return std::get<MemRef>(operands.at(i)); }
};

struct Label {
  std::string name;
  bool operator==(const Label&) const = default;
};

struct Directive {
  std::string name;  // without the leading dot
  std::string args;
  bool operator==(const Directive&) const = default;
};

using Item = std::variant<Label, Directive, Instruction>;

// Half-open item-index range of a function body, starting at its label.
struct FunctionSpan {
  std::string name;
  size_t begin = 0;
  size_t end = 0;
};

struct AsmUnit {
  std::vector<Item> items;
  std::map<std::string, size_t> symbols;  // label name -> item index
  std::vector<FunctionSpan> functions;    // in item order
  std::set<std::string> externals;        // declared via .extern

  bool operator==(const AsmUnit& o) const { return items == o.items; }
};

class AsmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rebuilds symbols/functions/externals from items. Throws AsmError on
// duplicate labels.
void reindex(AsmUnit& unit);

}  // namespace specshield
