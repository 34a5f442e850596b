#include "specshield/size_model.hpp"

#include <sstream>

#include "specshield/pseudo.hpp"

namespace specshield {

namespace {

bool sp_relative_slot(const MemRef& m) {
  return m.base == reg_sp && m.offset >= 0 && m.offset <= 504 && m.offset % 8 == 0;
}

bool compressible(const Instruction& instr) {
  const auto& m = instr.mnemonic;
  if (m == "addi")
    return instr.reg(0) == reg_sp && instr.reg(1) == reg_sp &&
           std::holds_alternative<int64_t>(instr.operands[2]) && instr.imm(2) != 0;
  if (m == "sd") return sp_relative_slot(instr.mem(1));
  if (m == "ld") return instr.reg(0) != reg_zero && sp_relative_slot(instr.mem(1));
  if (m == "jalr")
    return !instr.no_compress && instr.reg(1) != reg_zero && instr.imm(2) == 0 &&
           (instr.reg(0) == reg_zero || instr.reg(0) == reg_ra);
  if (m == "jal") return instr.reg(0) == reg_zero;
  return false;
}

}  // namespace

int instr_size(const Instruction& instr, IsaProfile isa) {
  if (!is_canonical(instr)) {
    int total = 0;
    for (const auto& e : expand_pseudo(instr)) total += instr_size(e, isa);
    return total;
  }
  if (isa == IsaProfile::rv64g) return 4;
  return compressible(instr) ? 2 : 4;
}

namespace {

// Byte length of one data directive; 0 for non-data directives.
// `cursor` is needed for .align.
uint64_t directive_bytes(const Directive& dir, uint64_t cursor) {
  auto count_args = [&] {
    uint64_t n = 1;
    for (char c : dir.args) n += c == ',';
    return n;
  };
  if (dir.name == "byte") return count_args();
  if (dir.name == "dword" || dir.name == "quad") return 8 * count_args();
  if (dir.name == "asciz") {
    // quoted string; escapes are single bytes
    uint64_t n = 1;  // trailing NUL
    bool in = false, esc = false;
    for (char c : dir.args) {
      if (!in) { in = c == '"'; continue; }
      if (esc) { esc = false; ++n; continue; }
      if (c == '\\') { esc = true; continue; }
      if (c == '"') break;
      ++n;
    }
    return n;
  }
  if (dir.name == "zero" || dir.name == "skip")
    return std::stoull(dir.args);
  if (dir.name == "align") {
    uint64_t align = 1ull << std::stoull(dir.args);
    uint64_t aligned = (cursor + align - 1) & ~(align - 1);
    return aligned - cursor;
  }
  return 0;
}

}  // namespace

AddressMap layout(const AsmUnit& unit, IsaProfile isa, uint64_t base_text, uint64_t base_data) {
  AddressMap map;
  map.base_text = base_text;
  map.base_data = base_data;

  bool in_text = true;
  uint64_t tcur = base_text;
  uint64_t dcur = base_data;

  for (size_t i = 0; i < unit.items.size(); ++i) {
    const auto& item = unit.items[i];
    if (const auto* label = std::get_if<Label>(&item)) {
      map.symbol_addr[label->name] = in_text ? tcur : dcur;
    } else if (const auto* dir = std::get_if<Directive>(&item)) {
      if (dir->name == "text") in_text = true;
      else if (dir->name == "data") in_text = false;
      else if (!in_text) dcur += directive_bytes(*dir, dcur);
      else if (dir->name == "align") tcur += directive_bytes(*dir, tcur);
    } else {
      const auto& instr = std::get<Instruction>(item);
      if (!in_text) throw AsmError("instruction in data section");
      map.instr_addr[i] = tcur;
      map.addr_item[tcur] = i;
      tcur += instr_size(instr, isa);
    }
  }
  map.text_end = tcur;
  map.data_end = dcur;

  // every symbol operand must resolve locally or be declared external
  for (const auto& item : unit.items) {
    const auto* instr = std::get_if<Instruction>(&item);
    if (!instr) continue;
    for (const auto& op : instr->operands) {
      const auto* sym = std::get_if<SymRef>(&op);
      if (!sym) continue;
      if (!map.symbol_addr.count(sym->name) && !unit.externals.count(sym->name)) {
        std::ostringstream msg;
        msg << instr->loc.file << ":" << instr->loc.line
            << ": unresolved local symbol '" << sym->name << "'";
        throw AsmError(msg.str());
      }
    }
  }
  return map;
}

}  // namespace specshield
