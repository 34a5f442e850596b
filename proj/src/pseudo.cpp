#include "specshield/pseudo.hpp"

namespace specshield {

namespace {

Instruction make(const Instruction& from, std::string mnemonic, std::vector<Operand> ops) {
  Instruction out;
  out.mnemonic = std::move(mnemonic);
  out.operands = std::move(ops);
  out.origin = from.origin;
  out.no_compress = from.no_compress;
  out.loc = from.loc;
  return out;
}

}  // namespace

bool is_canonical(const Instruction& instr) {
  const auto& m = instr.mnemonic;
  if (m == "jr" || m == "ret" || m == "call" || m == "tail" || m == "j" ||
      m == "mv" || m == "nop" || m == "li" || m == "la")
    return false;
  if (m == "jal" && instr.operands.size() == 1) return false;
  if (m == "jalr" && instr.operands.size() == 1) return false;
  return true;
}

std::vector<Instruction> expand_pseudo(const Instruction& instr) {
  const auto& m = instr.mnemonic;
  if (m == "jr") return {make(instr, "jalr", {reg_zero, instr.reg(0), int64_t{0}})};
  if (m == "ret") return {make(instr, "jalr", {reg_zero, reg_ra, int64_t{0}})};
  if (m == "jalr" && instr.operands.size() == 1)
    return {make(instr, "jalr", {reg_ra, instr.reg(0), int64_t{0}})};
  if (m == "call") return {make(instr, "jal", {reg_ra, instr.sym(0)})};
  if (m == "jal" && instr.operands.size() == 1)
    return {make(instr, "jal", {reg_ra, instr.sym(0)})};
  if (m == "tail" || m == "j")
    return {make(instr, "jal", {reg_zero, instr.sym(0)})};
  if (m == "mv") return {make(instr, "addi", {instr.reg(0), instr.reg(1), int64_t{0}})};
  if (m == "nop") return {make(instr, "addi", {reg_zero, reg_zero, int64_t{0}})};
  if (m == "li") {
    int64_t v = instr.imm(1);
    if (v >= -2048 && v < 2048)
      return {make(instr, "addi", {instr.reg(0), reg_zero, v})};
    int64_t hi = (v + 0x800) >> 12;
    int64_t lo = v - (hi << 12);
    return {make(instr, "lui", {instr.reg(0), hi}),
            make(instr, "addi", {instr.reg(0), instr.reg(0), lo})};
  }
  if (m == "la") {
    SymRef hi{instr.sym(1).name, Reloc::hi};
    SymRef lo{instr.sym(1).name, Reloc::lo};
    return {make(instr, "lui", {instr.reg(0), hi}),
            make(instr, "addi", {instr.reg(0), instr.reg(0), lo})};
  }
  return {instr};
}

AsmUnit expand_unit(const AsmUnit& unit) {
  AsmUnit out;
  for (const auto& item : unit.items) {
    if (const auto* instr = std::get_if<Instruction>(&item)) {
      for (auto& e : expand_pseudo(*instr)) out.items.emplace_back(std::move(e));
    } else {
      out.items.push_back(item);
    }
  }
  reindex(out);
  return out;
}

}  // namespace specshield
