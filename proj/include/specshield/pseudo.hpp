#pragma once

#include <vector>

#include "specshield/asm_unit.hpp"

namespace specshield {

// Canonicalizes one pseudo-instruction. Identity on canonical forms; the
// expansion is idempotent.
//   jr rs        -> jalr x0, rs, 0
//   jalr rs      -> jalr ra, rs, 0
//   ret          -> jalr x0, ra, 0
//   call sym     -> jal ra, sym
//   tail sym / j sym -> jal x0, sym
//   mv rd, rs    -> addi rd, rs, 0
//   nop          -> addi x0, x0, 0
//   li rd, imm   -> addi rd, x0, imm (12-bit) or lui+addi pair
//   la rd, sym   -> lui rd, %hi(sym); addi rd, rd, %lo(sym)
std::vector<Instruction> expand_pseudo(const Instruction& instr);

// Maps expand_pseudo over every instruction item.
AsmUnit expand_unit(const AsmUnit& unit);

bool is_canonical(const Instruction& instr);

}  // namespace specshield
