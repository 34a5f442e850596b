#pragma once

#include <string>
#include <string_view>

#include "specshield/asm_unit.hpp"

namespace specshield {

// Parses GNU-assembler-style text: `#` line comments, labels `name:`,
// directives `.name args`, one instruction per line. Pseudo-instructions are
// kept as written. Synthesized-code markers (`#@specshield`) survive the
// round trip. Throws AsmError with file:line on syntax errors, duplicate
// labels and unknown mnemonics.
AsmUnit parse_unit(std::string_view text, const std::string& filename = "<input>");

// Emits text that reparses to a structurally equal unit.
std::string print_unit(const AsmUnit& unit);

std::string print_instruction(const Instruction& instr);

}  // namespace specshield
