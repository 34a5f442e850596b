#pragma once

#include <cstdint>
#include <map>

#include "specshield/asm_unit.hpp"

namespace specshield {

enum class IsaProfile { rv64g, rv64gc };

// Byte size of an instruction under the given profile. rv64g is fixed-width
// 4. rv64gc uses a calibrated compressibility table:
//   addi sp, sp, imm (literal, nonzero)            2
//   sd rs, imm(sp)   (0..504, multiple of 8)       2
//   ld rd, imm(sp)   (rd != x0, same range)        2
//   jalr x0/ra, rs, 0 (rs != x0, no_compress off)  2
//   jal x0, label                                  2
// Everything else, including jal ra and addi with distinct rd/rs, is 4.
// Pseudo-instructions are sized as the sum of their expansion; the
// address-materialization pair (la) is always 8.
int instr_size(const Instruction& instr, IsaProfile isa);

struct AddressMap {
  uint64_t base_text = 0x1'0000;
  uint64_t base_data = 0x2'0000;
  std::map<size_t, uint64_t> instr_addr;    // item index -> address
  std::map<uint64_t, size_t> addr_item;     // address -> item index
  std::map<std::string, uint64_t> symbol_addr;
  uint64_t text_end = 0;
  uint64_t data_end = 0;
};

// Places .text from base_text and .data from base_data, accumulating
// instr_size. Throws AsmError on symbol operands that neither resolve
// locally nor are declared external.
AddressMap layout(const AsmUnit& unit, IsaProfile isa,
                  uint64_t base_text = 0x1'0000, uint64_t base_data = 0x2'0000);

}  // namespace specshield
