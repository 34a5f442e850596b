#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "specshield/asm_unit.hpp"
#include "specshield/size_model.hpp"

namespace specshield {

struct MachineConfig {
  int cache_sets = 64;
  int cache_ways = 4;
  int block_bytes = 64;
  int hit_latency = 2;
  int miss_latency = 40;
  int btb_sets = 64;
  int btb_ways = 4;
  int ras_depth = 8;
  int spec_window = 32;
  uint64_t max_steps = 10'000'000;
  uint64_t stack_top = 0x8'0000;
  std::optional<int> threshold_override;

  void validate() const;
  static MachineConfig from_json_text(const std::string& text);
};

// Empirical hit/miss separation point: midpoint of the two latencies.
int threshold(const MachineConfig& config);

// Set-associative, true-LRU branch target buffer. Index (pc >> 1) % sets,
// tag pc >> 7 scaled to the configured geometry.
class Btb {
 public:
  Btb(int sets, int ways);
  std::optional<uint64_t> lookup(uint64_t pc) const;
  void update(uint64_t pc, uint64_t target);

 private:
  struct Entry {
    bool valid = false;
    uint64_t tag = 0;
    uint64_t target = 0;
    uint64_t lru = 0;
  };
  int sets_, ways_;
  uint64_t tick_ = 0;
  std::vector<Entry> entries_;
};

class Ras {
 public:
  explicit Ras(int depth) : depth_(depth) {}
  void push(uint64_t addr);
  std::optional<uint64_t> pop();
  size_t size() const { return stack_.size(); }

 private:
  int depth_;
  std::vector<uint64_t> stack_;
};

// Timing-only L1 model: tags and LRU ranks, no data payload.
class CacheModel {
 public:
  CacheModel(int sets, int ways, int block_bytes, int hit_latency, int miss_latency);
  int access(uint64_t addr);  // latency; fills on miss
  bool contains(uint64_t addr) const;
  uint64_t fill_count() const { return fills_; }

 private:
  struct Line {
    bool valid = false;
    uint64_t tag = 0;
    uint64_t lru = 0;
  };
  int sets_, ways_, block_, hit_, miss_;
  uint64_t tick_ = 0;
  uint64_t fills_ = 0;
  std::vector<Line> lines_;
};

enum class StepEvent { retired, speculated, squashed, halted };

struct SpecEvent {
  uint64_t pc = 0;         // branch that opened the window
  uint64_t predicted = 0;
  uint64_t resolved = 0;
  int window_used = 0;
  uint64_t cache_fills = 0;
};

enum class RunStatus { halted, timeout, fault };

struct RunResult {
  RunStatus status = RunStatus::halted;
  int exit_code = 0;
  uint64_t steps = 0;
  uint64_t cycles = 0;
  std::vector<SpecEvent> spec_events;
  std::string to_json() const;
};

// Decoded, address-resolved program image shared by all trial machines.
class Program {
 public:
  // Expands pseudo-instructions, lays the unit out and materializes data.
  // Entry is `main` when defined, else the first text instruction.
  Program(const AsmUnit& unit, MachineConfig config,
          IsaProfile isa = IsaProfile::rv64gc);

  const MachineConfig& config() const { return config_; }
  const AddressMap& map() const { return map_; }
  uint64_t entry() const { return entry_; }
  std::optional<uint64_t> symbol(const std::string& name) const;

 private:
  friend class Machine;

  enum class Op {
    ld, lw, lb, lbu, sd, sb, add, sub, and_, addi, andi, slli, srli,
    lui, beq, bne, blt, bge, bltu, bgeu, jal, jalr, rdcycle, ecall
  };
  struct Decoded {
    Op op;
    uint8_t rd = 0, rs1 = 0, rs2 = 0;
    int64_t imm = 0;        // resolved immediate / target address
    int size = 4;
  };

  MachineConfig config_;
  AsmUnit unit_;
  AddressMap map_;
  uint64_t entry_ = 0;
  std::unordered_map<uint64_t, Decoded> code_;        // address -> instruction
  std::vector<std::pair<uint64_t, uint8_t>> data_image_;
};

class Machine {
 public:
  explicit Machine(std::shared_ptr<const Program> program);

  StepEvent step();
  RunResult run(std::optional<uint64_t> max_steps = std::nullopt);

  uint64_t reg(int i) const { return regs_[i]; }
  void set_reg(int i, uint64_t v) { if (i) regs_[i] = v; }
  uint64_t pc() const { return pc_; }
  uint64_t cycles() const { return cycles_; }
  bool halted() const { return halted_; }
  int exit_code() const { return exit_code_; }
  bool faulted() const { return faulted_; }
  bool speculating() const { return spec_.has_value(); }

  uint8_t read_byte(uint64_t addr) const;
  uint64_t read_dword(uint64_t addr) const;
  void write_byte(uint64_t addr, uint8_t value);
  void write_dword(uint64_t addr, uint64_t value);
  // Digest of all written data memory, for differential runs.
  uint64_t memory_digest() const;
  // Digest of [lo, hi) only, e.g. the data segment without the stack.
  uint64_t memory_digest(uint64_t lo, uint64_t hi) const;

  const std::vector<SpecEvent>& spec_events() const { return spec_events_; }
  const CacheModel& cache() const { return cache_; }
  CacheModel& cache() { return cache_; }
  const Btb& btb() const { return btb_; }
  Btb& btb() { return btb_; }
  Ras& ras() { return ras_; }
  // Disables BTB/RAS-driven speculation windows (for differential oracles).
  void disable_speculation() { speculation_enabled_ = false; }

 private:
  struct SpecContext {
    std::array<uint64_t, 32> saved_regs;
    uint64_t open_pc = 0;
    uint64_t predicted = 0;
    uint64_t resolved = 0;
    int remaining = 0;
    int used = 0;
    uint64_t fills_at_open = 0;
  };

  const Program::Decoded* fetch(uint64_t addr) const;
  void exec(const Program::Decoded& d, bool speculative);
  void open_window(uint64_t branch_pc, uint64_t predicted, uint64_t resolved);
  void squash();
  void fault_halt();

  std::shared_ptr<const Program> program_;
  std::array<uint64_t, 32> regs_{};
  uint64_t pc_ = 0;
  uint64_t cycles_ = 0;
  bool halted_ = false;
  bool faulted_ = false;
  int exit_code_ = 0;
  bool speculation_enabled_ = true;
  std::unordered_map<uint64_t, std::array<uint8_t, 4096>> pages_;
  Btb btb_;
  Ras ras_;
  CacheModel cache_;
  std::optional<SpecContext> spec_;
  std::vector<SpecEvent> spec_events_;
};

}  // namespace specshield
