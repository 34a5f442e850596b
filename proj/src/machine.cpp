#include "specshield/machine.hpp"

#include <algorithm>
#include <bit>
#include <charconv>

#include <json.hpp>

#include "specshield/pseudo.hpp"

namespace specshield {

void MachineConfig::validate() const {
  auto pow2 = [](int v) { return v > 0 && std::has_single_bit(unsigned(v)); };
  if (!pow2(cache_sets) || !pow2(btb_sets) || !pow2(block_bytes))
    throw AsmError("cache_sets, btb_sets and block_bytes must be powers of two");
  if (cache_ways < 1 || btb_ways < 1 || ras_depth < 1)
    throw AsmError("associativity and ras_depth must be positive");
  if (miss_latency <= hit_latency)
    throw AsmError("miss_latency must exceed hit_latency");
  if (spec_window < 1) throw AsmError("spec_window must be >= 1");
}

MachineConfig MachineConfig::from_json_text(const std::string& text) {
  MachineConfig c;
  auto j = nlohmann::json::parse(text);
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key);
  };
  get("cache_sets", c.cache_sets);
  get("cache_ways", c.cache_ways);
  get("block_bytes", c.block_bytes);
  get("hit_latency", c.hit_latency);
  get("miss_latency", c.miss_latency);
  get("btb_sets", c.btb_sets);
  get("btb_ways", c.btb_ways);
  get("ras_depth", c.ras_depth);
  get("spec_window", c.spec_window);
  get("max_steps", c.max_steps);
  get("stack_top", c.stack_top);
  if (j.contains("threshold")) c.threshold_override = j.at("threshold").get<int>();
  c.validate();
  return c;
}

int threshold(const MachineConfig& config) {
  if (config.threshold_override) return *config.threshold_override;
  return (config.hit_latency + config.miss_latency) / 2;
}

// --- Btb ---

Btb::Btb(int sets, int ways) : sets_(sets), ways_(ways), entries_(sets * ways) {}

std::optional<uint64_t> Btb::lookup(uint64_t pc) const {
  uint64_t set = (pc >> 1) % sets_;
  uint64_t tag = pc >> (1 + std::bit_width(unsigned(sets_)) - 1);
  for (int w = 0; w < ways_; ++w) {
    const auto& e = entries_[set * ways_ + w];
    if (e.valid && e.tag == tag) return e.target;
  }
  return std::nullopt;
}

void Btb::update(uint64_t pc, uint64_t target) {
  uint64_t set = (pc >> 1) % sets_;
  uint64_t tag = pc >> (1 + std::bit_width(unsigned(sets_)) - 1);
  ++tick_;
  Entry* victim = nullptr;
  for (int w = 0; w < ways_; ++w) {
    auto& e = entries_[set * ways_ + w];
    if (e.valid && e.tag == tag) {
      e.target = target;
      e.lru = tick_;
      return;
    }
    if (!victim || !e.valid || (victim->valid && e.lru < victim->lru)) {
      if (!victim || victim->valid) victim = &e;
    }
  }
  victim->valid = true;
  victim->tag = tag;
  victim->target = target;
  victim->lru = tick_;
}

// --- Ras ---

void Ras::push(uint64_t addr) {
  stack_.push_back(addr);
  if (stack_.size() > size_t(depth_)) stack_.erase(stack_.begin());
}

std::optional<uint64_t> Ras::pop() {
  if (stack_.empty()) return std::nullopt;
  uint64_t top = stack_.back();
  stack_.pop_back();
  return top;
}

// --- CacheModel ---

CacheModel::CacheModel(int sets, int ways, int block_bytes, int hit_latency, int miss_latency)
    : sets_(sets), ways_(ways), block_(block_bytes), hit_(hit_latency),
      miss_(miss_latency), lines_(sets * ways) {}

int CacheModel::access(uint64_t addr) {
  uint64_t block = addr / block_;
  uint64_t set = block % sets_;
  uint64_t tag = block / sets_;
  ++tick_;
  Line* victim = nullptr;
  for (int w = 0; w < ways_; ++w) {
    auto& l = lines_[set * ways_ + w];
    if (l.valid && l.tag == tag) {
      l.lru = tick_;
      return hit_;
    }
    if (!l.valid) {
      if (!victim || victim->valid) victim = &l;
    } else if (!victim || (victim->valid && l.lru < victim->lru)) {
      victim = &l;
    }
  }
  victim->valid = true;
  victim->tag = tag;
  victim->lru = tick_;
  ++fills_;
  return miss_;
}

bool CacheModel::contains(uint64_t addr) const {
  uint64_t block = addr / block_;
  uint64_t set = block % sets_;
  uint64_t tag = block / sets_;
  for (int w = 0; w < ways_; ++w) {
    const auto& l = lines_[set * ways_ + w];
    if (l.valid && l.tag == tag) return true;
  }
  return false;
}

// --- Program ---

namespace {

std::vector<int64_t> parse_int_args(const std::string& args) {
  std::vector<int64_t> out;
  size_t pos = 0;
  while (pos < args.size()) {
    size_t comma = args.find(',', pos);
    std::string tok = args.substr(pos, comma == std::string::npos ? comma : comma - pos);
    size_t a = tok.find_first_not_of(" \t");
    size_t b = tok.find_last_not_of(" \t");
    tok = a == std::string::npos ? "" : tok.substr(a, b - a + 1);
    if (!tok.empty()) {
      int64_t v = 0;
      bool neg = tok[0] == '-';
      size_t s = neg ? 1 : 0;
      int base = tok.size() > s + 1 && tok[s] == '0' && (tok[s + 1] == 'x' || tok[s + 1] == 'X') ? 16 : 10;
      if (base == 16) s += 2;
      std::from_chars(tok.data() + s, tok.data() + tok.size(), v, base);
      out.push_back(neg ? -v : v);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<uint8_t> parse_asciz(const std::string& args) {
  std::vector<uint8_t> out;
  bool in = false, esc = false;
  for (char c : args) {
    if (!in) { in = c == '"'; continue; }
    if (esc) {
      esc = false;
      switch (c) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '0': out.push_back(0); break;
        default: out.push_back(uint8_t(c));
      }
      continue;
    }
    if (c == '\\') { esc = true; continue; }
    if (c == '"') break;
    out.push_back(uint8_t(c));
  }
  out.push_back(0);
  return out;
}

uint64_t hi_part(uint64_t addr) { return (addr + 0x800) & ~uint64_t{0xfff}; }

}  // namespace

Program::Program(const AsmUnit& unit, MachineConfig config, IsaProfile isa)
    : config_(std::move(config)) {
  config_.validate();
  unit_ = expand_unit(unit);
  map_ = layout(unit_, isa);

  if (auto it = map_.symbol_addr.find("main");
      it != map_.symbol_addr.end() && map_.addr_item.count(it->second)) {
    entry_ = it->second;
  } else if (!map_.addr_item.empty()) {
    entry_ = map_.addr_item.begin()->first;
  } else {
    throw AsmError("no entry symbol");
  }

  auto resolve = [&](const SymRef& s) -> uint64_t {
    auto it = map_.symbol_addr.find(s.name);
    if (it == map_.symbol_addr.end())
      throw AsmError("unresolved symbol '" + s.name + "'");
    return it->second;
  };

  static const std::unordered_map<std::string, Op> ops = {
      {"ld", Op::ld},   {"lw", Op::lw},   {"lb", Op::lb},   {"lbu", Op::lbu},
      {"sd", Op::sd},   {"sb", Op::sb},   {"add", Op::add}, {"sub", Op::sub},
      {"and", Op::and_}, {"addi", Op::addi}, {"andi", Op::andi},
      {"slli", Op::slli}, {"srli", Op::srli}, {"lui", Op::lui},
      {"beq", Op::beq}, {"bne", Op::bne}, {"blt", Op::blt}, {"bge", Op::bge},
      {"bltu", Op::bltu}, {"bgeu", Op::bgeu}, {"jal", Op::jal},
      {"jalr", Op::jalr}, {"rdcycle", Op::rdcycle}, {"ecall", Op::ecall}};

  for (const auto& [addr, idx] : map_.addr_item) {
    const auto& instr = std::get<Instruction>(unit_.items[idx]);
    Decoded d;
    d.op = ops.at(instr.mnemonic);
    d.size = instr_size(instr, isa);
    switch (d.op) {
      case Op::ld: case Op::lw: case Op::lb: case Op::lbu:
      case Op::sd: case Op::sb:
        d.rd = instr.reg(0).index;
        d.rs1 = instr.mem(1).base.index;
        d.imm = instr.mem(1).offset;
        break;
      case Op::add: case Op::sub: case Op::and_:
        d.rd = instr.reg(0).index;
        d.rs1 = instr.reg(1).index;
        d.rs2 = instr.reg(2).index;
        break;
      case Op::addi: case Op::andi: case Op::slli: case Op::srli:
        d.rd = instr.reg(0).index;
        d.rs1 = instr.reg(1).index;
        if (const auto* sym = std::get_if<SymRef>(&instr.operands[2])) {
          uint64_t a = resolve(*sym);
          d.imm = int64_t(a) - int64_t(hi_part(a));
        } else {
          d.imm = instr.imm(2);
        }
        break;
      case Op::lui:
        d.rd = instr.reg(0).index;
        if (const auto* sym = std::get_if<SymRef>(&instr.operands[1]))
          d.imm = int64_t(hi_part(resolve(*sym)));
        else
          d.imm = instr.imm(1) << 12;
        break;
      case Op::beq: case Op::bne: case Op::blt: case Op::bge:
      case Op::bltu: case Op::bgeu:
        d.rs1 = instr.reg(0).index;
        d.rs2 = instr.reg(1).index;
        d.imm = int64_t(resolve(instr.sym(2)));
        break;
      case Op::jal:
        d.rd = instr.reg(0).index;
        d.imm = int64_t(resolve(instr.sym(1)));
        break;
      case Op::jalr:
        d.rd = instr.reg(0).index;
        d.rs1 = instr.reg(1).index;
        d.imm = instr.imm(2);
        break;
      case Op::rdcycle:
        d.rd = instr.reg(0).index;
        break;
      case Op::ecall:
        break;
    }
    code_[addr] = d;
  }

  // materialize data directives
  bool in_text = true;
  uint64_t dcur = map_.base_data;
  for (const auto& item : unit_.items) {
    const auto* dir = std::get_if<Directive>(&item);
    if (!dir) continue;
    if (dir->name == "text") { in_text = true; continue; }
    if (dir->name == "data") { in_text = false; continue; }
    if (in_text) continue;
    if (dir->name == "byte") {
      for (int64_t v : parse_int_args(dir->args))
        data_image_.emplace_back(dcur++, uint8_t(v));
    } else if (dir->name == "dword" || dir->name == "quad") {
      for (int64_t v : parse_int_args(dir->args))
        for (int b = 0; b < 8; ++b)
          data_image_.emplace_back(dcur++, uint8_t(uint64_t(v) >> (8 * b)));
    } else if (dir->name == "asciz") {
      for (uint8_t b : parse_asciz(dir->args)) data_image_.emplace_back(dcur++, b);
    } else if (dir->name == "zero" || dir->name == "skip") {
      dcur += std::stoull(dir->args);
    } else if (dir->name == "align") {
      uint64_t align = 1ull << std::stoull(dir->args);
      dcur = (dcur + align - 1) & ~(align - 1);
    }
  }
}

std::optional<uint64_t> Program::symbol(const std::string& name) const {
  auto it = map_.symbol_addr.find(name);
  if (it == map_.symbol_addr.end()) return std::nullopt;
  return it->second;
}

// --- Machine ---

Machine::Machine(std::shared_ptr<const Program> program)
    : program_(std::move(program)),
      btb_(program_->config().btb_sets, program_->config().btb_ways),
      ras_(program_->config().ras_depth),
      cache_(program_->config().cache_sets, program_->config().cache_ways,
             program_->config().block_bytes, program_->config().hit_latency,
             program_->config().miss_latency) {
  pc_ = program_->entry();
  regs_[reg_sp.index] = program_->config().stack_top;
  regs_[reg_fp.index] = program_->config().stack_top;
  for (const auto& [addr, byte] : program_->data_image_) write_byte(addr, byte);
}

uint8_t Machine::read_byte(uint64_t addr) const {
  auto it = pages_.find(addr >> 12);
  if (it == pages_.end()) return 0;
  return it->second[addr & 0xfff];
}

void Machine::write_byte(uint64_t addr, uint8_t value) {
  pages_[addr >> 12][addr & 0xfff] = value;
}

uint64_t Machine::read_dword(uint64_t addr) const {
  uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= uint64_t(read_byte(addr + b)) << (8 * b);
  return v;
}

void Machine::write_dword(uint64_t addr, uint64_t value) {
  for (int b = 0; b < 8; ++b) write_byte(addr + b, uint8_t(value >> (8 * b)));
}

uint64_t Machine::memory_digest() const {
  std::vector<uint64_t> keys;
  keys.reserve(pages_.size());
  for (const auto& [k, _] : pages_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint64_t k : keys) {
    const auto& page = pages_.at(k);
    h = (h ^ k) * 0x100000001b3ull;
    for (uint8_t b : page) h = (h ^ b) * 0x100000001b3ull;
  }
  return h;
}

uint64_t Machine::memory_digest(uint64_t lo, uint64_t hi) const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint64_t a = lo; a < hi; ++a) h = (h ^ read_byte(a)) * 0x100000001b3ull;
  return h;
}

const Program::Decoded* Machine::fetch(uint64_t addr) const {
  auto it = program_->code_.find(addr);
  return it == program_->code_.end() ? nullptr : &it->second;
}

void Machine::fault_halt() {
  halted_ = true;
  faulted_ = true;
}

void Machine::open_window(uint64_t branch_pc, uint64_t predicted, uint64_t resolved) {
  SpecContext ctx;
  ctx.saved_regs = regs_;
  ctx.open_pc = branch_pc;
  ctx.predicted = predicted;
  ctx.resolved = resolved;
  ctx.remaining = program_->config().spec_window;
  ctx.fills_at_open = cache_.fill_count();
  spec_ = ctx;
  pc_ = predicted;
}

void Machine::squash() {
  regs_ = spec_->saved_regs;
  pc_ = spec_->resolved;
  spec_events_.push_back({spec_->open_pc, spec_->predicted, spec_->resolved,
                          spec_->used, cache_.fill_count() - spec_->fills_at_open});
  spec_.reset();
}

void Machine::exec(const Program::Decoded& d, bool speculative) {
  auto r = [&](int i) { return regs_[i]; };
  uint64_t next = pc_ + d.size;
  switch (d.op) {
    case Program::Op::ld: case Program::Op::lw:
    case Program::Op::lb: case Program::Op::lbu: {
      uint64_t addr = r(d.rs1) + d.imm;
      cycles_ += 1 + cache_.access(addr);
      uint64_t v = 0;
      switch (d.op) {
        case Program::Op::ld: v = read_dword(addr); break;
        case Program::Op::lw: {
          uint32_t w = 0;
          for (int b = 0; b < 4; ++b) w |= uint32_t(read_byte(addr + b)) << (8 * b);
          v = uint64_t(int64_t(int32_t(w)));
          break;
        }
        case Program::Op::lb: v = uint64_t(int64_t(int8_t(read_byte(addr)))); break;
        default: v = read_byte(addr); break;
      }
      set_reg(d.rd, v);
      pc_ = next;
      break;
    }
    case Program::Op::sd: case Program::Op::sb: {
      // rd holds the source register for stores
      uint64_t addr = r(d.rs1) + d.imm;
      if (speculative) {
        cycles_ += 1;  // no memory update, no cache fill
      } else {
        cycles_ += 1 + cache_.access(addr);
        if (d.op == Program::Op::sd) write_dword(addr, r(d.rd));
        else write_byte(addr, uint8_t(r(d.rd)));
      }
      pc_ = next;
      break;
    }
    case Program::Op::add: set_reg(d.rd, r(d.rs1) + r(d.rs2)); cycles_++; pc_ = next; break;
    case Program::Op::sub: set_reg(d.rd, r(d.rs1) - r(d.rs2)); cycles_++; pc_ = next; break;
    case Program::Op::and_: set_reg(d.rd, r(d.rs1) & r(d.rs2)); cycles_++; pc_ = next; break;
    case Program::Op::addi: set_reg(d.rd, r(d.rs1) + d.imm); cycles_++; pc_ = next; break;
    case Program::Op::andi: set_reg(d.rd, r(d.rs1) & uint64_t(d.imm)); cycles_++; pc_ = next; break;
    case Program::Op::slli: set_reg(d.rd, r(d.rs1) << (d.imm & 63)); cycles_++; pc_ = next; break;
    case Program::Op::srli: set_reg(d.rd, r(d.rs1) >> (d.imm & 63)); cycles_++; pc_ = next; break;
    case Program::Op::lui: set_reg(d.rd, uint64_t(d.imm)); cycles_++; pc_ = next; break;
    case Program::Op::rdcycle: set_reg(d.rd, cycles_); cycles_++; pc_ = next; break;
    case Program::Op::beq: case Program::Op::bne:
    case Program::Op::blt: case Program::Op::bge:
    case Program::Op::bltu: case Program::Op::bgeu: {
      bool taken = false;
      uint64_t a = r(d.rs1), b = r(d.rs2);
      switch (d.op) {
        case Program::Op::beq: taken = a == b; break;
        case Program::Op::bne: taken = a != b; break;
        case Program::Op::blt: taken = int64_t(a) < int64_t(b); break;
        case Program::Op::bge: taken = int64_t(a) >= int64_t(b); break;
        case Program::Op::bltu: taken = a < b; break;
        default: taken = a >= b; break;
      }
      cycles_++;
      pc_ = taken ? uint64_t(d.imm) : next;
      break;
    }
    case Program::Op::jal:
      set_reg(d.rd, next);
      cycles_++;
      pc_ = uint64_t(d.imm);
      break;
    case Program::Op::jalr: {
      uint64_t target = r(d.rs1) + d.imm;
      set_reg(d.rd, next);
      cycles_++;
      pc_ = target;
      break;
    }
    case Program::Op::ecall:
      cycles_++;
      break;  // handled by step()
  }
  (void)next;
}

StepEvent Machine::step() {
  if (halted_) return StepEvent::halted;

  const auto* d = fetch(pc_);
  if (!d) {
    if (spec_) {
      squash();
      return StepEvent::squashed;
    }
    fault_halt();
    return StepEvent::halted;
  }

  if (spec_) {
    if (d->op == Program::Op::ecall) {
      squash();
      return StepEvent::squashed;
    }
    exec(*d, /*speculative=*/true);
    spec_->used++;
    if (--spec_->remaining == 0) {
      squash();
      return StepEvent::squashed;
    }
    return StepEvent::speculated;
  }

  switch (d->op) {
    case Program::Op::jal: {
      uint64_t link = pc_ + d->size;
      if (d->rd == reg_ra.index) ras_.push(link);
      set_reg(d->rd, link);
      cycles_++;
      pc_ = uint64_t(d->imm);
      return StepEvent::retired;
    }
    case Program::Op::jalr: {
      uint64_t resolved = regs_[d->rs1] + d->imm;
      uint64_t branch_pc = pc_;
      cycles_++;
      if (d->rd == reg_ra.index) {
        // indirect call: RAS push, BTB-predicted
        uint64_t link = pc_ + d->size;
        auto predicted = btb_.lookup(branch_pc);
        ras_.push(link);
        set_reg(d->rd, link);
        btb_.update(branch_pc, resolved);
        if (speculation_enabled_ && predicted && *predicted != resolved) {
          open_window(branch_pc, *predicted, resolved);
          return StepEvent::speculated;
        }
        pc_ = resolved;
        return StepEvent::retired;
      }
      if (d->rd == reg_zero.index && d->rs1 == reg_ra.index) {
        // return: RAS-predicted
        auto predicted = ras_.pop();
        if (speculation_enabled_ && predicted && *predicted != resolved) {
          open_window(branch_pc, *predicted, resolved);
          return StepEvent::speculated;
        }
        pc_ = resolved;
        return StepEvent::retired;
      }
      if (d->rd == reg_zero.index) {
        // indirect jump: BTB-predicted
        auto predicted = btb_.lookup(branch_pc);
        btb_.update(branch_pc, resolved);
        if (speculation_enabled_ && predicted && *predicted != resolved) {
          open_window(branch_pc, *predicted, resolved);
          return StepEvent::speculated;
        }
        pc_ = resolved;
        return StepEvent::retired;
      }
      set_reg(d->rd, pc_ + d->size);
      pc_ = resolved;
      return StepEvent::retired;
    }
    case Program::Op::ecall:
      cycles_++;
      if (regs_[17] == 93) {
        halted_ = true;
        exit_code_ = int(regs_[10]);
      } else {
        fault_halt();
      }
      return StepEvent::halted;
    default:
      exec(*d, /*speculative=*/false);
      return StepEvent::retired;
  }
}

RunResult Machine::run(std::optional<uint64_t> max_steps) {
  uint64_t budget = max_steps.value_or(program_->config().max_steps);
  RunResult result;
  while (!halted_ && result.steps < budget) {
    step();
    result.steps++;
  }
  result.cycles = cycles_;
  result.exit_code = exit_code_;
  result.spec_events = spec_events_;
  result.status = !halted_ ? RunStatus::timeout
                 : faulted_ ? RunStatus::fault
                            : RunStatus::halted;
  return result;
}

std::string RunResult::to_json() const {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : spec_events)
    events.push_back({{"pc", e.pc},
                      {"predicted", e.predicted},
                      {"resolved", e.resolved},
                      {"window_used", e.window_used}});
  nlohmann::json j = {
      {"steps", steps},
      {"cycles", cycles},
      {"spec_events", events},
      {"exit_code", exit_code},
      {"status", status == RunStatus::halted ? "halted"
                 : status == RunStatus::timeout ? "timeout"
                                                : "fault"},
  };
  return j.dump(2);
}

}  // namespace specshield
