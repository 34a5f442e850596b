#include "specshield/harden.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

#include "specshield/parser.hpp"
#include "specshield/pseudo.hpp"

namespace specshield {

namespace {

bool is_arg_reg(Register r) { return r.index >= 10 && r.index <= 17; }

const Instruction* as_instr(const Item& item) { return std::get_if<Instruction>(&item); }

bool is_addi(const Instruction& i, Register rd, Register rs) {
  return i.mnemonic == "addi" && i.reg(0) == rd && i.reg(1) == rs &&
         std::holds_alternative<int64_t>(i.operands[2]);
}

bool is_sd_slot(const Instruction& i, Register rs, int64_t off) {
  return i.mnemonic == "sd" && i.reg(0) == rs && i.mem(1).base == reg_sp &&
         i.mem(1).offset == off;
}

Instruction synth(std::string mnemonic, std::vector<Operand> ops, bool no_compress = false) {
  Instruction out;
  out.mnemonic = std::move(mnemonic);
  out.operands = std::move(ops);
  out.origin = Origin::synthesized;
  out.no_compress = no_compress;
  return out;
}

// lui r, %hi(sym); addi r, r, %lo(sym) — the 8-byte materialization pair.
void emit_la(std::vector<Item>& out, Register r, const std::string& sym) {
  out.emplace_back(synth("lui", {r, SymRef{sym, Reloc::hi}}));
  out.emplace_back(synth("addi", {r, r, SymRef{sym, Reloc::lo}}));
}

struct Rewriter {
  const HardenConfig& config;
  int fresh;
  std::vector<std::string>* diagnostics;

  std::string label(const char* stem, int n) const {
    return std::string(stem) + "_" + std::to_string(n);
  }

  std::vector<Item> indirect_jump(Register r) {
    int n = fresh++;
    std::vector<Item> out;
    out.emplace_back(synth("jal", {reg_ra, SymRef{label("set_up_target", n)}}));
    out.emplace_back(Label{label("capture_spec", n)});
    out.emplace_back(synth("jal", {reg_zero, SymRef{label("capture_spec", n)}}));
    out.emplace_back(Label{label("set_up_target", n)});
    out.emplace_back(synth("addi", {reg_ra, r, int64_t{0}}));
    out.emplace_back(synth("jalr", {reg_zero, reg_ra, int64_t{0}}));
    return out;
  }

  std::vector<Item> indirect_call(Register r) {
    int n = fresh++;
    // skip over the two split-prologue instructions the thunk performs itself
    int64_t skip = instr_size(synth("addi", {reg_sp, reg_sp, int64_t{-16}}), config.isa) +
                   instr_size(synth("sd", {reg_ra, MemRef{8, reg_sp}}), config.isa);
    if (is_arg_reg(r) && diagnostics)
      diagnostics->push_back("indirect call through argument register " + abi_name(r) +
                             ": thunk clobbers it before callee entry");
    std::vector<Item> out;
    out.emplace_back(synth("jal", {reg_ra, SymRef{label("set_up_target", n)}}));
    out.emplace_back(Label{label("capture_spec", n)});
    out.emplace_back(synth("jal", {reg_zero, SymRef{label("capture_spec", n)}}));
    out.emplace_back(Label{label("set_up_target", n)});
    out.emplace_back(synth("addi", {reg_ra, r, skip}));
    out.emplace_back(synth("addi", {reg_sp, reg_sp, int64_t{-16}}));
    emit_la(out, r, label("end", n));
    out.emplace_back(synth("sd", {r, MemRef{8, reg_sp}}));
    out.emplace_back(synth("jalr", {reg_zero, reg_ra, int64_t{0}}));
    out.emplace_back(Label{label("end", n)});
    return out;
  }

  std::vector<Item> direct_call(const std::string& callee) {
    int n = fresh++;
    std::vector<Item> out;
    out.emplace_back(synth("jal", {reg_ra, SymRef{label("set_up_target", n)}}));
    out.emplace_back(Label{label("capture_spec", n)});
    out.emplace_back(synth("jal", {reg_zero, SymRef{label("capture_spec", n)}}));
    out.emplace_back(Label{label("set_up_target", n)});
    emit_la(out, reg_ra, callee);
    // counted uncompressed: calibrates the rv64gc direct-call overhead
    out.emplace_back(synth("jalr", {reg_zero, reg_ra, int64_t{0}}, /*no_compress=*/true));
    return out;
  }

  std::vector<Item> prologue(const PrologueShape& shape) {
    int64_t residual = shape.frame - 16;
    std::vector<Item> out;
    out.emplace_back(synth("addi", {reg_sp, reg_sp, int64_t{-16}}));
    out.emplace_back(synth("sd", {reg_ra, MemRef{8, reg_sp}}));
    out.emplace_back(synth("sd", {reg_fp, MemRef{0, reg_sp}}));
    out.emplace_back(synth("addi", {reg_fp, reg_sp, shape.fp_off - residual}));
    if (residual != 0)
      out.emplace_back(synth("addi", {reg_sp, reg_sp, -residual}));
    return out;
  }
};

}  // namespace

std::optional<PrologueShape> match_prologue(const AsmUnit& unit, const FunctionSpan& fn) {
  std::vector<std::pair<size_t, const Instruction*>> head;
  for (size_t i = fn.begin; i < fn.end && head.size() < 4; ++i)
    if (const auto* instr = as_instr(unit.items[i])) head.emplace_back(i, instr);
  if (head.size() < 4) return std::nullopt;

  const auto& [i1, a] = head[0];
  const auto& [i2, b] = head[1];
  const auto& [i3, c] = head[2];
  const auto& [i4, d] = head[3];
  if (!is_addi(*a, reg_sp, reg_sp) || a->imm(2) >= 0) return std::nullopt;
  int64_t frame = -a->imm(2);
  if (frame < 16 || frame % 8 != 0) return std::nullopt;
  if (!is_sd_slot(*b, reg_ra, frame - 8)) return std::nullopt;
  if (!is_sd_slot(*c, reg_fp, frame - 16)) return std::nullopt;
  if (!is_addi(*d, reg_fp, reg_sp)) return std::nullopt;
  if (i2 != i1 + 1 || i3 != i2 + 1 || i4 != i3 + 1) return std::nullopt;
  return PrologueShape{frame, d->imm(2), i1};
}

std::vector<RewriteSite> find_rewrite_sites(const AsmUnit& unit, const HardenConfig& config) {
  std::vector<RewriteSite> sites;

  if (config.calls) {
    for (const auto& fn : unit.functions) {
      auto shape = match_prologue(unit, fn);
      if (!shape) continue;
      const auto* first = as_instr(unit.items[shape->first]);
      if (first->origin != Origin::original) continue;  // already split
      sites.push_back({SiteKind::prologue, shape->first, {}, {}, fn.name});
    }
  }

  for (size_t i = 0; i < unit.items.size(); ++i) {
    const auto* instr = as_instr(unit.items[i]);
    if (!instr || instr->origin != Origin::original) continue;
    if (instr->mnemonic == "jalr" && instr->operands.size() == 3) {
      Register rd = instr->reg(0);
      Register rs = instr->reg(1);
      if (rd == reg_zero && rs != reg_ra && config.jumps)
        sites.push_back({SiteKind::indirect_jump, i, rs, {}, {}});
      else if (rd == reg_ra && config.calls)
        sites.push_back({SiteKind::indirect_call, i, rs, {}, {}});
    } else if (instr->mnemonic == "jal" && instr->operands.size() == 2 &&
               instr->reg(0) == reg_ra && config.rsb) {
      sites.push_back({SiteKind::direct_call, i, {}, instr->sym(1).name, {}});
    }
  }

  std::stable_sort(sites.begin(), sites.end(),
                   [](const RewriteSite& a, const RewriteSite& b) { return a.index < b.index; });
  return sites;
}

namespace {

int64_t items_size(const std::vector<Item>& items, IsaProfile isa) {
  int64_t total = 0;
  for (const auto& item : items)
    if (const auto* instr = as_instr(item)) total += instr_size(*instr, isa);
  return total;
}

void account(CategoryOverhead& cat, int64_t delta) {
  if (cat.count == 0)
    cat.delta_bytes = delta;
  else if (cat.delta_bytes && *cat.delta_bytes != delta)
    cat.delta_bytes.reset();
  ++cat.count;
  cat.delta_total += delta;
}

}  // namespace

HardenResult harden_unit(const AsmUnit& input, const HardenConfig& config) {
  if (!config.any()) throw HardenError("no mitigation enabled");

  AsmUnit unit = expand_unit(input);
  auto before = layout(unit, config.isa);

  auto sites = find_rewrite_sites(unit, config);

  HardenResult result;
  result.report.isa = config.isa;

  if (config.calls) {
    std::vector<std::string> unrecognized;
    for (const auto& fn : unit.functions) {
      if (match_prologue(unit, fn)) continue;
      unrecognized.push_back(fn.name);
      result.diagnostics.push_back("unrecognized prologue in function '" + fn.name +
                                   "': left untouched, indirect calls into it are unsafe");
    }
    if (!unrecognized.empty() && !config.force) {
      std::ostringstream msg;
      msg << "calls mitigation refused, unrecognized prologue in:";
      for (const auto& name : unrecognized) msg << " " << name;
      throw HardenError(msg.str());
    }
  }

  Rewriter rw{config, config.label_seed, &result.diagnostics};

  // item index -> replacement; indices swallowed by a multi-item site map to {}
  std::map<size_t, std::vector<Item>> replace;
  for (const auto& site : sites) {
    std::vector<Item> items;
    int64_t old_size = 0;
    switch (site.kind) {
      case SiteKind::indirect_jump:
        items = rw.indirect_jump(site.target);
        old_size = instr_size(*as_instr(unit.items[site.index]), config.isa);
        break;
      case SiteKind::indirect_call:
        items = rw.indirect_call(site.target);
        old_size = instr_size(*as_instr(unit.items[site.index]), config.isa);
        break;
      case SiteKind::direct_call:
        items = rw.direct_call(site.callee);
        old_size = instr_size(*as_instr(unit.items[site.index]), config.isa);
        break;
      case SiteKind::prologue: {
        auto fn = std::find_if(unit.functions.begin(), unit.functions.end(),
                               [&](const FunctionSpan& f) { return f.name == site.function; });
        auto shape = match_prologue(unit, *fn);
        items = rw.prologue(*shape);
        for (size_t k = 1; k < 4; ++k) {
          old_size += instr_size(*as_instr(unit.items[shape->first + k]), config.isa);
          replace[shape->first + k] = {};
        }
        old_size += instr_size(*as_instr(unit.items[shape->first]), config.isa);
        break;
      }
    }
    int64_t delta = items_size(items, config.isa) - old_size;
    switch (site.kind) {
      case SiteKind::indirect_jump: account(result.report.indirect_jumps, delta); break;
      case SiteKind::indirect_call: account(result.report.indirect_calls, delta); break;
      case SiteKind::direct_call: account(result.report.direct_calls, delta); break;
      case SiteKind::prologue: account(result.report.prologues, delta); break;
    }
    replace[site.index] = std::move(items);
  }

  for (size_t i = 0; i < unit.items.size(); ++i) {
    auto it = replace.find(i);
    if (it == replace.end()) {
      result.unit.items.push_back(unit.items[i]);
    } else {
      for (auto& item : it->second) result.unit.items.push_back(std::move(item));
    }
  }
  reindex(result.unit);

  auto after = layout(result.unit, config.isa);
  result.report.total_before = before.text_end - before.base_text;
  result.report.total_after = after.text_end - after.base_text;
  return result;
}

std::string OverheadReport::to_json() const {
  nlohmann::json cat;
  auto put = [&](const char* name, const CategoryOverhead& c) {
    cat[name] = {{"count", c.count}, {"delta_total", c.delta_total}};
    if (c.delta_bytes)
      cat[name]["delta_bytes"] = *c.delta_bytes;
    else
      cat[name]["delta_bytes"] = nullptr;
  };
  put("indirect_jumps", indirect_jumps);
  put("indirect_calls", indirect_calls);
  put("prologues", prologues);
  put("direct_calls", direct_calls);
  nlohmann::json j = {
      {"isa", isa == IsaProfile::rv64g ? "rv64g" : "rv64gc"},
      {"categories", cat},
      {"total_before", total_before},
      {"total_after", total_after},
  };
  return j.dump(2);
}

}  // namespace specshield
