#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specshield/harden.hpp"
#include "specshield/parser.hpp"
#include "specshield/pseudo.hpp"
#include "support/fixtures.hpp"

using namespace specshield;

namespace {

HardenConfig all_of(IsaProfile isa) {
  HardenConfig c;
  c.jumps = c.calls = c.rsb = true;
  c.isa = isa;
  return c;
}

std::string items_text(const AsmUnit& unit) { return print_unit(unit); }

}  // namespace

TEST_CASE("site classification") {
  AsmUnit unit = parse_unit(
      "\tjr t0\n"            // indirect jump
      "\tjalr t1\n"          // indirect call
      "\tjalr x0, a5, 0\n"   // indirect jump, canonical form
      "\tret\n"              // never a site
      "\tcall f\n"           // direct call
      "\tjal x0, f\n"        // plain jump, not a call
      "\tjal ra, f\n"        // direct call, canonical form
      "\t.extern\tf\n");
  unit = expand_unit(unit);

  auto sites = find_rewrite_sites(unit, all_of(IsaProfile::rv64gc));
  REQUIRE(sites.size() == 5);
  CHECK(sites[0].kind == SiteKind::indirect_jump);
  CHECK(sites[0].target == *reg_from_name("t0"));
  CHECK(sites[1].kind == SiteKind::indirect_call);
  CHECK(sites[1].target == *reg_from_name("t1"));
  CHECK(sites[2].kind == SiteKind::indirect_jump);
  CHECK(sites[3].kind == SiteKind::direct_call);
  CHECK(sites[3].callee == "f");
  CHECK(sites[4].kind == SiteKind::direct_call);

  HardenConfig only_rsb;
  only_rsb.rsb = true;
  auto rsb_sites = find_rewrite_sites(unit, only_rsb);
  REQUIRE(rsb_sites.size() == 2);
  CHECK(rsb_sites[0].kind == SiteKind::direct_call);

  // synthesized instructions are never re-matched
  for (auto& item : unit.items)
    if (auto* instr = std::get_if<Instruction>(&item)) instr->origin = Origin::synthesized;
  CHECK(find_rewrite_sites(unit, all_of(IsaProfile::rv64gc)).empty());
}

TEST_CASE("indirect jump rewrite shape") {
  HardenConfig config;
  config.jumps = true;
  config.label_seed = 7;
  auto result = harden_unit(parse_unit("\tjr t2\n"), config);
  AsmUnit expected = parse_unit(
      "\tjal ra, set_up_target_7\t#@specshield\n"
      "capture_spec_7:\n"
      "\tjal x0, capture_spec_7\t#@specshield\n"
      "set_up_target_7:\n"
      "\taddi ra, t2, 0\t#@specshield\n"
      "\tjalr x0, ra, 0\t#@specshield\n");
  CHECK(result.unit == expected);
  CHECK(result.report.indirect_jumps.count == 1);
}

TEST_CASE("indirect call rewrite shape and skip amount per isa") {
  std::string src =
      "\t.type\tf, @function\n"
      "\tla t0, f\n"
      "\tjalr t0\n"
      "\tli a7, 93\n"
      "\tecall\n"
      "f:\n"
      "\taddi sp, sp, -16\n"
      "\tsd ra, 8(sp)\n"
      "\tsd fp, 0(sp)\n"
      "\taddi fp, sp, 16\n"
      "\tld fp, 0(sp)\n"
      "\tld ra, 8(sp)\n"
      "\taddi sp, sp, 16\n"
      "\tret\n";

  for (auto [isa, skip] : {std::pair{IsaProfile::rv64g, 8}, {IsaProfile::rv64gc, 4}}) {
    HardenConfig config;
    config.calls = true;
    config.isa = isa;
    auto result = harden_unit(parse_unit(src), config);
    std::string text = items_text(result.unit);
    CAPTURE(text);
    // the thunk pre-executes the 16-byte prologue phase, so entry is advanced
    // by the size of those two instructions
    CHECK(text.find("addi\tra, t0, " + std::to_string(skip)) != std::string::npos);
    CHECK(text.find("addi\tsp, sp, -16\t#@specshield") != std::string::npos);
    CHECK(text.find("sd\tt0, 8(sp)\t#@specshield") != std::string::npos);
    CHECK(text.find("lui\tt0, %hi(end_0)") != std::string::npos);
    CHECK(text.find("end_0:") != std::string::npos);
    CHECK(result.report.indirect_calls.count == 1);
    CHECK(result.report.prologues.count == 1);
  }
}

TEST_CASE("direct call rewrite pins its jump register uncompressed") {
  HardenConfig config;
  config.rsb = true;
  auto result = harden_unit(parse_unit("\t.extern\tf\n\tcall f\n"), config);
  bool saw_pinned = false;
  for (const auto& item : result.unit.items)
    if (const auto* instr = std::get_if<Instruction>(&item))
      if (instr->mnemonic == "jalr") {
        CHECK(instr->no_compress);
        saw_pinned = true;
      }
  CHECK(saw_pinned);
  std::string text = items_text(result.unit);
  CHECK(text.find("lui\tra, %hi(f)") != std::string::npos);
  CHECK(text.find("#@specshield norvc") != std::string::npos);
}

TEST_CASE("prologue splitting symbolic oracle") {
  // evaluate a prologue item sequence over symbolic sp: track sp offset,
  // fp value (as an offset from entry sp) and the ra/fp slot addresses
  auto evaluate = [](const std::vector<Item>& items, size_t begin, size_t end) {
    int64_t sp = 0, fp = 1 << 20;
    int64_t ra_slot = -1, fp_slot = -1;
    for (size_t i = begin; i < end; ++i) {
      const auto* instr = std::get_if<Instruction>(&items[i]);
      if (!instr) continue;
      if (instr->mnemonic == "addi" && instr->reg(0) == reg_sp) sp += instr->imm(2);
      else if (instr->mnemonic == "addi" && instr->reg(0) == reg_fp)
        fp = sp + instr->imm(2);
      else if (instr->mnemonic == "sd" && instr->reg(0) == reg_ra)
        ra_slot = sp + instr->mem(1).offset;
      else if (instr->mnemonic == "sd" && instr->reg(0) == reg_fp)
        fp_slot = sp + instr->mem(1).offset;
      else FAIL("unexpected prologue instruction");
    }
    return std::tuple{sp, fp, ra_slot, fp_slot};
  };

  for (int64_t n = 16; n <= 128; n += 8) {
    for (int64_t k : {int64_t{0}, n - 16, n}) {
      std::string src =
          "\t.type\tf, @function\n"
          "f:\n"
          "\taddi sp, sp, -" + std::to_string(n) + "\n"
          "\tsd ra, " + std::to_string(n - 8) + "(sp)\n"
          "\tsd fp, " + std::to_string(n - 16) + "(sp)\n"
          "\taddi fp, sp, " + std::to_string(k) + "\n"
          "\tret\n";
      AsmUnit unit = parse_unit(src);
      auto shape = match_prologue(unit, unit.functions.at(0));
      REQUIRE(shape);
      CHECK(shape->frame == n);
      CHECK(shape->fp_off == k);

      HardenConfig config;
      config.calls = true;
      auto result = harden_unit(parse_unit(src), config);
      size_t end = result.unit.items.size() - 1;  // trailing ret
      size_t begin = result.unit.symbols.at("f") + 1;
      auto [sp, fp, ra_slot, fp_slot] = evaluate(result.unit.items, begin, end);
      CAPTURE(n); CAPTURE(k);
      CHECK(sp == -n);
      CHECK(fp == -n + k);
      CHECK(ra_slot == -8);
      CHECK(fp_slot == -16);
      // split form: constant 16-byte first phase
      const auto& first = std::get<Instruction>(result.unit.items[begin]);
      CHECK(first == [] { Instruction i; i.mnemonic = "addi";
        i.operands = {reg_sp, reg_sp, int64_t{-16}}; i.origin = Origin::synthesized;
        return i; }());
    }
  }
}

TEST_CASE("overhead report reproduces the per-site deltas") {
  AsmUnit unit = parse_unit(fixtures::overhead_fixture());

  auto g = harden_unit(unit, all_of(IsaProfile::rv64g)).report;
  CHECK(g.indirect_jumps.delta_bytes == 12);
  CHECK(g.indirect_calls.delta_bytes == 28);
  CHECK(g.prologues.delta_bytes == 4);
  CHECK(g.direct_calls.delta_bytes == 16);
  CHECK(g.indirect_jumps.count == 1);
  CHECK(g.prologues.count == 3);
  CHECK(int64_t(g.total_after) - int64_t(g.total_before) == g.total_delta());

  auto gc = harden_unit(unit, all_of(IsaProfile::rv64gc)).report;
  CHECK(gc.indirect_jumps.delta_bytes == 10);
  CHECK(gc.indirect_calls.delta_bytes == 22);
  CHECK(gc.prologues.delta_bytes == 2);
  CHECK(gc.direct_calls.delta_bytes == 14);
  CHECK(int64_t(gc.total_after) - int64_t(gc.total_before) == gc.total_delta());

  // JSON is stable and carries all four categories
  std::string j = gc.to_json();
  CHECK(j.find("\"direct_calls\"") != std::string::npos);
  CHECK(harden_unit(unit, all_of(IsaProfile::rv64gc)).report.to_json() == j);
}

TEST_CASE("category filters and zero-site inputs") {
  // rsb alone ignores indirect jumps
  auto rsb_only = [] { HardenConfig c; c.rsb = true; return c; }();
  auto result = harden_unit(parse_unit("\tjr t0\n"), rsb_only);
  CHECK(result.unit == expand_unit(parse_unit("\tjr t0\n")));
  CHECK(result.report.total_delta() == 0);
  CHECK(result.report.direct_calls.count == 0);

  // no sites at all: canonical passthrough
  auto none = harden_unit(parse_unit("\taddi a0, a0, 1\n\tret\n"), all_of(IsaProfile::rv64gc));
  CHECK(none.unit == expand_unit(parse_unit("\taddi a0, a0, 1\n\tret\n")));

  CHECK_THROWS_AS(harden_unit(parse_unit("\tnop\n"), HardenConfig{}), HardenError);
}

TEST_CASE("unrecognized prologue refusal and --force") {
  std::string src =
      "\t.type\tweird, @function\n"
      "\tla t0, weird\n"
      "\tjalr t0\n"
      "weird:\n"
      "\taddi a0, a0, 1\n"
      "\tret\n";
  HardenConfig config;
  config.calls = true;
  CHECK_THROWS_WITH_AS(harden_unit(parse_unit(src), config),
                       doctest::Contains("weird"), HardenError);

  config.force = true;
  auto result = harden_unit(parse_unit(src), config);
  CHECK(result.report.indirect_calls.count == 1);
  bool noted = false;
  for (const auto& d : result.diagnostics)
    noted |= d.find("weird") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("argument-register call target draws a diagnostic") {
  std::string src =
      "\t.type\tf, @function\n"
      "\tjalr a0\n"
      "f:\n"
      "\taddi sp, sp, -16\n"
      "\tsd ra, 8(sp)\n"
      "\tsd fp, 0(sp)\n"
      "\taddi fp, sp, 16\n"
      "\tret\n";
  HardenConfig config;
  config.calls = true;
  auto result = harden_unit(parse_unit(src), config);
  bool warned = false;
  for (const auto& d : result.diagnostics)
    warned |= d.find("argument register a0") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("hardening is idempotent and leaves no original-origin sites") {
  std::vector<std::string> sources{fixtures::overhead_fixture()};
  for (const auto& fx : fixtures::benign_corpus())
    if (!fx.direct_calls) sources.push_back(fx.text);

  for (const auto& text : sources) {
    auto config = all_of(IsaProfile::rv64gc);
    auto once = harden_unit(parse_unit(text), config);
    CHECK(find_rewrite_sites(once.unit, config).empty());

    auto twice = harden_unit(once.unit, config);
    CHECK(twice.unit == once.unit);
    CHECK(twice.report.total_delta() == 0);
    CHECK(twice.report.total_before == twice.report.total_after);

    // and the printed form round-trips through the marker scheme
    auto reparsed = harden_unit(parse_unit(print_unit(once.unit)), config);
    CHECK(reparsed.unit == once.unit);
  }
}
