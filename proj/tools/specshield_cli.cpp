#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "specshield/attack.hpp"
#include "specshield/harden.hpp"
#include "specshield/machine.hpp"
#include "specshield/parser.hpp"

namespace {

using namespace specshield;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRefused = 2;
constexpr int kExitExpectFailed = 3;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AsmError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AsmError("cannot write " + path);
  out << text;
}

IsaProfile parse_isa(const std::string& name) {
  if (name == "rv64g") return IsaProfile::rv64g;
  if (name == "rv64gc") return IsaProfile::rv64gc;
  throw AsmError("unknown isa '" + name + "' (expected rv64g or rv64gc)");
}

void parse_mitigations(const std::string& list, HardenConfig& config) {
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "all") config.jumps = config.calls = config.rsb = true;
    else if (item == "jumps") config.jumps = true;
    else if (item == "calls") config.calls = true;
    else if (item == "rsb") config.rsb = true;
    else throw AsmError("unknown mitigation '" + item + "'");
  }
  if (!config.any()) throw AsmError("--mitigate selects nothing");
}

MachineConfig load_config(const std::string& path) {
  if (path.empty()) return MachineConfig{};
  return MachineConfig::from_json_text(slurp(path));
}

const char* category_name(SiteKind kind) {
  switch (kind) {
    case SiteKind::indirect_jump: return "indirect_jumps";
    case SiteKind::indirect_call: return "indirect_calls";
    case SiteKind::direct_call: return "direct_calls";
    case SiteKind::prologue: return "prologues";
  }
  return "?";
}

int cmd_harden(const std::string& input, const std::string& output,
               const std::string& isa_name, const std::string& mitigate,
               const std::string& report_path, bool force) {
  HardenConfig config;
  config.isa = parse_isa(isa_name);
  config.force = force;
  parse_mitigations(mitigate, config);

  AsmUnit unit = parse_unit(slurp(input), input);
  HardenResult result = harden_unit(unit, config);

  if (!output.empty()) spill(output, print_unit(result.unit));
  else std::cout << print_unit(result.unit);
  if (!report_path.empty()) spill(report_path, result.report.to_json() + "\n");

  for (const auto& d : result.diagnostics) std::cerr << "note: " << d << "\n";
  const auto& r = result.report;
  auto line = [](const char* name, const CategoryOverhead& c) {
    std::cout << name << ": " << c.count << " site(s), delta " << c.delta_total;
    if (c.delta_bytes) std::cout << " (" << *c.delta_bytes << "/site)";
    std::cout << "\n";
  };
  line("indirect_jumps", r.indirect_jumps);
  line("indirect_calls", r.indirect_calls);
  line("prologues", r.prologues);
  line("direct_calls", r.direct_calls);
  std::cout << "total: " << r.total_before << " -> " << r.total_after << " bytes\n";
  return kExitOk;
}

int cmd_run(const std::string& input, const std::string& isa_name,
            const std::string& config_path, const std::string& trace_path) {
  MachineConfig config = load_config(config_path);
  AsmUnit unit = parse_unit(slurp(input), input);
  auto program = std::make_shared<const Program>(unit, config, parse_isa(isa_name));
  Machine machine(program);
  RunResult result = machine.run();

  if (!trace_path.empty()) spill(trace_path, result.to_json() + "\n");
  switch (result.status) {
    case RunStatus::halted:
      std::cout << "exit=" << result.exit_code << " cycles=" << result.cycles
                << " spec_events=" << result.spec_events.size() << "\n";
      return kExitOk;
    case RunStatus::timeout: throw AsmError("step budget exhausted");
    case RunStatus::fault: throw AsmError("machine fault (pc=" +
        std::to_string(machine.pc()) + ")");
  }
  return kExitUsage;
}

int cmd_attack(const std::string& variant_name_arg, bool mitigated,
               const std::string& isa_name, const std::string& config_path,
               int trials, int mistrain, const std::string& secret,
               const std::string& expect, const std::string& report_path) {
  auto kind = variant_from_name(variant_name_arg);
  if (!kind) throw AsmError("unknown variant '" + variant_name_arg + "'");
  if (!expect.empty() && expect != "leak" && expect != "no-leak")
    throw AsmError("--expect takes 'leak' or 'no-leak'");

  PocVariant variant;
  variant.kind = *kind;
  variant.secret = secret;
  variant.mistrain = mistrain;
  variant.trials_per_char = trials;
  MachineConfig config = load_config(config_path);

  std::optional<HardenConfig> harden;
  if (mitigated) harden = matching_mitigation(*kind, parse_isa(isa_name));

  AttackOutcome outcome = run_attack(variant, config, harden);
  std::cout << outcome.transcript();
  if (!report_path.empty()) spill(report_path, outcome.to_json() + "\n");

  if (!expect.empty()) {
    int correct = 0;
    for (size_t i = 0; i < secret.size(); ++i)
      if (i < outcome.recovered.size() && outcome.recovered[i] == secret[i]) ++correct;
    bool ok = expect == "leak" ? outcome.recovered == secret : correct == 0;
    if (!ok) {
      std::cerr << "expectation '" << expect << "' failed (recovered '"
                << outcome.recovered << "')\n";
      return kExitExpectFailed;
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retpoline-style hardening and speculation sandbox for an rv64 subset"};
  app.require_subcommand(1);

  std::string input, output, isa = "rv64gc", mitigate, report, config_path, trace;
  bool force = false;

  auto* harden = app.add_subcommand("harden", "rewrite speculation-prone sites");
  harden->add_option("input", input, "assembly file")->required();
  harden->add_option("-o", output, "hardened output path (default stdout)");
  harden->add_option("--isa", isa, "rv64g|rv64gc");
  harden->add_option("--mitigate", mitigate, "jumps,calls,rsb|all")->required();
  harden->add_option("--report", report, "overhead report JSON path");
  harden->add_flag("--force", force, "proceed past unrecognized prologues");

  auto* run = app.add_subcommand("run", "execute a program on the core model");
  run->add_option("input", input, "assembly file")->required();
  run->add_option("--isa", isa, "rv64g|rv64gc");
  run->add_option("--config", config_path, "machine config JSON");
  run->add_option("--trace", trace, "run result JSON path");

  std::string variant, secret = "BOOM!", expect;
  int trials = 10, mistrain = 40;
  bool mitigated = false;
  auto* attack = app.add_subcommand("attack", "reproduce a covert-channel proof of concept");
  attack->add_option("--variant", variant, "v2-call|v2-jump|v5")->required();
  attack->add_flag("--mitigated", mitigated, "harden the fixture first");
  attack->add_option("--isa", isa, "rv64g|rv64gc");
  attack->add_option("--config", config_path, "machine config JSON");
  attack->add_option("--trials", trials, "trials per character");
  attack->add_option("--mistrain", mistrain, "training rounds before the attack round");
  attack->add_option("--secret", secret, "victim secret string");
  attack->add_option("--expect", expect, "leak|no-leak as exit status");
  attack->add_option("--report", report, "outcome JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (harden->parsed())
      return cmd_harden(input, output, isa, mitigate, report, force);
    if (run->parsed())
      return cmd_run(input, isa, config_path, trace);
    return cmd_attack(variant, mitigated, isa, config_path, trials, mistrain,
                      secret, expect, report);
  } catch (const HardenError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRefused;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
