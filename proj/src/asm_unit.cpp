#include "specshield/asm_unit.hpp"

#include <array>
#include <unordered_map>

namespace specshield {

namespace {

const std::array<std::string, 32> kAbiNames = {
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "fp", "s1",
    "a0",   "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2", "s3",
    "s4",   "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5",   "t6"};

const std::unordered_map<std::string, uint8_t>& name_table() {
  static const auto* table = [] {
    auto* t = new std::unordered_map<std::string, uint8_t>;
    for (uint8_t i = 0; i < 32; ++i) {
      (*t)[kAbiNames[i]] = i;
      (*t)["x" + std::to_string(i)] = i;
    }
    (*t)["s0"] = 8;  // fp alias
    return t;
  }();
  return *table;
}

}  // namespace

const std::string& abi_name(Register r) { return kAbiNames.at(r.index); }

std::optional<Register> reg_from_name(const std::string& name) {
  auto it = name_table().find(name);
  if (it == name_table().end()) return std::nullopt;
  return Register{it->second};
}

void reindex(AsmUnit& unit) {
  unit.symbols.clear();
  unit.functions.clear();
  unit.externals.clear();

  std::set<std::string> function_names;
  for (const auto& item : unit.items) {
    if (const auto* dir = std::get_if<Directive>(&item)) {
      if (dir->name == "type" && dir->args.find("@function") != std::string::npos) {
        auto comma = dir->args.find(',');
        std::string name = dir->args.substr(0, comma);
        while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
        function_names.insert(name);
      } else if (dir->name == "extern") {
        unit.externals.insert(dir->args);
      }
    }
  }

  for (size_t i = 0; i < unit.items.size(); ++i) {
    if (const auto* label = std::get_if<Label>(&unit.items[i])) {
      if (unit.symbols.count(label->name))
        throw AsmError("duplicate label '" + label->name + "'");
      unit.symbols[label->name] = i;
      if (function_names.count(label->name))
        unit.functions.push_back({label->name, i, unit.items.size()});
    }
  }
  for (size_t f = 0; f + 1 < unit.functions.size(); ++f)
    unit.functions[f].end = unit.functions[f + 1].begin;
}

}  // namespace specshield
