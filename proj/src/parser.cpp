#include "specshield/parser.hpp"

#include <cctype>
#include <charconv>
#include <sstream>
#include <unordered_map>

namespace specshield {

namespace {

// Operand pattern characters:
//   r register   i immediate   s symbol   m offset(base)
//   l immediate or %lo(sym)    h immediate or %hi(sym)
const std::unordered_map<std::string, std::vector<std::string>>& signatures() {
  static const std::unordered_map<std::string, std::vector<std::string>> table = {
      {"ld", {"rm"}},   {"lw", {"rm"}},   {"lb", {"rm"}},   {"lbu", {"rm"}},
      {"sd", {"rm"}},   {"sb", {"rm"}},
      {"add", {"rrr"}}, {"sub", {"rrr"}}, {"and", {"rrr"}},
      {"addi", {"rrl"}}, {"andi", {"rri"}}, {"slli", {"rri"}}, {"srli", {"rri"}},
      {"lui", {"rh"}},
      {"beq", {"rrs"}}, {"bne", {"rrs"}}, {"blt", {"rrs"}},
      {"bge", {"rrs"}}, {"bltu", {"rrs"}}, {"bgeu", {"rrs"}},
      {"jal", {"rs", "s"}}, {"jalr", {"rri", "r"}},
      {"jr", {"r"}},    {"j", {"s"}},     {"ret", {""}},
      {"call", {"s"}},  {"tail", {"s"}},
      {"li", {"ri"}},   {"mv", {"rr"}},   {"la", {"rs"}},
      {"rdcycle", {"r"}}, {"ecall", {""}}, {"nop", {""}},
  };
  return table;
}

bool ident_start(char c) { return std::isalpha((unsigned char)c) || c == '_' || c == '.' || c == '$'; }
bool ident_char(char c) { return ident_start(c) || std::isdigit((unsigned char)c); }

std::string trim(std::string_view s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

struct LineCtx {
  const std::string& file;
  int line;
  [[noreturn]] void fail(const std::string& msg) const {
    throw AsmError(file + ":" + std::to_string(line) + ": " + msg);
  }
};

std::optional<int64_t> parse_number(const std::string& tok) {
  if (tok.empty()) return std::nullopt;
  size_t pos = 0;
  bool neg = tok[0] == '-';
  if (neg || tok[0] == '+') pos = 1;
  int base = 10;
  if (tok.size() > pos + 1 && tok[pos] == '0' && (tok[pos + 1] == 'x' || tok[pos + 1] == 'X')) {
    base = 16;
    pos += 2;
  }
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(tok.data() + pos, tok.data() + tok.size(), value, base);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return neg ? -value : value;
}

Operand parse_operand(const std::string& tok, const LineCtx& ctx) {
  if (tok.empty()) ctx.fail("empty operand");

  // %hi(sym) / %lo(sym)
  if (tok[0] == '%') {
    auto open = tok.find('(');
    if (open == std::string::npos || tok.back() != ')')
      ctx.fail("malformed relocation operand '" + tok + "'");
    std::string kind = tok.substr(1, open - 1);
    std::string sym = tok.substr(open + 1, tok.size() - open - 2);
    if (kind == "hi") return SymRef{sym, Reloc::hi};
    if (kind == "lo") return SymRef{sym, Reloc::lo};
    ctx.fail("unknown relocation '%" + kind + "'");
  }

  // offset(base)
  auto open = tok.find('(');
  if (open != std::string::npos) {
    if (tok.back() != ')') ctx.fail("malformed memory operand '" + tok + "'");
    std::string off = tok.substr(0, open);
    std::string base = tok.substr(open + 1, tok.size() - open - 2);
    auto reg = reg_from_name(base);
    if (!reg) ctx.fail("unknown base register '" + base + "'");
    int64_t offset = 0;
    if (!off.empty()) {
      auto n = parse_number(off);
      if (!n) ctx.fail("bad memory offset '" + off + "'");
      offset = *n;
    }
    return MemRef{offset, *reg};
  }

  if (auto reg = reg_from_name(tok)) return *reg;
  if (auto n = parse_number(tok)) return *n;

  if (!ident_start(tok[0])) ctx.fail("bad operand '" + tok + "'");
  for (char c : tok)
    if (!ident_char(c)) ctx.fail("bad operand '" + tok + "'");
  return SymRef{tok, Reloc::none};
}

char operand_class(const Operand& op) {
  if (std::holds_alternative<Register>(op)) return 'r';
  if (std::holds_alternative<int64_t>(op)) return 'i';
  if (std::holds_alternative<MemRef>(op)) return 'm';
  switch (std::get<SymRef>(op).reloc) {
    case Reloc::hi: return 'h';
    case Reloc::lo: return 'l';
    default: return 's';
  }
}

bool matches(const std::vector<Operand>& ops, const std::string& pattern) {
  if (ops.size() != pattern.size()) return false;
  for (size_t i = 0; i < ops.size(); ++i) {
    char got = operand_class(ops[i]);
    char want = pattern[i];
    bool ok = got == want || (want == 'l' && (got == 'i' || got == 'l')) ||
              (want == 'h' && (got == 'i' || got == 'h'));
    if (!ok) return false;
  }
  return true;
}

void validate(const Instruction& instr, const LineCtx& ctx) {
  auto it = signatures().find(instr.mnemonic);
  if (it == signatures().end()) ctx.fail("unknown mnemonic '" + instr.mnemonic + "'");
  for (const auto& pattern : it->second)
    if (matches(instr.operands, pattern)) return;
  ctx.fail("operands do not match signature of '" + instr.mnemonic + "'");
}

std::vector<std::string> split_operands(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cur = trim(cur);
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Parses the content of one line (after comment stripping), possibly a label
// followed by more content on the same line.
void parse_content(std::string content, bool synthesized, bool no_compress,
                   const LineCtx& ctx, AsmUnit& unit) {
  content = trim(content);
  if (content.empty()) return;

  if (content[0] == '.') {
    auto space = content.find_first_of(" \t");
    Directive dir;
    dir.name = content.substr(1, space == std::string::npos ? space : space - 1);
    if (space != std::string::npos) dir.args = trim(content.substr(space));
    unit.items.emplace_back(std::move(dir));
    return;
  }

  // label?
  if (ident_start(content[0])) {
    size_t i = 0;
    while (i < content.size() && ident_char(content[i])) ++i;
    if (i < content.size() && content[i] == ':') {
      unit.items.emplace_back(Label{content.substr(0, i)});
      parse_content(content.substr(i + 1), synthesized, no_compress, ctx, unit);
      return;
    }
  }

  auto space = content.find_first_of(" \t");
  Instruction instr;
  instr.mnemonic = content.substr(0, space);
  if (space != std::string::npos)
    for (auto& tok : split_operands(content.substr(space)))
      instr.operands.push_back(parse_operand(tok, ctx));
  validate(instr, ctx);
  instr.origin = synthesized ? Origin::synthesized : Origin::original;
  instr.no_compress = no_compress;
  instr.loc = {ctx.file, ctx.line};
  unit.items.emplace_back(std::move(instr));
}

}  // namespace

AsmUnit parse_unit(std::string_view text, const std::string& filename) {
  AsmUnit unit;
  int lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string line(text.substr(pos, eol == std::string_view::npos ? eol : eol - pos));
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    LineCtx ctx{filename, lineno};

    bool synthesized = false;
    bool no_compress = false;
    auto hash = line.find('#');
    if (hash != std::string::npos) {
      std::string comment = trim(line.substr(hash + 1));
      if (comment.rfind("@specshield", 0) == 0) {
        synthesized = true;
        if (comment.find("norvc") != std::string::npos) no_compress = true;
      }
      line = line.substr(0, hash);
    }
    parse_content(line, synthesized, no_compress, ctx, unit);
  }
  reindex(unit);
  return unit;
}

namespace {

std::string print_operand(const Operand& op) {
  if (const auto* r = std::get_if<Register>(&op)) return abi_name(*r);
  if (const auto* i = std::get_if<int64_t>(&op)) return std::to_string(*i);
  if (const auto* m = std::get_if<MemRef>(&op))
    return std::to_string(m->offset) + "(" + abi_name(m->base) + ")";
  const auto& s = std::get<SymRef>(op);
  switch (s.reloc) {
    case Reloc::hi: return "%hi(" + s.name + ")";
    case Reloc::lo: return "%lo(" + s.name + ")";
    default: return s.name;
  }
}

}  // namespace

std::string print_instruction(const Instruction& instr) {
  std::string out = "\t" + instr.mnemonic;
  for (size_t i = 0; i < instr.operands.size(); ++i)
    out += (i == 0 ? "\t" : ", ") + print_operand(instr.operands[i]);
  if (instr.origin == Origin::synthesized)
    out += instr.no_compress ? "\t#@specshield norvc" : "\t#@specshield";
  return out;
}

std::string print_unit(const AsmUnit& unit) {
  std::ostringstream out;
  for (const auto& item : unit.items) {
    if (const auto* label = std::get_if<Label>(&item)) {
      out << label->name << ":\n";
    } else if (const auto* dir = std::get_if<Directive>(&item)) {
      out << "\t." << dir->name;
      if (!dir->args.empty()) out << "\t" << dir->args;
      out << "\n";
    } else {
      out << print_instruction(std::get<Instruction>(item)) << "\n";
    }
  }
  return out.str();
}

}  // namespace specshield
