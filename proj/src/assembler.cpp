#include "emfi/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>

#include <fmt/format.h>

#include "emfi/isa.hpp"

namespace emfi::assembler {

AssemblyError::AssemblyError(int line, const std::string& msg)
    : std::runtime_error(fmt::format("line {}: {}", line, msg)), line_(line) {}

namespace {

using isa::Cond;
using isa::Instr;
using isa::Mnemonic;

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string stripComment(std::string_view line) {
  std::size_t cut = line.size();
  for (std::string_view mark : {";", "@", "//"}) cut = std::min(cut, line.find(mark));
  return std::string(line.substr(0, cut));
}

// Splits on commas outside brackets and braces.
std::vector<std::string> splitOperands(const std::string& s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '[' || c == '{') ++depth;
    if (c == ']' || c == '}') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

std::optional<std::int64_t> parseNumber(std::string s) {
  s = trim(s);
  if (!s.empty() && s[0] == '#') s = trim(s.substr(1));
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s = s.substr(1);
  }
  if (s.empty()) return std::nullopt;
  int radix = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    radix = 16;
    s = s.substr(2);
  } else if (s.size() > 2 && s[0] == '0' && (s[1] == 'b' || s[1] == 'B')) {
    radix = 2;
    s = s.substr(2);
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, radix);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
}

std::optional<int> parseReg(std::string s) {
  s = lower(trim(s));
  if (s == "sp") return 13;
  if (s == "lr") return 14;
  if (s == "pc") return 15;
  if (s.size() < 2 || s[0] != 'r') return std::nullopt;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v < 0 || v > 15) return std::nullopt;
  return v;
}

std::optional<Cond> parseCond(std::string_view s) {
  static constexpr std::pair<std::string_view, Cond> table[] = {
      {"eq", Cond::EQ}, {"ne", Cond::NE}, {"cs", Cond::CS}, {"hs", Cond::CS}, {"cc", Cond::CC},
      {"lo", Cond::CC}, {"mi", Cond::MI}, {"pl", Cond::PL}, {"vs", Cond::VS}, {"vc", Cond::VC},
      {"hi", Cond::HI}, {"ls", Cond::LS}, {"ge", Cond::GE}, {"lt", Cond::LT}, {"gt", Cond::GT},
      {"le", Cond::LE}};
  for (auto [name, c] : table)
    if (s == name) return c;
  return std::nullopt;
}

struct Statement {
  int line = 0;
  std::string op;  // lower-case mnemonic or directive, without .w/.n
  bool wide = false;
  std::vector<std::string> args;
  std::uint32_t addr = 0;
  std::uint32_t size = 0;
};

struct MemOperand {
  int rn = 0;
  std::optional<int> rm;
  std::int64_t imm = 0;
  int shift = 0;
};

class Assembler {
 public:
  Assembler(std::string_view source, std::uint32_t base) : source_(source), base_(base) {}

  Assembly run() {
    out_.base = base_;
    parse();
    layout();
    emit();
    resolveDirectives();
    return std::move(out_);
  }

 private:
  [[noreturn]] void fail(int line, const std::string& msg) const { throw AssemblyError(line, msg); }

  void parse() {
    int lineNo = 0;
    std::size_t pos = 0;
    while (pos <= source_.size()) {
      std::size_t nl = source_.find('\n', pos);
      if (nl == std::string_view::npos) nl = source_.size();
      ++lineNo;
      std::string text = trim(stripComment(source_.substr(pos, nl - pos)));
      pos = nl + 1;
      while (!text.empty()) {
        const std::size_t colon = text.find(':');
        if (colon == std::string::npos) break;
        const std::string label = trim(text.substr(0, colon));
        if (label.empty() || label.find_first_of(" \t[],#{}") != std::string::npos) break;
        pendingLabels_.emplace_back(label, lineNo);
        text = trim(text.substr(colon + 1));
      }
      if (text.empty()) continue;
      Statement st;
      st.line = lineNo;
      const std::size_t sp = text.find_first_of(" \t");
      st.op = lower(text.substr(0, sp));
      if (sp != std::string::npos) st.args = splitOperands(text.substr(sp + 1));
      if (st.op.size() > 2 && (st.op.ends_with(".w") || st.op.ends_with(".n")) && st.op[0] != '.') {
        st.wide = st.op.ends_with(".w");
        st.op.resize(st.op.size() - 2);
      }
      st.size = UINT32_MAX;
      for (auto& [l, ln] : pendingLabels_) labelsBefore_.emplace_back(statements_.size(), l, ln);
      pendingLabels_.clear();
      statements_.push_back(std::move(st));
    }
    for (auto& [l, ln] : pendingLabels_) labelsBefore_.emplace_back(statements_.size(), l, ln);
  }

  std::uint32_t sizeOf(const Statement& st, std::uint32_t addr) const {
    const auto& a = st.args;
    if (st.op == ".word") return static_cast<std::uint32_t>(4 * a.size());
    if (st.op == ".org") {
      auto v = parseNumber(a.empty() ? "" : a[0]);
      if (!v || *v < 0) fail(st.line, ".org needs a non-negative offset");
      const std::uint64_t target = base_ + static_cast<std::uint64_t>(*v);
      if (target < addr) fail(st.line, ".org moves backwards");
      return static_cast<std::uint32_t>(target - addr);
    }
    if (st.op == ".align") {
      auto v = parseNumber(a.empty() ? "2" : a[0]);
      if (!v || *v < 0 || *v > 12) fail(st.line, "bad .align");
      const std::uint32_t m = 1u << *v;
      return (m - (addr % m)) % m;
    }
    if (!st.op.empty() && st.op[0] == '.') return 0;
    if (st.op == "bl") return 4;
    if (st.wide) return 4;
    if (st.op == "ldr" || st.op == "str") return wideMemory(st) ? 4 : 2;
    return 2;
  }

  // Whether a load/store needs the 32-bit form, decided from syntax alone so
  // that layout does not depend on label values.
  bool wideMemory(const Statement& st) const {
    if (st.args.size() != 2) fail(st.line, "expected two operands");
    const auto rt = parseReg(st.args[0]);
    if (!rt) fail(st.line, "bad register " + st.args[0]);
    const std::string& m = st.args[1];
    if (m.empty() || m[0] != '[') return *rt > 7;  // literal by label
    const MemOperand mo = parseMem(st.line, m);
    if (mo.rm) return mo.shift != 0 || *rt > 7 || mo.rn > 7 || *mo.rm > 7;
    if (mo.rn == 15) return *rt > 7 || mo.imm < 0 || mo.imm > 1020 || mo.imm % 4 != 0;
    if (mo.rn == 13) return *rt > 7 || mo.imm < 0 || mo.imm > 1020 || mo.imm % 4 != 0;
    return *rt > 7 || mo.rn > 7 || mo.imm < 0 || mo.imm > 124 || mo.imm % 4 != 0;
  }

  MemOperand parseMem(int line, const std::string& m) const {
    if (m.size() < 2 || m.front() != '[' || m.back() != ']') fail(line, "bad memory operand " + m);
    const auto parts = splitOperands(m.substr(1, m.size() - 2));
    MemOperand mo;
    if (parts.empty()) fail(line, "empty memory operand");
    auto rn = parseReg(parts[0]);
    if (!rn) fail(line, "bad base register " + parts[0]);
    mo.rn = *rn;
    if (parts.size() >= 2) {
      if (auto rm = parseReg(parts[1])) {
        mo.rm = *rm;
      } else if (auto v = parseNumber(parts[1])) {
        mo.imm = *v;
      } else {
        fail(line, "bad offset " + parts[1]);
      }
    }
    if (parts.size() == 3) {
      const std::string sh = lower(parts[2]);
      if (!mo.rm || !sh.starts_with("lsl")) fail(line, "only 'lsl #n' register shifts are supported");
      auto v = parseNumber(sh.substr(3));
      if (!v || *v < 0 || *v > 3) fail(line, "shift out of range");
      mo.shift = static_cast<int>(*v);
    }
    if (parts.size() > 3) fail(line, "too many memory operand parts");
    return mo;
  }

  void layout() {
    std::uint32_t addr = base_;
    std::size_t li = 0;
    for (std::size_t k = 0; k <= statements_.size(); ++k) {
      for (; li < labelsBefore_.size() && std::get<0>(labelsBefore_[li]) == k; ++li) {
        const auto& [idx, name, line] = labelsBefore_[li];
        if (out_.symbols.contains(name)) fail(line, "duplicate label " + name);
        out_.symbols[name] = addr;
      }
      if (k == statements_.size()) break;
      Statement& st = statements_[k];
      st.addr = addr;
      st.size = sizeOf(st, addr);
      addr += st.size;
    }
    out_.bytes.assign(addr - base_, 0);
  }

  std::int64_t value(int line, const std::string& s, std::uint32_t here) const {
    const std::string t = trim(s);
    if (t == ".") return here;
    if (auto v = parseNumber(t)) return *v;
    auto it = out_.symbols.find(t);
    if (it == out_.symbols.end()) fail(line, "unknown symbol " + t);
    return it->second;
  }

  int reg(const Statement& st, std::size_t k) const {
    if (k >= st.args.size()) fail(st.line, "missing operand");
    auto r = parseReg(st.args[k]);
    if (!r) fail(st.line, "bad register " + st.args[k]);
    return *r;
  }

  bool isImm(const Statement& st, std::size_t k) const { return k < st.args.size() && !st.args[k].empty() && st.args[k][0] == '#'; }

  std::int64_t imm(const Statement& st, std::size_t k) const {
    auto v = parseNumber(st.args.at(k));
    if (!v) fail(st.line, "bad immediate " + st.args[k]);
    return *v;
  }

  void nargs(const Statement& st, std::size_t lo, std::size_t hi) const {
    if (st.args.size() < lo || st.args.size() > hi) fail(st.line, "wrong operand count for " + st.op);
  }

  Instr instruction(const Statement& st) const {
    Instr i;
    std::string op = st.op;
    const auto u8 = [](int v) { return static_cast<std::uint8_t>(v); };

    if (op == "nop") {
      nargs(st, 0, 0);
      i.mnemonic = Mnemonic::NOP;
      return i;
    }
    if (op == "mov" || op == "movs") {
      nargs(st, 2, 2);
      i.rd = u8(reg(st, 0));
      if (isImm(st, 1)) {
        i.mnemonic = Mnemonic::MOVimm;
        i.imm = static_cast<std::int32_t>(imm(st, 1));
        i.setFlags = true;
      } else if (op == "movs") {
        i.mnemonic = Mnemonic::LSLimm;
        i.rm = u8(reg(st, 1));
        i.setFlags = true;
      } else {
        i.mnemonic = Mnemonic::MOVreg;
        i.rm = u8(reg(st, 1));
      }
      return i;
    }
    if (op == "add" || op == "adds" || op == "sub" || op == "subs") {
      nargs(st, 2, 3);
      const bool add = op[0] == 'a';
      const bool s = op.back() == 's';
      i.rd = u8(reg(st, 0));
      const std::size_t last = st.args.size() - 1;
      i.rn = st.args.size() == 3 ? u8(reg(st, 1)) : i.rd;
      if (isImm(st, last)) {
        i.mnemonic = add ? Mnemonic::ADDimm : Mnemonic::SUBimm;
        i.imm = static_cast<std::int32_t>(imm(st, last));
        i.setFlags = true;
      } else {
        i.mnemonic = add ? Mnemonic::ADDreg : Mnemonic::SUBreg;
        i.rm = u8(reg(st, last));
        // Two-operand `add` is the high-register form, which leaves flags alone.
        i.setFlags = !(add && !s && st.args.size() == 2);
      }
      return i;
    }
    if (op == "cmp") {
      nargs(st, 2, 2);
      i.rn = u8(reg(st, 0));
      i.setFlags = true;
      if (isImm(st, 1)) {
        i.mnemonic = Mnemonic::CMPimm;
        i.imm = static_cast<std::int32_t>(imm(st, 1));
      } else {
        i.mnemonic = Mnemonic::CMPreg;
        i.rm = u8(reg(st, 1));
      }
      return i;
    }
    for (auto [name, m] : {std::pair{"and", Mnemonic::AND}, {"orr", Mnemonic::ORR}, {"eor", Mnemonic::EOR}}) {
      if (op != name && op != std::string(name) + "s") continue;
      nargs(st, 2, 3);
      i.mnemonic = m;
      i.rd = u8(reg(st, 0));
      i.rn = i.rd;
      if (st.args.size() == 3 && reg(st, 1) != i.rd) fail(st.line, "destination must equal first operand");
      i.rm = u8(reg(st, st.args.size() - 1));
      i.setFlags = true;
      return i;
    }
    if (op == "lsl" || op == "lsls") {
      nargs(st, 3, 3);
      i.mnemonic = Mnemonic::LSLimm;
      i.rd = u8(reg(st, 0));
      i.rm = u8(reg(st, 1));
      const auto n = imm(st, 2);
      if (n < 0 || n > 31) fail(st.line, "shift out of range");
      i.shift = static_cast<std::uint8_t>(n);
      i.setFlags = true;
      return i;
    }
    if (op == "ldr" || op == "str") return memory(st);
    if (op == "push" || op == "pop") {
      nargs(st, 1, 1);
      i.mnemonic = op == "push" ? Mnemonic::PUSH : Mnemonic::POP;
      i.regList = registerList(st);
      return i;
    }
    if (op == "b" || op == "bl" || (op.size() == 3 && op[0] == 'b' && parseCond(op.substr(1)))) {
      nargs(st, 1, 1);
      const std::int64_t target = value(st.line, st.args[0], st.addr);
      const std::int64_t off = target - (std::int64_t{st.addr} + 4);
      i.imm = static_cast<std::int32_t>(off);
      if (op == "bl") {
        i.mnemonic = Mnemonic::BL32;
        i.width = 32;
      } else if (op == "b") {
        i.mnemonic = Mnemonic::Buncond;
      } else {
        i.mnemonic = Mnemonic::Bcond;
        i.cond = *parseCond(op.substr(1));
      }
      return i;
    }
    fail(st.line, "unknown mnemonic " + op);
  }

  std::uint16_t registerList(const Statement& st) const {
    const std::string& s = st.args[0];
    if (s.size() < 2 || s.front() != '{' || s.back() != '}') fail(st.line, "expected register list");
    std::uint16_t list = 0;
    for (const auto& part : splitOperands(s.substr(1, s.size() - 2))) {
      const auto dash = part.find('-');
      if (dash != std::string::npos) {
        auto a = parseReg(part.substr(0, dash));
        auto b = parseReg(part.substr(dash + 1));
        if (!a || !b || *a > *b) fail(st.line, "bad register range " + part);
        for (int r = *a; r <= *b; ++r) list |= static_cast<std::uint16_t>(1u << r);
      } else {
        auto r = parseReg(part);
        if (!r) fail(st.line, "bad register " + part);
        list |= static_cast<std::uint16_t>(1u << *r);
      }
    }
    return list;
  }

  Instr memory(const Statement& st) const {
    Instr i;
    const bool load = st.op == "ldr";
    const bool wide = st.size == 4;
    i.width = wide ? 32 : 16;
    i.rd = static_cast<std::uint8_t>(reg(st, 0));
    const std::string& m = st.args[1];
    if (m.empty() || m[0] != '[') {
      if (!load) fail(st.line, "store needs a memory operand");
      const std::int64_t target = value(st.line, m, st.addr);
      const std::int64_t off = target - ((std::int64_t{st.addr} + 4) & ~std::int64_t{3});
      i.mnemonic = wide ? Mnemonic::LDRlit32 : Mnemonic::LDRlit;
      i.rn = 15;
      i.imm = static_cast<std::int32_t>(off);
      return i;
    }
    const MemOperand mo = parseMem(st.line, m);
    i.rn = static_cast<std::uint8_t>(mo.rn);
    if (mo.rm) {
      i.rm = static_cast<std::uint8_t>(*mo.rm);
      if (wide) {
        if (!load) fail(st.line, "32-bit register-offset store is outside the subset");
        i.mnemonic = Mnemonic::LDRregShift32;
        i.shift = static_cast<std::uint8_t>(mo.shift);
      } else {
        i.mnemonic = load ? Mnemonic::LDRreg : Mnemonic::STRreg;
      }
      return i;
    }
    i.imm = static_cast<std::int32_t>(mo.imm);
    if (mo.rn == 15) {
      if (!load) fail(st.line, "PC-relative store is outside the subset");
      i.mnemonic = wide ? Mnemonic::LDRlit32 : Mnemonic::LDRlit;
      return i;
    }
    i.mnemonic = load ? Mnemonic::LDRimm : Mnemonic::STRimm;
    return i;
  }

  void put16(std::uint32_t addr, std::uint32_t v) {
    out_.bytes[addr - base_] = static_cast<std::uint8_t>(v);
    out_.bytes[addr - base_ + 1] = static_cast<std::uint8_t>(v >> 8);
  }

  void emit() {
    for (const Statement& st : statements_) {
      if (st.op == ".word") {
        std::uint32_t a = st.addr;
        for (const auto& arg : st.args) {
          const auto v = static_cast<std::uint32_t>(value(st.line, arg, a));
          put16(a, v & 0xFFFF);
          put16(a + 2, v >> 16);
          a += 4;
        }
        continue;
      }
      if (st.op[0] == '.') continue;
      Instr i = instruction(st);
      if (st.wide && i.width == 16) {
        if (i.mnemonic == Mnemonic::LDRimm || i.mnemonic == Mnemonic::STRimm) {
          i.width = 32;
        } else {
          fail(st.line, st.op + ".w has no 32-bit form in the subset");
        }
      }
      if ((i.width == 32 ? 4u : 2u) != st.size) fail(st.line, "instruction width mismatch");
      std::uint32_t raw = 0;
      try {
        raw = isa::encode(i);
      } catch (const std::invalid_argument& e) {
        fail(st.line, e.what());
      }
      if (i.width == 32) {
        put16(st.addr, raw >> 16);
        put16(st.addr + 2, raw & 0xFFFF);
      } else {
        put16(st.addr, raw);
      }
      out_.lines.emplace_back(st.addr, st.line);
    }
  }

  void resolveDirectives() {
    Directives& d = out_.directives;
    for (const Statement& st : statements_) {
      if (st.op == ".reg") {
        nargs(st, 2, 2);
        d.registers[reg(st, 0)] = static_cast<std::uint32_t>(value(st.line, st.args[1], st.addr));
      } else if (st.op == ".data") {
        nargs(st, 2, 2);
        d.data.emplace_back(static_cast<std::uint32_t>(value(st.line, st.args[0], st.addr)),
                            static_cast<std::uint32_t>(value(st.line, st.args[1], st.addr)));
      } else if (st.op == ".watch") {
        nargs(st, 1, 1);
        d.watched.push_back(static_cast<std::uint32_t>(value(st.line, st.args[0], st.addr)));
      } else if (st.op == ".result") {
        nargs(st, 1, 1);
        if (!parseReg(st.args[0])) value(st.line, st.args[0], st.addr);
        d.result = lower(trim(st.args[0]));
      } else if (st.op == ".entry" || st.op == ".watchpoint") {
        nargs(st, 1, 1);
        value(st.line, st.args[0], st.addr);
        (st.op == ".entry" ? d.entry : d.watchpoint) = trim(st.args[0]);
      } else if (!st.op.empty() && st.op[0] == '.' && st.op != ".word" && st.op != ".org" && st.op != ".align" &&
                 st.op != ".thumb" && st.op != ".syntax") {
        fail(st.line, "unknown directive " + st.op);
      }
    }
  }

  std::string_view source_;
  std::uint32_t base_;
  std::vector<Statement> statements_;
  std::vector<std::pair<std::string, int>> pendingLabels_;
  std::vector<std::tuple<std::size_t, std::string, int>> labelsBefore_;
  Assembly out_;
};

}  // namespace

Assembly assemble(std::string_view source, std::uint32_t base) { return Assembler(source, base).run(); }

}  // namespace emfi::assembler
