#include "emfi/isa.hpp"

#include <bit>
#include <stdexcept>

#include <fmt/format.h>

namespace emfi::isa {

bool operator==(const Instr& a, const Instr& b) {
  if (a.mnemonic != b.mnemonic || a.width != b.width) return false;
  if (a.mnemonic == Mnemonic::Unsupported) return a.raw == b.raw;
  return a.rd == b.rd && a.rn == b.rn && a.rm == b.rm && a.imm == b.imm && a.shift == b.shift &&
         a.cond == b.cond && a.regList == b.regList && a.setFlags == b.setFlags;
}

namespace {

std::int32_t signExtend(std::uint32_t v, int bits) {
  const std::uint32_t m = 1u << (bits - 1);
  return static_cast<std::int32_t>((v ^ m) - m);
}

Instr make(Mnemonic m, HalfWord raw) {
  Instr i;
  i.mnemonic = m;
  i.raw = raw;
  return i;
}

Instr unsupported16(HalfWord h) { return make(Mnemonic::Unsupported, h); }

Instr decode16(HalfWord h) {
  const std::uint8_t lo3 = h & 7;
  const std::uint8_t mid3 = (h >> 3) & 7;

  switch (h >> 13) {
    case 0b000: {
      const unsigned op = (h >> 11) & 3;
      if (op == 0) {
        Instr i = make(Mnemonic::LSLimm, h);
        i.rd = lo3;
        i.rm = mid3;
        i.shift = (h >> 6) & 31;
        i.setFlags = true;
        return i;
      }
      if (op != 3) return unsupported16(h);
      static constexpr Mnemonic kinds[4] = {Mnemonic::ADDreg, Mnemonic::SUBreg, Mnemonic::ADDimm,
                                            Mnemonic::SUBimm};
      const unsigned sel = (h >> 9) & 3;
      Instr i = make(kinds[sel], h);
      i.rd = lo3;
      i.rn = mid3;
      if (sel < 2)
        i.rm = (h >> 6) & 7;
      else
        i.imm = (h >> 6) & 7;
      i.setFlags = true;
      return i;
    }
    case 0b001: {
      static constexpr Mnemonic kinds[4] = {Mnemonic::MOVimm, Mnemonic::CMPimm, Mnemonic::ADDimm,
                                            Mnemonic::SUBimm};
      const unsigned sel = (h >> 11) & 3;
      const std::uint8_t r = (h >> 8) & 7;
      Instr i = make(kinds[sel], h);
      i.imm = h & 0xFF;
      i.setFlags = true;
      if (sel == 0) {
        i.rd = r;
      } else if (sel == 1) {
        i.rn = r;
      } else {
        i.rd = r;
        i.rn = r;
      }
      return i;
    }
    default:
      break;
  }

  if ((h >> 10) == 0b010000) {
    const unsigned op = (h >> 6) & 15;
    Mnemonic m;
    switch (op) {
      case 0b0000: m = Mnemonic::AND; break;
      case 0b0001: m = Mnemonic::EOR; break;
      case 0b1010: m = Mnemonic::CMPreg; break;
      case 0b1100: m = Mnemonic::ORR; break;
      default: return unsupported16(h);
    }
    Instr i = make(m, h);
    i.rm = mid3;
    i.rn = lo3;
    if (m != Mnemonic::CMPreg) i.rd = lo3;
    i.setFlags = true;
    return i;
  }

  if ((h >> 10) == 0b010001) {
    const unsigned op = (h >> 8) & 3;
    const std::uint8_t dn = static_cast<std::uint8_t>(((h >> 4) & 8) | lo3);
    const std::uint8_t m = (h >> 3) & 15;
    if (op == 0) {
      if (dn == 15 && m == 15) return unsupported16(h);
      Instr i = make(Mnemonic::ADDreg, h);
      i.rd = dn;
      i.rn = dn;
      i.rm = m;
      return i;
    }
    if (op == 1) {
      if ((dn < 8 && m < 8) || dn == 15 || m == 15) return unsupported16(h);
      Instr i = make(Mnemonic::CMPreg, h);
      i.rn = dn;
      i.rm = m;
      i.setFlags = true;
      return i;
    }
    if (op == 2) {
      Instr i = make(Mnemonic::MOVreg, h);
      i.rd = dn;
      i.rm = m;
      return i;
    }
    return unsupported16(h);
  }

  if ((h >> 11) == 0b01001) {
    Instr i = make(Mnemonic::LDRlit, h);
    i.rd = (h >> 8) & 7;
    i.rn = 15;
    i.imm = (h & 0xFF) * 4;
    return i;
  }

  if ((h >> 12) == 0b0101) {
    const unsigned op = (h >> 9) & 7;
    if (op != 0b000 && op != 0b100) return unsupported16(h);
    Instr i = make(op == 0 ? Mnemonic::STRreg : Mnemonic::LDRreg, h);
    i.rd = lo3;
    i.rn = mid3;
    i.rm = (h >> 6) & 7;
    return i;
  }

  if ((h >> 12) == 0b0110) {
    Instr i = make((h & 0x0800) ? Mnemonic::LDRimm : Mnemonic::STRimm, h);
    i.rd = lo3;
    i.rn = mid3;
    i.imm = ((h >> 6) & 31) * 4;
    return i;
  }

  if ((h >> 12) == 0b1001) {
    Instr i = make((h & 0x0800) ? Mnemonic::LDRimm : Mnemonic::STRimm, h);
    i.rd = (h >> 8) & 7;
    i.rn = 13;
    i.imm = (h & 0xFF) * 4;
    return i;
  }

  if ((h >> 9) == 0b1011010 || (h >> 9) == 0b1011110) {
    const bool pop = (h >> 11) & 1;
    std::uint16_t list = h & 0xFF;
    if (h & 0x100) list |= pop ? 0x8000 : 0x4000;
    if (list == 0) return unsupported16(h);
    Instr i = make(pop ? Mnemonic::POP : Mnemonic::PUSH, h);
    i.regList = list;
    return i;
  }

  if (h == 0xBF00) return make(Mnemonic::NOP, h);

  if ((h >> 12) == 0b1101) {
    const unsigned c = (h >> 8) & 15;
    if (c >= 14) return unsupported16(h);
    Instr i = make(Mnemonic::Bcond, h);
    i.cond = static_cast<Cond>(c);
    i.imm = signExtend((h & 0xFFu) << 1, 9);
    return i;
  }

  if ((h >> 11) == 0b11100) {
    Instr i = make(Mnemonic::Buncond, h);
    i.imm = signExtend((h & 0x7FFu) << 1, 12);
    return i;
  }

  return unsupported16(h);
}

Instr decode32(HalfWord h1, HalfWord h2) {
  Instr i;
  i.width = 32;
  i.raw = (static_cast<std::uint32_t>(h1) << 16) | h2;
  const std::uint8_t rn = h1 & 15;
  const std::uint8_t rt = h2 >> 12;

  if ((h1 & 0xF800) == 0xF000 && (h2 & 0xD000) == 0xD000) {
    const std::uint32_t s = (h1 >> 10) & 1;
    const std::uint32_t j1 = (h2 >> 13) & 1;
    const std::uint32_t j2 = (h2 >> 11) & 1;
    const std::uint32_t i1 = ~(j1 ^ s) & 1;
    const std::uint32_t i2 = ~(j2 ^ s) & 1;
    const std::uint32_t v =
        (s << 24) | (i1 << 23) | (i2 << 22) | ((h1 & 0x3FFu) << 12) | ((h2 & 0x7FFu) << 1);
    i.mnemonic = Mnemonic::BL32;
    i.imm = signExtend(v, 25);
    return i;
  }

  if ((h1 & 0xFF7F) == 0xF85F) {
    i.mnemonic = Mnemonic::LDRlit32;
    i.rd = rt;
    i.rn = 15;
    const std::int32_t off = h2 & 0xFFF;
    i.imm = (h1 & 0x80) ? off : -off;
    return i;
  }

  if ((h1 & 0xFFF0) == 0xF8D0) {
    i.mnemonic = Mnemonic::LDRimm;
    i.rd = rt;
    i.rn = rn;
    i.imm = h2 & 0xFFF;
    return i;
  }

  if ((h1 & 0xFFF0) == 0xF850 && (h2 & 0x0FC0) == 0) {
    const std::uint8_t rm = h2 & 15;
    if (rm == 13 || rm == 15) return i;
    i.mnemonic = Mnemonic::LDRregShift32;
    i.rd = rt;
    i.rn = rn;
    i.rm = rm;
    i.shift = (h2 >> 4) & 3;
    return i;
  }

  if ((h1 & 0xFFF0) == 0xF8C0 && rn != 15 && rt != 15) {
    i.mnemonic = Mnemonic::STRimm;
    i.rd = rt;
    i.rn = rn;
    i.imm = h2 & 0xFFF;
    return i;
  }

  return i;
}

[[noreturn]] void bad(const Instr& i, const char* why) {
  throw std::invalid_argument(fmt::format("cannot encode {}: {}", mnemonicName(i.mnemonic), why));
}

void needLow(const Instr& i, std::initializer_list<std::uint8_t> regs) {
  for (auto r : regs)
    if (r > 7) bad(i, "register out of range for 16-bit form");
}

std::uint32_t wordOffset(const Instr& i, int maxWords) {
  if (i.imm < 0 || i.imm % 4 != 0 || i.imm / 4 > maxWords) bad(i, "offset out of range");
  return static_cast<std::uint32_t>(i.imm / 4);
}

}  // namespace

bool mayDecode32(HalfWord first) {
  if ((first & 0xF800) == 0xF000) return true;
  const unsigned op = first & 0xFFF0;
  return op == 0xF850 || op == 0xF8D0 || op == 0xF8C0;
}

Instr decode(HalfWord first, std::optional<HalfWord> second) {
  if (!is32BitPrefix(first)) return decode16(first);
  if (!second) {
    Instr i;
    i.width = 32;
    i.raw = static_cast<std::uint32_t>(first) << 16;
    return i;
  }
  return decode32(first, *second);
}

std::uint32_t encode(const Instr& i) {
  using M = Mnemonic;
  if (i.mnemonic == M::Unsupported) return i.raw;

  if (i.width == 32) {
    switch (i.mnemonic) {
      case M::BL32: {
        if (i.imm % 2 != 0 || i.imm < -(1 << 24) || i.imm >= (1 << 24)) bad(i, "offset out of range");
        const auto v = static_cast<std::uint32_t>(i.imm);
        const std::uint32_t s = (v >> 24) & 1;
        const std::uint32_t i1 = (v >> 23) & 1;
        const std::uint32_t i2 = (v >> 22) & 1;
        const std::uint32_t j1 = (~(i1 ^ s)) & 1;
        const std::uint32_t j2 = (~(i2 ^ s)) & 1;
        const std::uint32_t h1 = 0xF000 | (s << 10) | ((v >> 12) & 0x3FF);
        const std::uint32_t h2 = 0xD000 | (j1 << 13) | (j2 << 11) | ((v >> 1) & 0x7FF);
        return (h1 << 16) | h2;
      }
      case M::LDRlit32: {
        if (i.rd > 15 || i.imm < -4095 || i.imm > 4095) bad(i, "offset out of range");
        const std::uint32_t h1 = i.imm >= 0 ? 0xF8DF : 0xF85F;
        const std::uint32_t off = static_cast<std::uint32_t>(i.imm >= 0 ? i.imm : -i.imm);
        return (h1 << 16) | (static_cast<std::uint32_t>(i.rd) << 12) | off;
      }
      case M::LDRimm:
      case M::STRimm: {
        if (i.rn >= 15 || i.rd > 15 || i.imm < 0 || i.imm > 4095) bad(i, "field out of range");
        if (i.mnemonic == M::STRimm && i.rd == 15) bad(i, "PC as store source");
        const std::uint32_t h1 = (i.mnemonic == M::LDRimm ? 0xF8D0u : 0xF8C0u) | i.rn;
        return (h1 << 16) | (static_cast<std::uint32_t>(i.rd) << 12) | static_cast<std::uint32_t>(i.imm);
      }
      case M::LDRregShift32: {
        if (i.rn >= 15 || i.rd > 15 || i.rm == 13 || i.rm >= 15 || i.shift > 3)
          bad(i, "field out of range");
        return ((0xF850u | i.rn) << 16) | (static_cast<std::uint32_t>(i.rd) << 12) |
               (static_cast<std::uint32_t>(i.shift) << 4) | i.rm;
      }
      default:
        bad(i, "no 32-bit form in the subset");
    }
  }

  switch (i.mnemonic) {
    case M::NOP:
      return 0xBF00;
    case M::MOVimm:
      needLow(i, {i.rd});
      if (i.imm < 0 || i.imm > 255) bad(i, "immediate out of range");
      return 0x2000u | (i.rd << 8) | static_cast<std::uint32_t>(i.imm);
    case M::MOVreg:
      if (i.rd > 15 || i.rm > 15) bad(i, "register out of range");
      return 0x4600u | ((i.rd & 8u) << 4) | (static_cast<std::uint32_t>(i.rm) << 3) | (i.rd & 7u);
    case M::ADDimm:
    case M::SUBimm: {
      needLow(i, {i.rd, i.rn});
      const bool add = i.mnemonic == M::ADDimm;
      if (i.imm >= 0 && i.imm <= 7)
        return (add ? 0x1C00u : 0x1E00u) | (static_cast<std::uint32_t>(i.imm) << 6) | (i.rn << 3) | i.rd;
      if (i.rd == i.rn && i.imm >= 0 && i.imm <= 255)
        return (add ? 0x3000u : 0x3800u) | (i.rd << 8) | static_cast<std::uint32_t>(i.imm);
      bad(i, "immediate out of range");
    }
    case M::ADDreg:
      if (i.setFlags) {
        needLow(i, {i.rd, i.rn, i.rm});
        return 0x1800u | (i.rm << 6) | (i.rn << 3) | i.rd;
      }
      if (i.rd != i.rn || i.rd > 15 || i.rm > 15 || (i.rd == 15 && i.rm == 15))
        bad(i, "invalid high-register form");
      return 0x4400u | ((i.rd & 8u) << 4) | (static_cast<std::uint32_t>(i.rm) << 3) | (i.rd & 7u);
    case M::SUBreg:
      needLow(i, {i.rd, i.rn, i.rm});
      return 0x1A00u | (i.rm << 6) | (i.rn << 3) | i.rd;
    case M::CMPimm:
      needLow(i, {i.rn});
      if (i.imm < 0 || i.imm > 255) bad(i, "immediate out of range");
      return 0x2800u | (i.rn << 8) | static_cast<std::uint32_t>(i.imm);
    case M::CMPreg:
      if (i.rn < 8 && i.rm < 8) return 0x4280u | (i.rm << 3) | i.rn;
      if (i.rn > 14 || i.rm > 14) bad(i, "register out of range");
      return 0x4500u | ((i.rn & 8u) << 4) | (static_cast<std::uint32_t>(i.rm) << 3) | (i.rn & 7u);
    case M::AND:
    case M::EOR:
    case M::ORR: {
      needLow(i, {i.rd, i.rm});
      if (i.rd != i.rn) bad(i, "destination must equal first operand");
      const std::uint32_t op = i.mnemonic == M::AND ? 0 : i.mnemonic == M::EOR ? 1 : 12;
      return 0x4000u | (op << 6) | (i.rm << 3) | i.rd;
    }
    case M::LSLimm:
      needLow(i, {i.rd, i.rm});
      if (i.shift > 31) bad(i, "shift out of range");
      return (static_cast<std::uint32_t>(i.shift) << 6) | (i.rm << 3) | i.rd;
    case M::LDRlit:
      needLow(i, {i.rd});
      return 0x4800u | (i.rd << 8) | wordOffset(i, 255);
    case M::LDRimm:
    case M::STRimm: {
      const bool load = i.mnemonic == M::LDRimm;
      if (i.rn == 13) {
        needLow(i, {i.rd});
        return (load ? 0x9800u : 0x9000u) | (i.rd << 8) | wordOffset(i, 255);
      }
      needLow(i, {i.rd, i.rn});
      return (load ? 0x6800u : 0x6000u) | (wordOffset(i, 31) << 6) | (i.rn << 3) | i.rd;
    }
    case M::LDRreg:
    case M::STRreg:
      needLow(i, {i.rd, i.rn, i.rm});
      return (i.mnemonic == M::LDRreg ? 0x5800u : 0x5000u) | (i.rm << 6) | (i.rn << 3) | i.rd;
    case M::Bcond:
      if (i.cond == Cond::AL) bad(i, "condition AL has no conditional form");
      if (i.imm % 2 != 0 || i.imm < -256 || i.imm > 254) bad(i, "offset out of range");
      return 0xD000u | (static_cast<std::uint32_t>(i.cond) << 8) |
             ((static_cast<std::uint32_t>(i.imm) >> 1) & 0xFF);
    case M::Buncond:
      if (i.imm % 2 != 0 || i.imm < -2048 || i.imm > 2046) bad(i, "offset out of range");
      return 0xE000u | ((static_cast<std::uint32_t>(i.imm) >> 1) & 0x7FF);
    case M::PUSH:
    case M::POP: {
      const bool pop = i.mnemonic == M::POP;
      const std::uint16_t extra = pop ? 0x8000 : 0x4000;
      if (i.regList == 0 || (i.regList & ~(0xFF | extra)) != 0) bad(i, "register list");
      return (pop ? 0xBC00u : 0xB400u) | ((i.regList & extra) ? 0x100u : 0u) | (i.regList & 0xFFu);
    }
    default:
      bad(i, "no 16-bit form in the subset");
  }
}

Encoding split(const Instr& i) {
  const std::uint32_t w = encode(i);
  if (i.width == 32) return {static_cast<HalfWord>(w >> 16), static_cast<HalfWord>(w & 0xFFFF)};
  return {static_cast<HalfWord>(w), std::nullopt};
}

int hammingWeight(std::uint32_t x) { return std::popcount(x); }
int hammingDistance(std::uint32_t a, std::uint32_t b) { return std::popcount(a ^ b); }

const char* mnemonicName(Mnemonic m) {
  switch (m) {
    case Mnemonic::NOP: return "NOP";
    case Mnemonic::MOVimm: return "MOVimm";
    case Mnemonic::MOVreg: return "MOVreg";
    case Mnemonic::ADDimm: return "ADDimm";
    case Mnemonic::ADDreg: return "ADDreg";
    case Mnemonic::SUBimm: return "SUBimm";
    case Mnemonic::SUBreg: return "SUBreg";
    case Mnemonic::CMPimm: return "CMPimm";
    case Mnemonic::CMPreg: return "CMPreg";
    case Mnemonic::AND: return "AND";
    case Mnemonic::ORR: return "ORR";
    case Mnemonic::EOR: return "EOR";
    case Mnemonic::LSLimm: return "LSLimm";
    case Mnemonic::LDRlit: return "LDRlit";
    case Mnemonic::LDRimm: return "LDRimm";
    case Mnemonic::LDRreg: return "LDRreg";
    case Mnemonic::LDRregShift32: return "LDRregShift32";
    case Mnemonic::LDRlit32: return "LDRlit32";
    case Mnemonic::STRimm: return "STRimm";
    case Mnemonic::STRreg: return "STRreg";
    case Mnemonic::Bcond: return "Bcond";
    case Mnemonic::Buncond: return "Buncond";
    case Mnemonic::BL32: return "BL32";
    case Mnemonic::PUSH: return "PUSH";
    case Mnemonic::POP: return "POP";
    case Mnemonic::Unsupported: return "Unsupported";
  }
  return "?";
}

const char* condName(Cond c) {
  static constexpr const char* names[] = {"eq", "ne", "cs", "cc", "mi", "pl", "vs", "vc",
                                          "hi", "ls", "ge", "lt", "gt", "le", ""};
  return names[static_cast<int>(c)];
}

namespace {

std::string reg(unsigned r) {
  switch (r) {
    case 13: return "sp";
    case 14: return "lr";
    case 15: return "pc";
    default: return fmt::format("r{}", r);
  }
}

std::string regList(std::uint16_t list) {
  std::string out = "{";
  for (unsigned r = 0; r < 16; ++r) {
    if (!(list & (1u << r))) continue;
    if (out.size() > 1) out += ", ";
    out += reg(r);
  }
  return out + "}";
}

std::string offset(std::int32_t v) {
  return v < 0 ? fmt::format("-{}", -v) : fmt::format("{}", v);
}

}  // namespace

std::string disassemble(const Instr& i) {
  using M = Mnemonic;
  const char* w = i.width == 32 ? ".w" : "";
  switch (i.mnemonic) {
    case M::NOP: return "nop";
    case M::MOVimm: return fmt::format("movs {}, #{}", reg(i.rd), i.imm);
    case M::MOVreg: return fmt::format("mov {}, {}", reg(i.rd), reg(i.rm));
    case M::ADDimm: return fmt::format("adds {}, {}, #{}", reg(i.rd), reg(i.rn), i.imm);
    case M::SUBimm: return fmt::format("subs {}, {}, #{}", reg(i.rd), reg(i.rn), i.imm);
    case M::ADDreg:
      if (!i.setFlags) return fmt::format("add {}, {}", reg(i.rd), reg(i.rm));
      return fmt::format("adds {}, {}, {}", reg(i.rd), reg(i.rn), reg(i.rm));
    case M::SUBreg: return fmt::format("subs {}, {}, {}", reg(i.rd), reg(i.rn), reg(i.rm));
    case M::CMPimm: return fmt::format("cmp {}, #{}", reg(i.rn), i.imm);
    case M::CMPreg: return fmt::format("cmp {}, {}", reg(i.rn), reg(i.rm));
    case M::AND: return fmt::format("ands {}, {}", reg(i.rd), reg(i.rm));
    case M::ORR: return fmt::format("orrs {}, {}", reg(i.rd), reg(i.rm));
    case M::EOR: return fmt::format("eors {}, {}", reg(i.rd), reg(i.rm));
    case M::LSLimm: return fmt::format("lsls {}, {}, #{}", reg(i.rd), reg(i.rm), i.shift);
    case M::LDRlit: return fmt::format("ldr {}, [pc, #{}]", reg(i.rd), i.imm);
    case M::LDRlit32: return fmt::format("ldr.w {}, [pc, #{}]", reg(i.rd), offset(i.imm));
    case M::LDRimm:
    case M::STRimm:
      return fmt::format("{}{} {}, [{}, #{}]", i.mnemonic == M::LDRimm ? "ldr" : "str", w, reg(i.rd),
                         reg(i.rn), i.imm);
    case M::LDRreg:
    case M::STRreg:
      return fmt::format("{} {}, [{}, {}]", i.mnemonic == M::LDRreg ? "ldr" : "str", reg(i.rd),
                         reg(i.rn), reg(i.rm));
    case M::LDRregShift32:
      return fmt::format("ldr.w {}, [{}, {}, lsl #{}]", reg(i.rd), reg(i.rn), reg(i.rm), i.shift);
    case M::Bcond: return fmt::format("b{} #{}", condName(i.cond), offset(i.imm));
    case M::Buncond: return fmt::format("b #{}", offset(i.imm));
    case M::BL32: return fmt::format("bl #{}", offset(i.imm));
    case M::PUSH: return "push " + regList(i.regList);
    case M::POP: return "pop " + regList(i.regList);
    case M::Unsupported:
      if (i.width == 32) return fmt::format("<unsupported {:04x} {:04x}>", i.raw >> 16, i.raw & 0xFFFF);
      return fmt::format("<unsupported {:04x}>", i.raw);
  }
  return "?";
}

bool isBranch(const Instr& i) {
  switch (i.mnemonic) {
    case Mnemonic::Bcond:
    case Mnemonic::Buncond:
    case Mnemonic::BL32:
      return true;
    case Mnemonic::POP:
      return (i.regList & 0x8000) != 0;
    case Mnemonic::MOVreg:
    case Mnemonic::ADDreg:
      return !i.setFlags && i.rd == 15;
    case Mnemonic::LDRimm:
    case Mnemonic::LDRreg:
    case Mnemonic::LDRregShift32:
    case Mnemonic::LDRlit32:
      return i.rd == 15;
    default:
      return false;
  }
}

bool isLoad(const Instr& i) {
  switch (i.mnemonic) {
    case Mnemonic::LDRlit:
    case Mnemonic::LDRimm:
    case Mnemonic::LDRreg:
    case Mnemonic::LDRregShift32:
    case Mnemonic::LDRlit32:
    case Mnemonic::POP:
      return true;
    default:
      return false;
  }
}

bool isStore(const Instr& i) {
  return i.mnemonic == Mnemonic::STRimm || i.mnemonic == Mnemonic::STRreg || i.mnemonic == Mnemonic::PUSH;
}

}  // namespace emfi::isa
