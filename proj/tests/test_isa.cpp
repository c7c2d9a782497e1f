#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "emfi/isa.hpp"
#include "support.hpp"

using namespace emfi;
using isa::Mnemonic;

namespace {

// Capstone spellings each subset mnemonic may print as.
const std::map<Mnemonic, std::set<std::string>>& capstoneNames() {
  static const std::map<Mnemonic, std::set<std::string>> m = {
      {Mnemonic::NOP, {"nop"}},
      {Mnemonic::MOVimm, {"movs"}},
      {Mnemonic::MOVreg, {"mov"}},
      {Mnemonic::ADDimm, {"adds"}},
      {Mnemonic::ADDreg, {"adds", "add"}},
      {Mnemonic::SUBimm, {"subs"}},
      {Mnemonic::SUBreg, {"subs"}},
      {Mnemonic::CMPimm, {"cmp"}},
      {Mnemonic::CMPreg, {"cmp"}},
      {Mnemonic::AND, {"ands"}},
      {Mnemonic::ORR, {"orrs"}},
      {Mnemonic::EOR, {"eors"}},
      {Mnemonic::LSLimm, {"lsls", "movs"}},
      {Mnemonic::LDRlit, {"ldr"}},
      {Mnemonic::LDRimm, {"ldr", "ldr.w"}},
      {Mnemonic::LDRreg, {"ldr"}},
      {Mnemonic::LDRregShift32, {"ldr.w"}},
      {Mnemonic::LDRlit32, {"ldr.w", "ldr"}},
      {Mnemonic::STRimm, {"str", "str.w"}},
      {Mnemonic::STRreg, {"str"}},
      {Mnemonic::Bcond,
       {"beq", "bne", "bhs", "blo", "bmi", "bpl", "bvs", "bvc", "bhi", "bls", "bge", "blt", "bgt", "ble"}},
      {Mnemonic::Buncond, {"b"}},
      {Mnemonic::BL32, {"bl"}},
      {Mnemonic::PUSH, {"push"}},
      {Mnemonic::POP, {"pop"}},
  };
  return m;
}

// Capstone families whose every 16-bit encoding lies inside the subset.
const std::set<std::string> kFullyCovered16 = {"nop",  "movs", "mov",  "adds", "subs", "ands", "orrs", "eors",
                                               "ldr",  "str",  "push", "pop",  "b",    "beq",  "bne",  "bhs",
                                               "blo",  "bmi",  "bpl",  "bvs",  "bvc",  "bhi",  "bls",  "bge",
                                               "blt",  "bgt",  "ble"};

struct CapstoneLine {
  std::uint32_t enc;
  std::string mnemonic;
};

std::vector<CapstoneLine> readCapstone(const std::string& name) {
  std::istringstream in(test::readData(name));
  std::vector<CapstoneLine> out;
  std::string hex, m;
  while (in >> hex >> m) out.push_back({static_cast<std::uint32_t>(std::stoul(hex, nullptr, 16)), m});
  return out;
}

isa::Instr decodeRaw(std::uint32_t raw, int width) {
  if (width == 16) return isa::decode(static_cast<isa::HalfWord>(raw));
  return isa::decode(static_cast<isa::HalfWord>(raw >> 16), static_cast<isa::HalfWord>(raw));
}

}  // namespace

TEST_CASE("fault-site encodings", "[isa]") {
  CHECK(isa::hammingWeight(0xBF00) == 7);
  CHECK(isa::hammingWeight(0x6000) == 2);
  CHECK(isa::hammingDistance(0xBF00, 0x6000) == 7);

  const isa::Instr nop = isa::decode(0xBF00);
  CHECK(nop.mnemonic == Mnemonic::NOP);
  CHECK(isa::encode(nop) == 0xBF00);

  const isa::Instr str = isa::decode(0x6000);
  CHECK(str.mnemonic == Mnemonic::STRimm);
  CHECK(str.rd == 0);
  CHECK(str.rn == 0);
  CHECK(str.imm == 0);
  CHECK(isa::encode(str) == 0x6000);
  CHECK(isa::disassemble(str) == "str r0, [r0, #0]");
}

TEST_CASE("decode is total and width follows the prefix", "[isa]") {
  for (std::uint32_t h = 0; h <= 0xFFFF; ++h) {
    const auto hw = static_cast<isa::HalfWord>(h);
    if (isa::is32BitPrefix(hw)) {
      const isa::Instr i = isa::decode(hw, 0x0000);
      REQUIRE(i.width == 32);
    } else {
      const isa::Instr i = isa::decode(hw);
      REQUIRE(i.width == 16);
      if (i.mnemonic == Mnemonic::Unsupported) REQUIRE(i.raw == h);
    }
  }
}

TEST_CASE("decode-encode round trip over every 16-bit subset encoding", "[isa]") {
  int supported = 0;
  for (std::uint32_t h = 0; h <= 0xFFFF; ++h) {
    const auto hw = static_cast<isa::HalfWord>(h);
    if (isa::is32BitPrefix(hw)) continue;
    const isa::Instr i = isa::decode(hw);
    if (i.mnemonic == Mnemonic::Unsupported) continue;
    ++supported;
    const std::uint32_t canon = isa::encode(i);
    INFO(std::hex << h << " -> " << canon);
    REQUIRE(isa::decode(static_cast<isa::HalfWord>(canon)) == i);
    REQUIRE(isa::encode(isa::decode(static_cast<isa::HalfWord>(canon))) == canon);
  }
  CHECK(supported > 30000);
}

TEST_CASE("decode-encode round trip over generated 32-bit operands", "[isa]") {
  std::mt19937_64 rng(32);
  int checked = 0;
  for (std::uint32_t h1 = 0xE800; h1 <= 0xFFFF; ++h1) {
    if (!isa::mayDecode32(static_cast<isa::HalfWord>(h1))) continue;
    for (int k = 0; k < 64; ++k) {
      const auto h2 = static_cast<isa::HalfWord>(rng());
      const isa::Instr i = isa::decode(static_cast<isa::HalfWord>(h1), h2);
      if (i.mnemonic == Mnemonic::Unsupported) continue;
      ++checked;
      const std::uint32_t canon = isa::encode(i);
      INFO(std::hex << h1 << ' ' << h2);
      REQUIRE(decodeRaw(canon, 32) == i);
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("hand-built instructions survive encode then decode", "[isa]") {
  std::mt19937 rng(7);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int n = 0; n < 2000; ++n) {
    isa::Instr i;
    switch (pick(0, 7)) {
      case 0:
        i.mnemonic = Mnemonic::MOVimm, i.rd = static_cast<std::uint8_t>(pick(0, 7)), i.imm = pick(0, 255);
        i.setFlags = true;
        break;
      case 1:
        i.mnemonic = Mnemonic::ADDimm, i.rd = static_cast<std::uint8_t>(pick(0, 7));
        i.rn = i.rd, i.imm = pick(0, 255), i.setFlags = true;
        break;
      case 2:
        i.mnemonic = Mnemonic::LDRimm, i.rd = static_cast<std::uint8_t>(pick(0, 7));
        i.rn = static_cast<std::uint8_t>(pick(0, 7)), i.imm = 4 * pick(0, 31);
        break;
      case 3:
        i.mnemonic = Mnemonic::STRimm, i.rd = static_cast<std::uint8_t>(pick(0, 7));
        i.rn = static_cast<std::uint8_t>(pick(0, 7)), i.imm = 4 * pick(0, 31);
        break;
      case 4:
        i.mnemonic = Mnemonic::Bcond, i.cond = static_cast<isa::Cond>(pick(0, 13)), i.imm = 2 * pick(-128, 127);
        break;
      case 5:
        i.mnemonic = Mnemonic::BL32, i.width = 32, i.imm = 2 * pick(-(1 << 23), (1 << 23) - 1);
        break;
      case 6:
        i.mnemonic = Mnemonic::LDRregShift32, i.width = 32, i.rd = static_cast<std::uint8_t>(pick(0, 14));
        i.rn = static_cast<std::uint8_t>(pick(0, 14)), i.rm = static_cast<std::uint8_t>(pick(0, 12));
        i.shift = static_cast<std::uint8_t>(pick(0, 3));
        break;
      default:
        i.mnemonic = Mnemonic::PUSH, i.regList = static_cast<std::uint16_t>(pick(1, 0xFF) | (pick(0, 1) << 14));
        break;
    }
    const std::uint32_t enc = isa::encode(i);
    INFO(isa::disassemble(i));
    REQUIRE(decodeRaw(enc, i.width) == i);
  }
}

TEST_CASE("mayDecode32 never hides a decodable encoding", "[isa]") {
  for (std::uint32_t h1 = 0xE800; h1 <= 0xFFFF; ++h1) {
    const auto first = static_cast<isa::HalfWord>(h1);
    if (isa::mayDecode32(first)) continue;
    for (std::uint32_t h2 = 0; h2 <= 0xFFFF; ++h2) {
      if (isa::decode(first, static_cast<isa::HalfWord>(h2)).mnemonic != Mnemonic::Unsupported) {
        FAIL("decodable " << std::hex << h1 << ' ' << h2);
      }
    }
  }
  SUCCEED();
}

TEST_CASE("16-bit decoder agrees with capstone", "[isa][reference]") {
  const auto lines = readCapstone("capstone16.txt");
  REQUIRE(lines.size() == 65536 - 6144);
  for (const auto& [enc, name] : lines) {
    const isa::Instr i = isa::decode(static_cast<isa::HalfWord>(enc));
    INFO(std::hex << enc << " capstone: " << name << " ours: " << isa::disassemble(i));
    if (name == "-") REQUIRE(i.mnemonic == Mnemonic::Unsupported);
    if (i.mnemonic != Mnemonic::Unsupported) REQUIRE(capstoneNames().at(i.mnemonic).contains(name));
    if (kFullyCovered16.contains(name)) REQUIRE(i.mnemonic != Mnemonic::Unsupported);
    if (i.mnemonic == Mnemonic::Bcond) {
      const bool same = name == std::string("b") + isa::condName(i.cond) ||
                        (i.cond == isa::Cond::CS && name == "bhs") || (i.cond == isa::Cond::CC && name == "blo");
      REQUIRE(same);
    }
  }
}

TEST_CASE("32-bit decoder agrees with capstone", "[isa][reference]") {
  const auto lines = readCapstone("capstone32.txt");
  REQUIRE(lines.size() > 20000);
  int ours = 0;
  for (const auto& [enc, name] : lines) {
    const isa::Instr i = decodeRaw(enc, 32);
    INFO(std::hex << enc << " capstone: " << name << " ours: " << isa::disassemble(i));
    if (name == "-") REQUIRE(i.mnemonic == Mnemonic::Unsupported);
    if (name == "bl") REQUIRE(i.mnemonic == Mnemonic::BL32);
    if (i.mnemonic != Mnemonic::Unsupported) {
      ++ours;
      REQUIRE(capstoneNames().at(i.mnemonic).contains(name));
    }
  }
  CHECK(ours > 5000);
}

TEST_CASE("hamming distance is a metric", "[isa]") {
  std::mt19937 rng(3);
  for (int n = 0; n < 20000; ++n) {
    const std::uint32_t a = rng(), b = rng(), c = rng();
    REQUIRE(isa::hammingDistance(a, a) == 0);
    REQUIRE(isa::hammingDistance(a, b) == isa::hammingDistance(b, a));
    REQUIRE(isa::hammingDistance(a, c) <= isa::hammingDistance(a, b) + isa::hammingDistance(b, c));
    if (a != b) REQUIRE(isa::hammingDistance(a, b) > 0);
  }
  CHECK(isa::hammingDistance(0x12345678, 0xFFFFFFFF) == 19);
}

TEST_CASE("encode rejects fields outside the subset", "[isa]") {
  isa::Instr i;
  i.mnemonic = Mnemonic::MOVimm;
  i.rd = 1;
  i.imm = 256;
  i.setFlags = true;
  CHECK_THROWS_AS(isa::encode(i), std::invalid_argument);
  i.mnemonic = Mnemonic::LDRimm;
  i.imm = 3;
  CHECK_THROWS_AS(isa::encode(i), std::invalid_argument);
  // Unsupported encodes to whatever raw bits it was decoded from.
  CHECK(isa::encode(isa::decode(0xDE00)) == 0xDE00);
}
