#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace emfi::isa {

using HalfWord = std::uint16_t;

enum class Mnemonic : std::uint8_t {
  NOP,
  MOVimm,
  MOVreg,
  ADDimm,
  ADDreg,
  SUBimm,
  SUBreg,
  CMPimm,
  CMPreg,
  AND,
  ORR,
  EOR,
  LSLimm,
  LDRlit,
  LDRimm,
  LDRreg,
  LDRregShift32,
  LDRlit32,
  STRimm,
  STRreg,
  Bcond,
  Buncond,
  BL32,
  PUSH,
  POP,
  Unsupported,
};

enum class Cond : std::uint8_t { EQ, NE, CS, CC, MI, PL, VS, VC, HI, LS, GE, LT, GT, LE, AL };

// Field usage per mnemonic:
//   rd      destination, or Rt for loads/stores, Rdn for two-operand ALU forms
//   rn      first source / base register (13 for SP-relative forms)
//   rm      second source / index register
//   imm     immediate, byte offset, or signed branch offset relative to PC+4
//   shift   LSL amount (LSLimm, LDRregShift32)
//   regList bit i set for register i (PUSH may hold LR, POP may hold PC)
//   raw     16-bit: the halfword; 32-bit: (first << 16) | second
struct Instr {
  Mnemonic mnemonic = Mnemonic::Unsupported;
  std::uint8_t rd = 0;
  std::uint8_t rn = 0;
  std::uint8_t rm = 0;
  std::int32_t imm = 0;
  std::uint8_t shift = 0;
  Cond cond = Cond::AL;
  std::uint16_t regList = 0;
  bool setFlags = false;
  std::uint8_t width = 16;
  std::uint32_t raw = 0;

  // raw only participates for Unsupported, where it is the sole content.
  friend bool operator==(const Instr& a, const Instr& b);
};

constexpr bool is32BitPrefix(HalfWord h) { return (h >> 11) >= 0b11101; }

// Coprocessor encoding space; executing it traps as NoCoprocessor.
constexpr bool isCoprocessorSpace(HalfWord first) { return (first & 0xEC00) == 0xEC00; }

Instr decode(HalfWord first, std::optional<HalfWord> second = std::nullopt);

// False when every second halfword decodes to Unsupported after `first`.
bool mayDecode32(HalfWord first);

// Canonical encoding. Throws std::invalid_argument for field combinations
// that have no encoding in the subset.
std::uint32_t encode(const Instr& i);

// The halfwords of an encoded instruction in fetch order.
struct Encoding {
  HalfWord first;
  std::optional<HalfWord> second;
};
Encoding split(const Instr& i);

int hammingWeight(std::uint32_t x);
int hammingDistance(std::uint32_t a, std::uint32_t b);

const char* mnemonicName(Mnemonic m);
const char* condName(Cond c);
std::string disassemble(const Instr& i);

bool isBranch(const Instr& i);
bool isLoad(const Instr& i);
bool isStore(const Instr& i);

}  // namespace emfi::isa
