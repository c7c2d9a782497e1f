#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emfi::assembler {

class AssemblyError : public std::runtime_error {
 public:
  AssemblyError(int line, const std::string& msg);
  int line() const { return line_; }

 private:
  int line_;
};

// Harness directives carried alongside the code: they describe the initial
// state and the harvest point, not memory contents.
struct Directives {
  std::map<int, std::uint32_t> registers;  // .reg rN, value
  std::vector<std::pair<std::uint32_t, std::uint32_t>> data;  // .data addr, value
  std::vector<std::uint32_t> watched;  // .watch addr
  std::string entry;  // .entry label
  std::string watchpoint;  // .watchpoint label
  std::string result;  // .result rN | address
};

struct Assembly {
  std::uint32_t base = 0;
  std::vector<std::uint8_t> bytes;
  std::map<std::string, std::uint32_t> symbols;
  Directives directives;
  // Address and source line of every emitted instruction.
  std::vector<std::pair<std::uint32_t, int>> lines;
};

// One statement per line: `label:`, an instruction, or a directive
// (.word, .org, .align, .reg, .data, .watch, .entry, .watchpoint, .result).
// Comments start with `;`, `@` or `//`.
Assembly assemble(std::string_view source, std::uint32_t base);

}  // namespace emfi::assembler
