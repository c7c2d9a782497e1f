#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emfi/core.hpp"

namespace emfi::programs {

// Register file every experiment starts from, unless a program overrides it.
inline constexpr std::uint32_t kResultAddr = kSramBase + 0x100;
inline constexpr std::uint32_t kSramSize = 0x400;
inline constexpr std::uint32_t kFlashSize = 0x1'0000;

struct Program {
  std::string name;
  std::string source;
  core::ArchState initial;
  std::uint32_t entry = 0;
  std::uint32_t watchpoint = 0;
  std::vector<std::uint32_t> watched;  // ascending
  std::map<std::string, std::uint32_t> symbols;
  std::map<std::uint32_t, int> sourceLines;  // instruction address -> line
  // The observed value experiments report on: a register or a memory word.
  std::optional<int> resultRegister;
  std::optional<std::uint32_t> resultAddress;
};

const std::vector<std::string>& builtinIds();
std::string_view builtinSource(std::string_view id);

// Throws std::invalid_argument for an unknown id.
Program builtin(std::string_view id);

// Assembles at the Flash base; throws assembler::AssemblyError.
Program fromSource(std::string name, std::string_view source);

// A built-in id, or a path to an assembly file.
Program load(std::string_view idOrPath);

}  // namespace emfi::programs
