#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emfi/core.hpp"

namespace emfi::dump {

// The harvested view of an ArchState: registers, xPSR, cycle count and the
// watched memory words. Field order is fixed: r0..r15, N, Z, C, V,
// exceptionNumber, cycles, then watched addresses ascending.
struct StateDump {
  std::array<std::uint32_t, 16> r{};
  core::Xpsr xpsr;
  std::uint64_t cycles = 0;
  std::map<std::uint32_t, std::uint32_t> watched;

  friend bool operator==(const StateDump&, const StateDump&) = default;
};

// Unmapped watched addresses read as 0.
StateDump harvest(const core::ArchState& s, const std::vector<std::uint32_t>& watched);

// Overlays a dump on `base` (normally the program's initial state): registers,
// flags, cycles and the watched words that are mapped.
core::ArchState restore(const StateDump& d, core::ArchState base);

std::vector<std::string> csvHeader(const StateDump& d);
std::vector<std::string> csvFields(const StateDump& d);
std::string toCsv(const StateDump& d);  // header line + one row

std::string toJson(const StateDump& d, int indent = 2);

// Accept what toCsv / toJson emit. Throw std::invalid_argument on malformed input.
StateDump fromCsv(const std::string& text);
StateDump fromJson(const std::string& text);
// Chooses by the first non-space character.
StateDump parse(const std::string& text);

std::string hex32(std::uint32_t v);

}  // namespace emfi::dump
