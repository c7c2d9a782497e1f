#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emfi/bus.hpp"
#include "emfi/core.hpp"
#include "emfi/isa.hpp"
#include "emfi/programs.hpp"

namespace emfi::oracle {

// Which parts of the harvested state must match. The default is r0-r12 and
// xPSR; the flags widen it.
struct CompareOptions {
  bool memory = false;  // the program's watched words
  bool pc = false;      // r15
  bool cycles = false;  // cycle-count filter
};

bool sameOutput(const core::ArchState& a, const core::ArchState& b, const std::vector<std::uint32_t>& watched,
                const CompareOptions& cmp = {});

struct SearchOptions {
  CompareOptions compare;
  std::uint64_t cycleBudget = 0;  // absolute; 0 picks 4x the golden run
  bus::TimingConfig timing;
  unsigned workers = 0;  // 0 = hardware concurrency
};

// Golden state just before the first execution of targetAddr. Throws
// std::invalid_argument when the golden run never gets there.
core::ArchState preState(const programs::Program& p, std::uint32_t targetAddr, const bus::TimingConfig& timing = {});
// Golden state after `executed` instructions.
core::ArchState preStateAt(const programs::Program& p, std::uint64_t executed, const bus::TimingConfig& timing = {});

// Executes `candidate` in place of whatever the first fetch at targetAddr
// delivers, then runs on to the watchpoint.
core::RunResult simulateReplacement(const isa::Instr& candidate, const core::ArchState& pre, std::uint32_t targetAddr,
                                    const programs::Program& program, const SearchOptions& o = {});

bool canExplain(const isa::Instr& candidate, const core::ArchState& pre, const core::ArchState& observed,
                std::uint32_t targetAddr, const programs::Program& program, const SearchOptions& o = {});

// One explaining encoding. Encodings that provably end in the same state
// (the same trap raised by the replacement itself) are simulated once and
// reported through their lowest encoding with classSize > 1.
struct Candidate {
  isa::Instr instr;
  std::uint64_t classSize = 1;
};

struct Explanation {
  std::vector<Candidate> candidates;  // ascending raw encoding, unique
  std::uint64_t searched16 = 0;
  std::uint64_t searched32 = 0;   // encodings covered, simulated or by class
  std::uint64_t simulated32 = 0;  // 32-bit simulations actually run
};

enum class WidthPolicy : std::uint8_t { Only16, Only32, Both };

// 16-bit: every first halfword; a 32-bit prefix pairs with the halfword that
// follows targetAddr in memory. 32-bit: every prefix halfword with every
// second halfword. Two-instruction readings of one word are not searched.
Explanation explainExhaustive(const core::ArchState& pre, const core::ArchState& observed, std::uint32_t targetAddr,
                              const programs::Program& program, WidthPolicy policy = WidthPolicy::Both,
                              const SearchOptions& o = {});

enum class OutcomeKind : std::uint8_t { NoFault, ExceptionFault, ProgramFlowFault, DataFlowFault, Crash };

const char* outcomeKindName(OutcomeKind k);

struct Outcome {
  OutcomeKind kind = OutcomeKind::NoFault;
  core::ExceptionKind exception = core::ExceptionKind::None;
  Explanation explanation;
};

Outcome classify(const core::ArchState& golden, const core::ArchState& observed, const Explanation& explanation,
                 core::Termination termination, const std::vector<std::uint32_t>& watched,
                 const CompareOptions& cmp = {});

// Explanation JSON, as printed by `emfi explain`.
std::string reportJson(const Explanation& e, const Outcome& o);

}  // namespace emfi::oracle
