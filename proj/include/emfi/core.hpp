#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emfi/bus.hpp"
#include "emfi/isa.hpp"
#include "emfi/memory.hpp"

namespace emfi::core {

enum class ExceptionKind : std::uint8_t {
  None,
  HardFault,
  MemManageFault,
  BusFault,
  UsageUndefinedInstruction,
  UsageNoCoprocessor,
  UsageUnaligned,
  UsageInvalidState,
};

int exceptionNumber(ExceptionKind k);
ExceptionKind exceptionFromNumber(int n);
const char* exceptionName(ExceptionKind k);

// Handler self-loops live at the top of Flash, one halfword slot per kind.
std::uint32_t handlerAddress(ExceptionKind k);
void installHandlers(MemoryImage& mem);

struct Xpsr {
  bool n = false;
  bool z = false;
  bool c = false;
  bool v = false;
  int exceptionNumber = 0;

  friend bool operator==(const Xpsr&, const Xpsr&) = default;
};

struct ArchState {
  std::array<std::uint32_t, 16> r{};
  Xpsr xpsr;
  MemoryImage mem;
  std::uint64_t cycles = 0;

  std::uint32_t pc() const { return r[15]; }
  ExceptionKind exception() const { return exceptionFromNumber(xpsr.exceptionNumber); }
};

enum class Termination : std::uint8_t { WatchpointHit, CycleBudgetExceeded };

const char* terminationName(Termination t);

// Replaces what the first fetch at addr delivers (the oracle's substitution).
// A 16-bit first halfword with a 32-bit prefix pairs with the next halfword
// actually fetched.
struct Substitution {
  std::uint32_t addr = 0;
  isa::HalfWord first = 0;
  std::optional<isa::HalfWord> second;
};

struct RunOptions {
  std::uint64_t cycleBudget = 10'000;
  bus::TimingConfig timing;
  bus::TransferObserver* observer = nullptr;
  std::vector<bus::TransferEvent>* events = nullptr;
  std::vector<bus::TraceStep>* trace = nullptr;
  std::optional<Substitution> substitution;
  std::uint64_t maxInstructions = UINT64_MAX;
};

struct RunResult {
  ArchState state;
  Termination termination = Termination::WatchpointHit;
  std::uint64_t instructions = 0;
};

RunResult runToWatchpoint(ArchState s, std::uint32_t watchpointAddr, const RunOptions& opt);
std::pair<ArchState, Termination> runToWatchpoint(ArchState s, const MemoryImage& program,
                                                  std::uint32_t watchpointAddr, std::uint64_t cycleBudget);

// Executes one already-fetched instruction at s.pc() with a fresh timeline.
ArchState step(ArchState s, const isa::Instr& fetched, const bus::TimingConfig& timing = {});

bool conditionPassed(isa::Cond c, const Xpsr& f);

}  // namespace emfi::core
