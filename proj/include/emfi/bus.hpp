#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emfi/isa.hpp"
#include "emfi/memory.hpp"

namespace emfi::bus {

enum class Bus : std::uint8_t { InstructionBus, DataBus };

const char* busName(Bus b);

struct ClockConfig {
  double frequencyHz = 56e6;
  double periodNs() const { return 1e9 / frequencyHz; }
};

struct TimingConfig {
  ClockConfig clock;
  // Fitted so the array-sum program lands near its measured 3.5 us run time.
  unsigned flashWaitStates = 4;
  unsigned sramWaitStates = 0;
  // Fetch words the prefetcher may run ahead of the oldest unconsumed word.
  unsigned prefetchDepth = 2;
  double setupWindowNs = 3.0;
};

struct TransferEvent {
  Bus bus = Bus::InstructionBus;
  std::uint32_t addr = 0;
  std::uint32_t word = 0;  // as driven, before any capture fault
  bool write = false;
  RegionKind sourceKind = RegionKind::Flash;
  std::uint32_t consumerPC = 0;
  std::uint64_t addressCycle = 0;
  std::uint64_t dataCycle = 0;      // first data cycle
  std::uint64_t lastDataCycle = 0;  // == dataCycle without wait states
  double latchTimeNs = 0;
};

// Sees every transfer as it is issued and returns the value the receiving
// side latches. The default is the driven word.
class TransferObserver {
 public:
  virtual ~TransferObserver() = default;
  virtual std::uint32_t onTransfer(const TransferEvent& e) = 0;
};

double latchTimeNs(RegionKind kind, std::uint64_t dataCycle, std::uint64_t lastDataCycle, double periodNs);

bool latchVulnerable(const TransferEvent& e, std::span<const double> glitchEventTimesNs, double setupWindowNs);

// Cycle-level model of one execution: a sequential prefetch stream on the
// instruction bus, pipelined address/data phases, and a data bus shared by
// loads and stores. Used live by the core and for offline replay.
class Timeline {
 public:
  struct Fetch {
    isa::HalfWord first = 0;
    std::optional<isa::HalfWord> second;
    bool busError = false;
  };

  Timeline(const TimingConfig& cfg, const MemoryImage& mem, std::uint32_t pc, std::uint64_t startCycle,
           TransferObserver* observer = nullptr, std::vector<TransferEvent>* log = nullptr);

  // Halfwords of the instruction at pc as latched on the instruction bus.
  Fetch fetch(std::uint32_t pc);

  // Start executing the instruction last fetched. Returns its start cycle.
  std::uint64_t begin();

  // Data phases of the current instruction, in program order.
  std::uint32_t load(std::uint32_t addr, std::uint32_t value);
  void store(std::uint32_t addr, std::uint32_t value);

  // Retire the current instruction; a redirect flushes the prefetch stream.
  std::uint64_t end(std::optional<std::uint32_t> redirect);

  std::uint64_t cycle() const { return cycle_; }

 private:
  struct Word {
    std::uint32_t value = 0;
    bool busError = false;
    std::uint64_t available = 0;
    std::uint64_t consumed = UINT64_MAX;
  };

  const Word& word(std::uint32_t wordAddr, std::uint32_t consumerPc);
  unsigned waitStates(RegionKind k) const;
  std::uint32_t transfer(Bus bus, std::uint32_t addr, std::uint32_t value, bool write, std::uint32_t consumerPc,
                         std::uint64_t earliest, std::uint64_t& busFree, std::uint64_t& complete);

  TimingConfig cfg_;
  const MemoryImage& mem_;
  TransferObserver* observer_;
  std::vector<TransferEvent>* log_;

  std::uint64_t cycle_;
  std::uint64_t iBusFree_;
  std::uint64_t dBusFree_;

  std::uint32_t streamBase_ = 0;
  std::uint64_t streamStart_ = 0;
  std::vector<Word> stream_;

  std::uint32_t curPc_ = 0;
  std::uint32_t curFirstWord_ = 0;
  std::uint32_t curLastWord_ = 0;
  std::uint64_t curStart_ = 0;
  std::uint64_t curEnd_ = 0;
};

struct DataAccess {
  std::uint32_t addr = 0;
  std::uint32_t value = 0;
  bool write = false;
};

struct TraceStep {
  std::uint32_t pc = 0;
  isa::Instr instr;
  std::vector<DataAccess> accesses;
  std::optional<std::uint32_t> redirect;
  std::uint64_t startCycle = 0;
  std::uint64_t endCycle = 0;
};

// Replays a golden trace through the timing model. Events are sorted by
// latch time.
std::vector<TransferEvent> scheduleTransfers(const MemoryImage& program, std::span<const TraceStep> trace,
                                             const TimingConfig& cfg, std::uint64_t startCycle = 0);

std::string chronogramText(std::span<const TransferEvent> events, double periodNs);
std::string chronogramJson(std::span<const TransferEvent> events, double periodNs);

}  // namespace emfi::bus
