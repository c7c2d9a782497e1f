#include "emfi/bus.hpp"

#include <algorithm>

#include <fmt/format.h>
#include "json.hpp"

namespace emfi::bus {

const char* busName(Bus b) { return b == Bus::InstructionBus ? "InstructionBus" : "DataBus"; }

double latchTimeNs(RegionKind kind, std::uint64_t dataCycle, std::uint64_t lastDataCycle, double periodNs) {
  // Flash data settles late and is sampled at the end of the data phase;
  // SRAM data is captured as the data phase opens.
  if (kind == RegionKind::Flash) return static_cast<double>(lastDataCycle + 1) * periodNs;
  return static_cast<double>(dataCycle) * periodNs;
}

bool latchVulnerable(const TransferEvent& e, std::span<const double> glitchEventTimesNs, double setupWindowNs) {
  if (e.sourceKind != RegionKind::Flash || e.write) return false;
  for (double t : glitchEventTimesNs)
    if (t > e.latchTimeNs - setupWindowNs && t <= e.latchTimeNs) return true;
  return false;
}

Timeline::Timeline(const TimingConfig& cfg, const MemoryImage& mem, std::uint32_t pc, std::uint64_t startCycle,
                   TransferObserver* observer, std::vector<TransferEvent>* log)
    : cfg_(cfg),
      mem_(mem),
      observer_(observer),
      log_(log),
      cycle_(startCycle),
      iBusFree_(startCycle),
      dBusFree_(startCycle),
      streamBase_(pc & ~3u),
      streamStart_(startCycle) {}

unsigned Timeline::waitStates(RegionKind k) const {
  return k == RegionKind::Flash ? cfg_.flashWaitStates : cfg_.sramWaitStates;
}

std::uint32_t Timeline::transfer(Bus bus, std::uint32_t addr, std::uint32_t value, bool write,
                                 std::uint32_t consumerPc, std::uint64_t earliest, std::uint64_t& busFree,
                                 std::uint64_t& complete) {
  const RegionKind kind = *mem_.kindOf(addr);
  const unsigned ws = waitStates(kind);
  TransferEvent e;
  e.bus = bus;
  e.addr = addr;
  e.word = value;
  e.write = write;
  e.sourceKind = kind;
  e.consumerPC = consumerPc;
  e.addressCycle = std::max(earliest, busFree);
  e.dataCycle = e.addressCycle + 1;
  e.lastDataCycle = e.dataCycle + ws;
  e.latchTimeNs = latchTimeNs(kind, e.dataCycle, e.lastDataCycle, cfg_.clock.periodNs());
  busFree = e.lastDataCycle;
  complete = e.lastDataCycle + 1;
  const std::uint32_t latched = (observer_ && !write) ? observer_->onTransfer(e) : value;
  if (log_) log_->push_back(e);
  return latched;
}

const Timeline::Word& Timeline::word(std::uint32_t wordAddr, std::uint32_t consumerPc) {
  if (wordAddr < streamBase_ || (wordAddr - streamBase_) / 4 > stream_.size()) {
    streamBase_ = wordAddr;
    streamStart_ = cycle_;
    stream_.clear();
  }
  const std::size_t k = (wordAddr - streamBase_) / 4;
  while (stream_.size() <= k) {
    const std::size_t j = stream_.size();
    const std::uint32_t addr = streamBase_ + static_cast<std::uint32_t>(4 * j);
    std::uint64_t earliest = streamStart_;
    if (j >= cfg_.prefetchDepth) {
      const std::uint64_t c = stream_[j - cfg_.prefetchDepth].consumed;
      earliest = std::max(earliest, c == UINT64_MAX ? cycle_ : c);
    }
    Word w;
    if (!mem_.mapped(addr, 4)) {
      w.busError = true;
      w.available = std::max(earliest, iBusFree_) + 2;
    } else {
      std::uint64_t complete = 0;
      w.value = transfer(Bus::InstructionBus, addr, mem_.read32(addr), false, consumerPc, earliest, iBusFree_, complete);
      w.available = complete;
    }
    stream_.push_back(w);
  }
  return stream_[k];
}

Timeline::Fetch Timeline::fetch(std::uint32_t pc) {
  Fetch f;
  const std::uint32_t wa = pc & ~3u;
  const Word w0 = word(wa, pc);
  curPc_ = pc;
  curFirstWord_ = curLastWord_ = wa;
  f.first = static_cast<isa::HalfWord>((pc & 2) ? w0.value >> 16 : w0.value);
  f.busError = w0.busError;
  if (f.busError || !isa::is32BitPrefix(f.first)) return f;
  if (pc & 2) {
    const Word w1 = word(wa + 4, pc);
    curLastWord_ = wa + 4;
    f.busError = w1.busError;
    f.second = static_cast<isa::HalfWord>(w1.value);
  } else {
    f.second = static_cast<isa::HalfWord>(w0.value >> 16);
  }
  return f;
}

std::uint64_t Timeline::begin() {
  std::uint64_t start = cycle_;
  for (std::uint32_t a = curFirstWord_; a <= curLastWord_; a += 4) {
    if (a < streamBase_) continue;
    const std::size_t k = (a - streamBase_) / 4;
    if (k >= stream_.size()) continue;
    start = std::max(start, stream_[k].available);
  }
  for (std::uint32_t a = curFirstWord_; a <= curLastWord_; a += 4) {
    if (a < streamBase_) continue;
    const std::size_t k = (a - streamBase_) / 4;
    if (k < stream_.size() && stream_[k].consumed == UINT64_MAX) stream_[k].consumed = start;
  }
  curStart_ = start;
  curEnd_ = start + 1;
  return start;
}

std::uint32_t Timeline::load(std::uint32_t addr, std::uint32_t value) {
  std::uint64_t complete = 0;
  const std::uint32_t v = transfer(Bus::DataBus, addr, value, false, curPc_, curStart_, dBusFree_, complete);
  curEnd_ = std::max(curEnd_, complete);
  return v;
}

void Timeline::store(std::uint32_t addr, std::uint32_t value) {
  std::uint64_t complete = 0;
  transfer(Bus::DataBus, addr, value, true, curPc_, curStart_, dBusFree_, complete);
  curEnd_ = std::max(curEnd_, complete);
}

std::uint64_t Timeline::end(std::optional<std::uint32_t> redirect) {
  cycle_ = curEnd_;
  if (redirect) {
    streamBase_ = *redirect & ~3u;
    streamStart_ = cycle_;
    stream_.clear();
  }
  return cycle_;
}

std::vector<TransferEvent> scheduleTransfers(const MemoryImage& program, std::span<const TraceStep> trace,
                                             const TimingConfig& cfg, std::uint64_t startCycle) {
  std::vector<TransferEvent> events;
  if (trace.empty()) return events;
  Timeline tl(cfg, program, trace.front().pc, startCycle, nullptr, &events);
  for (const TraceStep& s : trace) {
    tl.fetch(s.pc);
    tl.begin();
    for (const DataAccess& a : s.accesses) {
      if (a.write)
        tl.store(a.addr, a.value);
      else
        tl.load(a.addr, a.value);
    }
    tl.end(s.redirect);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const TransferEvent& a, const TransferEvent& b) { return a.latchTimeNs < b.latchTimeNs; });
  return events;
}

std::string chronogramText(std::span<const TransferEvent> events, double periodNs) {
  std::string out = fmt::format("# period_ns {:.4f}\n", periodNs);
  out += "# bus            dir  addr        word        src    addr_cyc data_cyc latch_ns   consumer\n";
  for (const auto& e : events) {
    out += fmt::format("{:<16} {:<4} 0x{:08x}  0x{:08x}  {:<6} {:>8} {:>8} {:>9.3f}  0x{:08x}\n", busName(e.bus),
                       e.write ? "W" : "R", e.addr, e.word, regionName(e.sourceKind), e.addressCycle,
                       e.dataCycle, e.latchTimeNs, e.consumerPC);
  }
  return out;
}

std::string chronogramJson(std::span<const TransferEvent> events, double periodNs) {
  nlohmann::ordered_json j;
  j["period_ns"] = periodNs;
  auto& arr = j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : events) {
    nlohmann::ordered_json x;
    x["bus"] = busName(e.bus);
    x["write"] = e.write;
    x["addr"] = fmt::format("0x{:08x}", e.addr);
    x["word"] = fmt::format("0x{:08x}", e.word);
    x["source"] = regionName(e.sourceKind);
    x["address_cycle"] = e.addressCycle;
    x["data_cycle"] = e.dataCycle;
    x["last_data_cycle"] = e.lastDataCycle;
    x["latch_ns"] = e.latchTimeNs;
    x["consumer_pc"] = fmt::format("0x{:08x}", e.consumerPC);
    arr.push_back(std::move(x));
  }
  return j.dump(2) + "\n";
}

}  // namespace emfi::bus
