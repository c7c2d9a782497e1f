#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>

#include "emfi/bus.hpp"
#include "emfi/glitch.hpp"
#include "emfi/programs.hpp"

using namespace emfi;
using bus::Bus;

namespace {

std::vector<bus::TransferEvent> liveEvents(const programs::Program& p, const bus::TimingConfig& t) {
  std::vector<bus::TransferEvent> ev;
  core::RunOptions o;
  o.timing = t;
  o.events = &ev;
  core::runToWatchpoint(p.initial, p.watchpoint, o);
  return ev;
}

bool sameEvent(const bus::TransferEvent& a, const bus::TransferEvent& b) {
  return a.bus == b.bus && a.addr == b.addr && a.word == b.word && a.write == b.write &&
         a.sourceKind == b.sourceKind && a.consumerPC == b.consumerPC && a.addressCycle == b.addressCycle &&
         a.dataCycle == b.dataCycle && a.lastDataCycle == b.lastDataCycle && a.latchTimeNs == b.latchTimeNs;
}

std::vector<double> latchTimes(const glitch::Golden& g, Bus b) {
  std::vector<double> out;
  for (const auto& e : g.events)
    if (e.bus == b && !e.write) out.push_back(e.latchTimeNs);
  return out;
}

}  // namespace

TEST_CASE("array-sum duration", "[bus]") {
  const auto g = glitch::computeGolden(programs::builtin("array-sum"));
  CHECK(g.run.state.cycles == 184);
  const double us = static_cast<double>(g.run.state.cycles) * g.timing.clock.periodNs() / 1000.0;
  CHECK_THAT(us, Catch::Matchers::WithinAbs(3.2857, 1e-4));
  // 3.5 us at 56 MHz is 196 cycles.
  CHECK(std::abs(static_cast<double>(g.run.state.cycles) - 196.0) <= 0.25 * 196.0);
}

TEST_CASE("wait states only ever slow a program down", "[bus]") {
  const auto p = programs::builtin("array-sum");
  std::uint64_t prev = 0;
  for (unsigned w = 0; w <= 8; ++w) {
    bus::TimingConfig t;
    t.flashWaitStates = w;
    const auto g = glitch::computeGolden(p, t);
    INFO("W=" << w);
    CHECK(g.run.state.mem.read32(programs::kResultAddr) == 0xFF);
    CHECK(g.run.state.cycles >= prev);
    prev = g.run.state.cycles;
  }
}

TEST_CASE("latch times of the single-load programs", "[bus]") {
  using Catch::Matchers::WithinAbs;
  SECTION("ldr-r4") {
    const auto g = glitch::computeGolden(programs::builtin("ldr-r4"));
    const auto data = latchTimes(g, Bus::DataBus);
    REQUIRE(data.size() == 1);
    CHECK_THAT(data[0], WithinAbs(214.286, 1e-3));
    CHECK_THAT(latchTimes(g, Bus::InstructionBus).front(), WithinAbs(107.143, 1e-3));
  }
  SECTION("ldr-r8") {
    const auto g = glitch::computeGolden(programs::builtin("ldr-r8"));
    CHECK_THAT(latchTimes(g, Bus::DataBus).at(0), WithinAbs(214.286, 1e-3));
  }
  SECTION("ldr-sram latches at the start of the data phase") {
    const auto g = glitch::computeGolden(programs::builtin("ldr-sram"));
    const auto data = latchTimes(g, Bus::DataBus);
    REQUIRE(data.size() == 1);
    CHECK_THAT(data[0], WithinAbs(125.0, 1e-3));
  }
  SECTION("nop-sled fetches") {
    const auto g = glitch::computeGolden(programs::builtin("nop-sled"));
    const auto f = latchTimes(g, Bus::InstructionBus);
    REQUIRE(f.size() >= 4);
    const double expect[] = {107.143, 196.429, 285.714, 375.0};
    for (int k = 0; k < 4; ++k) CHECK_THAT(f[k], WithinAbs(expect[k], 1e-3));
  }
}

TEST_CASE("latch formula", "[bus]") {
  const double T = 1e9 / 56e6;
  CHECK(bus::latchTimeNs(RegionKind::Flash, 7, 11, T) == Catch::Approx(12 * T));
  CHECK(bus::latchTimeNs(RegionKind::SRAM, 7, 7, T) == Catch::Approx(7 * T));
  bus::TransferEvent e;
  e.sourceKind = RegionKind::Flash;
  e.latchTimeNs = 100.0;
  const double inside[] = {98.0};
  const double edge[] = {97.0};
  const double late[] = {100.5};
  CHECK(bus::latchVulnerable(e, inside, 3.0));
  CHECK_FALSE(bus::latchVulnerable(e, edge, 3.0));
  CHECK_FALSE(bus::latchVulnerable(e, late, 3.0));
  e.sourceKind = RegionKind::SRAM;
  CHECK_FALSE(bus::latchVulnerable(e, inside, 3.0));
}

TEST_CASE("schedule invariants on every built-in program", "[bus]") {
  for (const auto& id : programs::builtinIds()) {
    for (unsigned w : {0u, 2u, 4u}) {
      bus::TimingConfig t;
      t.flashWaitStates = w;
      const auto p = programs::builtin(id);
      const auto g = glitch::computeGolden(p, t);
      INFO(id << " W=" << w);

      // Two-cycle floor and latch ordering.
      for (std::size_t k = 0; k < g.events.size(); ++k) {
        REQUIRE(g.events[k].dataCycle >= g.events[k].addressCycle + 1);
        REQUIRE(g.events[k].lastDataCycle >= g.events[k].dataCycle);
        if (k) REQUIRE(g.events[k].latchTimeNs >= g.events[k - 1].latchTimeNs);
      }

      // Offline replay of the golden trace reproduces the live schedule.
      auto live = liveEvents(p, t);
      std::stable_sort(live.begin(), live.end(),
                       [](const auto& a, const auto& b) { return a.latchTimeNs < b.latchTimeNs; });
      const auto replay = bus::scheduleTransfers(p.initial.mem, g.trace, t, p.initial.cycles);
      REQUIRE(replay.size() == live.size());
      for (std::size_t k = 0; k < live.size(); ++k) REQUIRE(sameEvent(replay[k], live[k]));

      // Every executed halfword arrives in exactly one fetched word, and the
      // latest fetch of that word before execution carries it.
      std::map<std::uint32_t, std::set<std::uint32_t>> wordsHolding;
      for (const auto& e : g.events) {
        if (e.bus != Bus::InstructionBus) continue;
        wordsHolding[e.word & 0xFFFF].insert(e.addr);
        wordsHolding[e.word >> 16].insert(e.addr + 2);
      }
      for (const auto& s : g.trace) {
        if (s.instr.width != 16) continue;
        const bus::TransferEvent* serving = nullptr;
        for (const auto& e : g.events)
          if (e.bus == Bus::InstructionBus && e.addr == (s.pc & ~3u) && e.lastDataCycle <= s.startCycle)
            if (!serving || e.dataCycle > serving->dataCycle) serving = &e;
        REQUIRE(serving != nullptr);
        const std::uint32_t half = (s.pc & 2) ? serving->word >> 16 : serving->word & 0xFFFF;
        REQUIRE(half == s.instr.raw);
        REQUIRE(wordsHolding.at(s.instr.raw).contains(s.pc));
      }
    }
  }
}
