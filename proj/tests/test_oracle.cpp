#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

#include "json.hpp"

#include "emfi/glitch.hpp"
#include "emfi/oracle.hpp"
#include "emfi/programs.hpp"

using namespace emfi;
using oracle::OutcomeKind;

namespace {

bool hasRaw(const oracle::Explanation& e, std::uint32_t raw) {
  for (const auto& c : e.candidates)
    if (c.instr.raw == raw) return true;
  return false;
}

// Addresses of the instructions the golden run executes, first occurrence.
std::vector<std::uint32_t> executedAddresses(const programs::Program& p) {
  const auto g = glitch::computeGolden(p);
  std::vector<std::uint32_t> out;
  for (const auto& s : g.trace)
    if (std::find(out.begin(), out.end(), s.pc) == out.end()) out.push_back(s.pc);
  return out;
}

}  // namespace

TEST_CASE("a nop that wrote r0 to [r0] was a str", "[oracle]") {
  const auto p = programs::builtin("nop-sled");
  const auto g = glitch::computeGolden(p);
  auto observed = g.run.state;
  observed.mem.write32(observed.r[0], observed.r[0]);
  oracle::SearchOptions o;
  o.compare.memory = true;
  const auto pre = oracle::preState(p, p.entry);
  const auto e = oracle::explainExhaustive(pre, observed, p.entry, p, oracle::WidthPolicy::Only16, o);
  CHECK(e.searched16 == 65536);
  CHECK(e.searched32 == 0);
  REQUIRE(e.candidates.size() == 1);
  CHECK(e.candidates[0].instr.raw == 0x6000);
  CHECK(isa::disassemble(e.candidates[0].instr) == "str r0, [r0, #0]");
  CHECK(oracle::canExplain(e.candidates[0].instr, pre, observed, p.entry, p, o));

  // Without the memory comparison the store is invisible.
  o.compare.memory = false;
  const auto loose = oracle::explainExhaustive(pre, observed, p.entry, p, oracle::WidthPolicy::Only16, o);
  CHECK(loose.candidates.size() > 100);
  CHECK(hasRaw(loose, 0x6000));
  CHECK(hasRaw(loose, 0xBF00));
}

TEST_CASE("a set-at-1 value in r8 has no 16-bit explanation", "[oracle]") {
  const auto p = programs::builtin("ldr-r8");
  const auto g = glitch::computeGolden(p);
  auto observed = g.run.state;
  observed.r[8] = 0xFFF45679;
  const auto pre = oracle::preState(p, p.entry);
  const auto e = oracle::explainExhaustive(pre, observed, p.entry, p, oracle::WidthPolicy::Only16);
  CHECK(e.candidates.empty());
  const auto out = oracle::classify(g.run.state, observed, e, core::Termination::WatchpointHit, p.watched);
  CHECK(out.kind == OutcomeKind::DataFlowFault);
}

TEST_CASE("identity membership and soundness", "[oracle]") {
  for (const std::string id : {"nop-sled", "array-sum", "ldr-r4", "ldr-sram"}) {
    const auto p = programs::builtin(id);
    const auto g = glitch::computeGolden(p);
    const auto addrs = executedAddresses(p);
    for (std::size_t k = 0; k < addrs.size(); k += (id == "array-sum" ? 3 : 1)) {
      const std::uint32_t a = addrs[k];
      INFO(id << " @ " << std::hex << a);
      const auto pre = oracle::preState(p, a);
      oracle::SearchOptions o;
      o.compare.memory = true;
      const auto e = oracle::explainExhaustive(pre, g.run.state, a, p, oracle::WidthPolicy::Only16, o);
      REQUIRE(e.searched16 == 65536);
      const isa::HalfWord h = pre.mem.read16(a);
      const std::uint32_t original = isa::is32BitPrefix(h) ? (std::uint32_t{h} << 16) | pre.mem.read16(a + 2) : h;
      REQUIRE(hasRaw(e, original));
      for (const auto& c : e.candidates) REQUIRE(oracle::canExplain(c.instr, pre, g.run.state, a, p, o));
    }
  }
}

TEST_CASE("planted 16-bit replacements are always recovered", "[oracle]") {
  std::mt19937 rng(100);
  int planted = 0;
  const auto programsUnderTest = {"nop-sled", "array-sum", "ldr-r4"};
  while (planted < 100) {
    const auto p = programs::builtin(*(programsUnderTest.begin() + rng() % 3));
    const auto addrs = executedAddresses(p);
    const std::uint32_t a = addrs[rng() % addrs.size()];
    const auto h = static_cast<isa::HalfWord>(rng());
    if (isa::is32BitPrefix(h)) continue;
    const isa::Instr i = isa::decode(h);
    if (i.mnemonic == isa::Mnemonic::Unsupported) continue;
    const auto pre = oracle::preState(p, a);
    oracle::SearchOptions o;
    o.compare.memory = true;
    core::RunOptions ro;
    ro.cycleBudget = glitch::computeGolden(p).budget;
    ro.substitution = core::Substitution{a, h, std::nullopt};
    const auto observed = core::runToWatchpoint(pre, p.watchpoint, ro).state;
    const auto e = oracle::explainExhaustive(pre, observed, a, p, oracle::WidthPolicy::Only16, o);
    INFO(p.name << " @ " << std::hex << a << " planted " << h << " " << isa::disassemble(i));
    REQUIRE(hasRaw(e, h));
    ++planted;
  }
  CHECK(planted == 100);
}

TEST_CASE("trap classes stand for every member", "[oracle]") {
  const auto p = programs::builtin("ldr-r8");
  const auto pre = oracle::preState(p, p.entry);
  std::mt19937 rng(32);
  std::map<int, core::ArchState> seen;
  int members = 0;
  while (members < 400) {
    const auto h1 = static_cast<isa::HalfWord>(0xE800 + rng() % 0x1800);
    const auto h2 = static_cast<isa::HalfWord>(rng());
    const isa::Instr i = isa::decode(h1, h2);
    if (i.mnemonic == isa::Mnemonic::BL32) continue;
    if (core::step(pre, i).xpsr.exceptionNumber == 0) continue;
    core::RunOptions ro;
    ro.cycleBudget = glitch::computeGolden(p).budget;
    ro.substitution = core::Substitution{p.entry, h1, h2};
    const auto end = core::runToWatchpoint(pre, p.watchpoint, ro).state;
    const auto [it, fresh] = seen.try_emplace(end.xpsr.exceptionNumber, end);
    if (!fresh) {
      REQUIRE(end.r == it->second.r);
      REQUIRE(end.xpsr == it->second.xpsr);
      REQUIRE(end.cycles == it->second.cycles);
    }
    ++members;
  }
  CHECK(seen.size() >= 2);
}

TEST_CASE("classification order", "[oracle]") {
  const auto p = programs::builtin("ldr-r4");
  const auto g = glitch::computeGolden(p);
  const auto& golden = g.run.state;
  oracle::Explanation none;
  oracle::Explanation some;
  some.candidates.push_back({isa::decode(0xBF00), 1});
  using core::Termination;

  CHECK(oracle::classify(golden, golden, none, Termination::WatchpointHit, p.watched).kind == OutcomeKind::NoFault);
  CHECK(oracle::classify(golden, golden, some, Termination::WatchpointHit, p.watched).kind == OutcomeKind::NoFault);

  auto trapped = golden;
  trapped.xpsr.exceptionNumber = 6;
  const auto ex = oracle::classify(golden, trapped, some, Termination::CycleBudgetExceeded, p.watched);
  CHECK(ex.kind == OutcomeKind::ExceptionFault);
  CHECK(ex.exception == core::ExceptionKind::UsageUndefinedInstruction);

  auto lost = golden;
  lost.r[15] += 2;
  CHECK(oracle::classify(golden, lost, some, Termination::CycleBudgetExceeded, p.watched).kind == OutcomeKind::Crash);

  auto wrong = golden;
  wrong.r[4] = 0xFFFFFFFF;
  CHECK(oracle::classify(golden, wrong, some, Termination::WatchpointHit, p.watched).kind ==
        OutcomeKind::ProgramFlowFault);
  CHECK(oracle::classify(golden, wrong, none, Termination::WatchpointHit, p.watched).kind ==
        OutcomeKind::DataFlowFault);
}

TEST_CASE("explanation report", "[oracle]") {
  oracle::Explanation e;
  e.candidates.push_back({isa::decode(0x6000), 1});
  e.candidates.push_back({isa::decode(0xDE00), 1536});
  e.searched16 = 65536;
  oracle::Outcome o;
  o.kind = OutcomeKind::ProgramFlowFault;
  const auto j = nlohmann::json::parse(oracle::reportJson(e, o));
  REQUIRE(j["candidates"].size() == 2);
  CHECK(j["candidates"][0]["encoding"] == "0x6000");
  CHECK(j["candidates"][0]["mnemonic"] == "str r0, [r0, #0]");
  CHECK(j["candidates"][1]["class_size"] == 1536);
  CHECK(j["searched16"] == 65536);
  CHECK(j["classification"] == oracle::outcomeKindName(OutcomeKind::ProgramFlowFault));
}

TEST_CASE("pre-state lookup", "[oracle]") {
  const auto p = programs::builtin("array-sum");
  CHECK_THROWS_AS(oracle::preState(p, 0x08000100), std::invalid_argument);
  CHECK_THROWS_AS(oracle::preState(p, p.entry + 2), std::invalid_argument);  // inside ldr.w
  const auto s = oracle::preState(p, p.entry + 4);
  CHECK(s.r[15] == p.entry + 4);
  CHECK(s.r[4] == 1);
  const auto t = oracle::preStateAt(p, 7);
  CHECK(t.r[15] == p.entry);
  CHECK(t.r[1] == 1);
}
