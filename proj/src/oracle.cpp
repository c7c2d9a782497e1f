#include "emfi/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include "json.hpp"

namespace emfi::oracle {

using isa::HalfWord;
using isa::Instr;
using isa::Mnemonic;

bool sameOutput(const core::ArchState& a, const core::ArchState& b, const std::vector<std::uint32_t>& watched,
                const CompareOptions& cmp) {
  for (int i = 0; i <= 12; ++i)
    if (a.r[static_cast<std::size_t>(i)] != b.r[static_cast<std::size_t>(i)]) return false;
  if (!(a.xpsr == b.xpsr)) return false;
  if (cmp.pc && a.r[15] != b.r[15]) return false;
  if (cmp.cycles && a.cycles != b.cycles) return false;
  if (cmp.memory) {
    for (std::uint32_t addr : watched) {
      const bool ma = a.mem.mapped(addr, 4);
      const bool mb = b.mem.mapped(addr, 4);
      if (ma != mb) return false;
      if (ma && a.mem.read32(addr) != b.mem.read32(addr)) return false;
    }
  }
  return true;
}

namespace {

constexpr std::uint64_t kGoldenSearchBudget = 1'000'000;

core::RunResult goldenRun(const programs::Program& p, const bus::TimingConfig& timing,
                          std::vector<bus::TraceStep>* trace, std::uint64_t maxInstructions = UINT64_MAX) {
  core::RunOptions opt;
  opt.cycleBudget = kGoldenSearchBudget;
  opt.timing = timing;
  opt.trace = trace;
  opt.maxInstructions = maxInstructions;
  return core::runToWatchpoint(p.initial, p.watchpoint, opt);
}

std::uint64_t resolveBudget(const programs::Program& p, const SearchOptions& o) {
  if (o.cycleBudget != 0) return o.cycleBudget;
  const core::RunResult g = goldenRun(p, o.timing, nullptr);
  if (g.termination != core::Termination::WatchpointHit)
    throw std::invalid_argument("program '" + p.name + "' does not reach its watchpoint");
  return std::max<std::uint64_t>(1, g.state.cycles) * 4;
}

// Decoded candidates carry their own encoding; hand-built ones are encoded.
core::Substitution toSubstitution(const Instr& c, std::uint32_t addr, bool useRaw) {
  const std::uint32_t enc = useRaw || c.mnemonic == Mnemonic::Unsupported ? c.raw : isa::encode(c);
  core::Substitution s;
  s.addr = addr;
  if (c.width == 32) {
    s.first = static_cast<HalfWord>(enc >> 16);
    s.second = static_cast<HalfWord>(enc);
  } else {
    s.first = static_cast<HalfWord>(enc);
  }
  return s;
}

core::RunResult simulate(const core::Substitution& sub, const core::ArchState& pre, const programs::Program& program,
                         std::uint64_t budget, const bus::TimingConfig& timing) {
  core::RunOptions opt;
  opt.cycleBudget = budget;
  opt.timing = timing;
  opt.substitution = sub;
  return core::runToWatchpoint(pre, program.watchpoint, opt);
}

// Encodings whose replacement traps on the spot end in the same state.
enum ClassKey : int {
  kUndef16 = 0,
  kTrap32 = 100,  // + exception number
  kBranchUnmapped32 = 200,
};

struct ClassAcc {
  std::uint32_t rep = UINT32_MAX;
  std::uint64_t count = 0;
  Instr instr;

  void add(std::uint32_t raw, const Instr& i, std::uint64_t n = 1) {
    if (raw < rep) {
      rep = raw;
      instr = i;
    }
    count += n;
  }
};

struct WorkerResult {
  std::vector<Candidate> candidates;
  std::map<int, ClassAcc> classes;
  std::uint64_t simulated32 = 0;
};

struct Search {
  const core::ArchState& pre;
  const core::ArchState& observed;
  std::uint32_t target;
  const programs::Program& program;
  std::uint64_t budget;
  const SearchOptions& o;

  bool explains(const Instr& c) const {
    const core::RunResult r = simulate(toSubstitution(c, target, true), pre, program, budget, o.timing);
    return sameOutput(r.state, observed, program.watched, o.compare);
  }

  void run16(HalfWord h, WorkerResult& w) const {
    if (isa::is32BitPrefix(h)) {
      // Pairs with whatever follows the target in memory.
      const bool tailMapped = pre.mem.mapped(target + 2, 2);
      const Instr c = tailMapped ? isa::decode(h, pre.mem.read16(target + 2)) : isa::decode(h);
      core::Substitution sub{target, h, std::nullopt};
      const core::RunResult r = simulate(sub, pre, program, budget, o.timing);
      if (sameOutput(r.state, observed, program.watched, o.compare)) w.candidates.push_back({c, 1});
      return;
    }
    const Instr c = isa::decode(h);
    if (c.mnemonic == Mnemonic::Unsupported) {
      w.classes[kUndef16].add(h, c);
      return;
    }
    if (explains(c)) w.candidates.push_back({c, 1});
  }

  void run32(HalfWord h1, WorkerResult& w) const {
    const std::uint32_t hi = static_cast<std::uint32_t>(h1) << 16;
    if (!isa::mayDecode32(h1)) {
      const Instr c = isa::decode(h1, HalfWord{0});
      const core::ExceptionKind k = isa::isCoprocessorSpace(h1) ? core::ExceptionKind::UsageNoCoprocessor
                                                                : core::ExceptionKind::UsageUndefinedInstruction;
      w.classes[kTrap32 + core::exceptionNumber(k)].add(hi, c, 0x1'0000);
      return;
    }
    for (std::uint32_t h2 = 0; h2 <= 0xFFFF; ++h2) {
      const std::uint32_t raw = hi | h2;
      const Instr c = isa::decode(h1, static_cast<HalfWord>(h2));
      if (c.mnemonic == Mnemonic::BL32) {
        const std::uint32_t dest = target + 4 + static_cast<std::uint32_t>(c.imm);
        if (!pre.mem.mapped(dest & ~1u, 2)) {
          w.classes[kBranchUnmapped32].add(raw, c);
          continue;
        }
      } else {
        core::ArchState s = core::step(pre, c, o.timing);
        if (s.xpsr.exceptionNumber != 0) {
          w.classes[kTrap32 + s.xpsr.exceptionNumber].add(raw, c);
          continue;
        }
      }
      ++w.simulated32;
      if (explains(c)) w.candidates.push_back({c, 1});
    }
  }
};

template <typename Fn>
void parallelFor(std::uint32_t begin, std::uint32_t end, unsigned workers, std::vector<WorkerResult>& out, Fn fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  out.assign(workers, {});
  std::atomic<std::uint32_t> next{begin};
  constexpr std::uint32_t kChunk = 64;
  const auto body = [&](unsigned w) {
    for (;;) {
      const std::uint32_t lo = next.fetch_add(kChunk);
      if (lo >= end) return;
      const std::uint32_t hi = std::min(end, lo + kChunk);
      for (std::uint32_t v = lo; v < hi; ++v) fn(static_cast<HalfWord>(v), out[w]);
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < workers; ++w) threads.emplace_back(body, w);
  body(0);
  for (auto& t : threads) t.join();
}

}  // namespace

core::ArchState preState(const programs::Program& p, std::uint32_t targetAddr, const bus::TimingConfig& timing) {
  std::vector<bus::TraceStep> trace;
  const core::RunResult g = goldenRun(p, timing, &trace);
  if (g.termination != core::Termination::WatchpointHit)
    throw std::invalid_argument("program '" + p.name + "' does not reach its watchpoint");
  const auto it = std::find_if(trace.begin(), trace.end(), [&](const bus::TraceStep& s) { return s.pc == targetAddr; });
  if (it == trace.end())
    throw std::invalid_argument(fmt::format("0x{:08x} is not executed by the golden run", targetAddr));
  return goldenRun(p, timing, nullptr, static_cast<std::uint64_t>(it - trace.begin())).state;
}

core::ArchState preStateAt(const programs::Program& p, std::uint64_t executed, const bus::TimingConfig& timing) {
  return goldenRun(p, timing, nullptr, executed).state;
}

core::RunResult simulateReplacement(const isa::Instr& candidate, const core::ArchState& pre, std::uint32_t targetAddr,
                                    const programs::Program& program, const SearchOptions& o) {
  return simulate(toSubstitution(candidate, targetAddr, false), pre, program, resolveBudget(program, o), o.timing);
}

bool canExplain(const isa::Instr& candidate, const core::ArchState& pre, const core::ArchState& observed,
                std::uint32_t targetAddr, const programs::Program& program, const SearchOptions& o) {
  const core::RunResult r = simulateReplacement(candidate, pre, targetAddr, program, o);
  return sameOutput(r.state, observed, program.watched, o.compare);
}

Explanation explainExhaustive(const core::ArchState& pre, const core::ArchState& observed, std::uint32_t targetAddr,
                              const programs::Program& program, WidthPolicy policy, const SearchOptions& o) {
  const Search search{pre, observed, targetAddr, program, resolveBudget(program, o), o};
  Explanation e;
  std::vector<WorkerResult> parts;
  std::vector<WorkerResult> all;

  if (policy != WidthPolicy::Only32) {
    parallelFor(0, 0x1'0000, o.workers, parts, [&](HalfWord h, WorkerResult& w) { search.run16(h, w); });
    e.searched16 = 0x1'0000;
    std::move(parts.begin(), parts.end(), std::back_inserter(all));
  }
  if (policy != WidthPolicy::Only16) {
    parallelFor(0xE800, 0x1'0000, o.workers, parts, [&](HalfWord h, WorkerResult& w) { search.run32(h, w); });
    e.searched32 = std::uint64_t{0x1'0000 - 0xE800} * 0x1'0000;
    std::move(parts.begin(), parts.end(), std::back_inserter(all));
  }

  std::map<int, ClassAcc> classes;
  std::vector<Candidate> found;
  for (WorkerResult& w : all) {
    e.simulated32 += w.simulated32;
    found.insert(found.end(), w.candidates.begin(), w.candidates.end());
    for (const auto& [key, acc] : w.classes) classes[key].add(acc.rep, acc.instr, acc.count);
  }
  for (const auto& [key, acc] : classes) {
    if (key >= kTrap32) ++e.simulated32;
    if (search.explains(acc.instr)) found.push_back({acc.instr, acc.count});
  }

  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    if (a.instr.raw != b.instr.raw) return a.instr.raw < b.instr.raw;
    return a.classSize > b.classSize;
  });
  found.erase(std::unique(found.begin(), found.end(),
                          [](const Candidate& a, const Candidate& b) { return a.instr.raw == b.instr.raw; }),
              found.end());
  e.candidates = std::move(found);
  return e;
}

const char* outcomeKindName(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::NoFault: return "NoFault";
    case OutcomeKind::ExceptionFault: return "ExceptionFault";
    case OutcomeKind::ProgramFlowFault: return "ProgramFlowFault";
    case OutcomeKind::DataFlowFault: return "DataFlowFault";
    case OutcomeKind::Crash: return "Crash";
  }
  return "?";
}

Outcome classify(const core::ArchState& golden, const core::ArchState& observed, const Explanation& explanation,
                 core::Termination termination, const std::vector<std::uint32_t>& watched,
                 const CompareOptions& cmp) {
  Outcome out;
  out.explanation = explanation;
  const bool equal = golden.r == observed.r && golden.xpsr == observed.xpsr &&
                     sameOutput(golden, observed, watched, CompareOptions{true, true, cmp.cycles});
  if (equal) {
    out.kind = OutcomeKind::NoFault;
  } else if (observed.xpsr.exceptionNumber != 0) {
    out.kind = OutcomeKind::ExceptionFault;
    out.exception = observed.exception();
  } else if (termination == core::Termination::CycleBudgetExceeded) {
    out.kind = OutcomeKind::Crash;
  } else if (!explanation.candidates.empty()) {
    out.kind = OutcomeKind::ProgramFlowFault;
  } else {
    out.kind = OutcomeKind::DataFlowFault;
  }
  return out;
}

std::string reportJson(const Explanation& e, const Outcome& o) {
  nlohmann::ordered_json j;
  auto& cands = j["candidates"] = nlohmann::ordered_json::array();
  for (const Candidate& c : e.candidates) {
    nlohmann::ordered_json x;
    x["mnemonic"] = isa::disassemble(c.instr);
    x["encoding"] = c.instr.width == 32 ? fmt::format("0x{:08x}", c.instr.raw) : fmt::format("0x{:04x}", c.instr.raw);
    x["width"] = c.instr.width;
    x["class_size"] = c.classSize;
    cands.push_back(std::move(x));
  }
  j["searched16"] = e.searched16;
  j["searched32"] = e.searched32;
  j["simulated32"] = e.simulated32;
  j["classification"] = outcomeKindName(o.kind);
  if (o.kind == OutcomeKind::ExceptionFault) j["exception"] = core::exceptionName(o.exception);
  return j.dump(2) + "\n";
}

}  // namespace emfi::oracle
