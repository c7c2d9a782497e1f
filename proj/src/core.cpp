#include "emfi/core.hpp"

#include <bit>
#include <stdexcept>

namespace emfi::core {

namespace {

constexpr std::uint32_t kHandlerBase = kFlashBase + 0xFF00;

}  // namespace

int exceptionNumber(ExceptionKind k) {
  // 3..6 are the architectural numbers. The UsageFault subtypes beyond
  // Undefined take the reserved slots 7..9 so every kind stays distinct.
  switch (k) {
    case ExceptionKind::None: return 0;
    case ExceptionKind::HardFault: return 3;
    case ExceptionKind::MemManageFault: return 4;
    case ExceptionKind::BusFault: return 5;
    case ExceptionKind::UsageUndefinedInstruction: return 6;
    case ExceptionKind::UsageNoCoprocessor: return 7;
    case ExceptionKind::UsageUnaligned: return 8;
    case ExceptionKind::UsageInvalidState: return 9;
  }
  return 0;
}

ExceptionKind exceptionFromNumber(int n) {
  switch (n) {
    case 0: return ExceptionKind::None;
    case 3: return ExceptionKind::HardFault;
    case 4: return ExceptionKind::MemManageFault;
    case 5: return ExceptionKind::BusFault;
    case 6: return ExceptionKind::UsageUndefinedInstruction;
    case 7: return ExceptionKind::UsageNoCoprocessor;
    case 8: return ExceptionKind::UsageUnaligned;
    case 9: return ExceptionKind::UsageInvalidState;
    default: throw std::invalid_argument("unknown exception number " + std::to_string(n));
  }
}

const char* exceptionName(ExceptionKind k) {
  switch (k) {
    case ExceptionKind::None: return "None";
    case ExceptionKind::HardFault: return "HardFault";
    case ExceptionKind::MemManageFault: return "MemManageFault";
    case ExceptionKind::BusFault: return "BusFault";
    case ExceptionKind::UsageUndefinedInstruction: return "UsageFault(UndefinedInstruction)";
    case ExceptionKind::UsageNoCoprocessor: return "UsageFault(NoCoprocessor)";
    case ExceptionKind::UsageUnaligned: return "UsageFault(Unaligned)";
    case ExceptionKind::UsageInvalidState: return "UsageFault(InvalidState)";
  }
  return "?";
}

const char* terminationName(Termination t) {
  return t == Termination::WatchpointHit ? "WatchpointHit" : "CycleBudgetExceeded";
}

std::uint32_t handlerAddress(ExceptionKind k) {
  return kHandlerBase + 2 * static_cast<std::uint32_t>(exceptionNumber(k));
}

void installHandlers(MemoryImage& mem) {
  for (int n = 3; n <= 9; ++n) {
    const std::uint32_t a = kHandlerBase + 2 * static_cast<std::uint32_t>(n);
    if (!mem.mapped(a, 2)) continue;
    const std::uint8_t loop[2] = {0xFE, 0xE7};  // b .
    mem.load(a, loop);
  }
}

bool conditionPassed(isa::Cond c, const Xpsr& f) {
  using isa::Cond;
  switch (c) {
    case Cond::EQ: return f.z;
    case Cond::NE: return !f.z;
    case Cond::CS: return f.c;
    case Cond::CC: return !f.c;
    case Cond::MI: return f.n;
    case Cond::PL: return !f.n;
    case Cond::VS: return f.v;
    case Cond::VC: return !f.v;
    case Cond::HI: return f.c && !f.z;
    case Cond::LS: return !f.c || f.z;
    case Cond::GE: return f.n == f.v;
    case Cond::LT: return f.n != f.v;
    case Cond::GT: return !f.z && f.n == f.v;
    case Cond::LE: return f.z || f.n != f.v;
    case Cond::AL: return true;
  }
  return false;
}

namespace {

using isa::Instr;
using isa::Mnemonic;

struct Effect {
  std::optional<std::uint32_t> redirect;
  ExceptionKind trap = ExceptionKind::None;
};

Effect trap(ExceptionKind k) { return {std::nullopt, k}; }

struct AddResult {
  std::uint32_t value;
  bool carry;
  bool overflow;
};

AddResult addWithCarry(std::uint32_t x, std::uint32_t y, bool carryIn) {
  const std::uint64_t u = std::uint64_t{x} + y + (carryIn ? 1 : 0);
  const std::int64_t s = std::int64_t{static_cast<std::int32_t>(x)} + static_cast<std::int32_t>(y) + (carryIn ? 1 : 0);
  const auto r = static_cast<std::uint32_t>(u);
  return {r, (u >> 32) != 0, s != static_cast<std::int32_t>(r)};
}

class Executor {
 public:
  Executor(ArchState& s, bus::Timeline& tl, bus::TraceStep* rec) : s_(s), tl_(tl), rec_(rec) {}

  Effect run(std::uint32_t pc, const Instr& i) {
    pc_ = pc;
    switch (i.mnemonic) {
      case Mnemonic::NOP:
        return {};
      case Mnemonic::MOVimm:
        s_.r[i.rd] = static_cast<std::uint32_t>(i.imm);
        setNZ(s_.r[i.rd]);
        return {};
      case Mnemonic::MOVreg: {
        const std::uint32_t v = reg(i.rm);
        if (i.rd == 15) return {v & ~1u, ExceptionKind::None};
        s_.r[i.rd] = v;
        return {};
      }
      case Mnemonic::ADDimm:
      case Mnemonic::SUBimm:
      case Mnemonic::ADDreg:
      case Mnemonic::SUBreg:
        return arith(i);
      case Mnemonic::CMPimm:
      case Mnemonic::CMPreg: {
        const std::uint32_t op = i.mnemonic == Mnemonic::CMPimm ? static_cast<std::uint32_t>(i.imm) : reg(i.rm);
        setNZCV(addWithCarry(reg(i.rn), ~op, true));
        return {};
      }
      case Mnemonic::AND:
      case Mnemonic::ORR:
      case Mnemonic::EOR: {
        const std::uint32_t a = reg(i.rn);
        const std::uint32_t b = reg(i.rm);
        const std::uint32_t v = i.mnemonic == Mnemonic::AND ? (a & b) : i.mnemonic == Mnemonic::ORR ? (a | b) : (a ^ b);
        s_.r[i.rd] = v;
        setNZ(v);
        return {};
      }
      case Mnemonic::LSLimm: {
        const std::uint32_t m = reg(i.rm);
        std::uint32_t v = m;
        if (i.shift != 0) {
          s_.xpsr.c = ((m >> (32 - i.shift)) & 1) != 0;
          v = m << i.shift;
        }
        s_.r[i.rd] = v;
        setNZ(v);
        return {};
      }
      case Mnemonic::LDRlit:
        return load(i.rd, ((pc_ + 4) & ~3u) + static_cast<std::uint32_t>(i.imm));
      case Mnemonic::LDRlit32:
        return load(i.rd, ((pc_ + 4) & ~3u) + static_cast<std::uint32_t>(i.imm));
      case Mnemonic::LDRimm:
        return load(i.rd, reg(i.rn) + static_cast<std::uint32_t>(i.imm));
      case Mnemonic::LDRreg:
        return load(i.rd, reg(i.rn) + reg(i.rm));
      case Mnemonic::LDRregShift32:
        return load(i.rd, reg(i.rn) + (reg(i.rm) << i.shift));
      case Mnemonic::STRimm:
        return store(reg(i.rd), reg(i.rn) + static_cast<std::uint32_t>(i.imm));
      case Mnemonic::STRreg:
        return store(reg(i.rd), reg(i.rn) + reg(i.rm));
      case Mnemonic::Bcond:
        if (!conditionPassed(i.cond, s_.xpsr)) return {};
        return {pc_ + 4 + static_cast<std::uint32_t>(i.imm), ExceptionKind::None};
      case Mnemonic::Buncond:
        return {pc_ + 4 + static_cast<std::uint32_t>(i.imm), ExceptionKind::None};
      case Mnemonic::BL32:
        s_.r[14] = (pc_ + 4) | 1;
        return {pc_ + 4 + static_cast<std::uint32_t>(i.imm), ExceptionKind::None};
      case Mnemonic::PUSH:
        return push(i.regList);
      case Mnemonic::POP:
        return pop(i.regList);
      case Mnemonic::Unsupported: {
        const auto first = static_cast<isa::HalfWord>(i.width == 32 ? i.raw >> 16 : i.raw);
        if (i.width == 32 && isa::isCoprocessorSpace(first)) return trap(ExceptionKind::UsageNoCoprocessor);
        return trap(ExceptionKind::UsageUndefinedInstruction);
      }
    }
    return trap(ExceptionKind::UsageUndefinedInstruction);
  }

 private:
  std::uint32_t reg(unsigned n) const { return n == 15 ? pc_ + 4 : s_.r[n]; }

  void setNZ(std::uint32_t v) {
    s_.xpsr.n = (v >> 31) != 0;
    s_.xpsr.z = v == 0;
  }

  void setNZCV(const AddResult& r) {
    setNZ(r.value);
    s_.xpsr.c = r.carry;
    s_.xpsr.v = r.overflow;
  }

  Effect arith(const Instr& i) {
    const bool sub = i.mnemonic == Mnemonic::SUBimm || i.mnemonic == Mnemonic::SUBreg;
    const bool imm = i.mnemonic == Mnemonic::ADDimm || i.mnemonic == Mnemonic::SUBimm;
    const std::uint32_t op = imm ? static_cast<std::uint32_t>(i.imm) : reg(i.rm);
    const AddResult r = sub ? addWithCarry(reg(i.rn), ~op, true) : addWithCarry(reg(i.rn), op, false);
    if (i.setFlags) {
      s_.r[i.rd] = r.value;
      setNZCV(r);
      return {};
    }
    if (i.rd == 15) return {r.value & ~1u, ExceptionKind::None};
    s_.r[i.rd] = r.value;
    return {};
  }

  ExceptionKind checkAccess(std::uint32_t addr, bool write) const {
    if (addr & 3) return ExceptionKind::UsageUnaligned;
    const Region* r = s_.mem.find(addr, 4);
    if (!r) return ExceptionKind::BusFault;
    if (write && r->kind == RegionKind::Flash) return ExceptionKind::BusFault;
    return ExceptionKind::None;
  }

  std::uint32_t doLoad(std::uint32_t addr) {
    const std::uint32_t v = s_.mem.read32(addr);
    if (rec_) rec_->accesses.push_back({addr, v, false});
    return tl_.load(addr, v);
  }

  void doStore(std::uint32_t addr, std::uint32_t v) {
    if (rec_) rec_->accesses.push_back({addr, v, true});
    tl_.store(addr, v);
    s_.mem.write32(addr, v);
  }

  Effect load(std::uint8_t rt, std::uint32_t addr) {
    if (auto k = checkAccess(addr, false); k != ExceptionKind::None) return trap(k);
    const std::uint32_t v = doLoad(addr);
    if (rt == 15) {
      if (!(v & 1)) return trap(ExceptionKind::UsageInvalidState);
      return {v & ~1u, ExceptionKind::None};
    }
    s_.r[rt] = v;
    return {};
  }

  Effect store(std::uint32_t value, std::uint32_t addr) {
    if (auto k = checkAccess(addr, true); k != ExceptionKind::None) return trap(k);
    doStore(addr, value);
    return {};
  }

  Effect push(std::uint16_t list) {
    const std::uint32_t n = static_cast<std::uint32_t>(std::popcount(list));
    const std::uint32_t base = s_.r[13] - 4 * n;
    for (std::uint32_t k = 0; k < n; ++k)
      if (auto e = checkAccess(base + 4 * k, true); e != ExceptionKind::None) return trap(e);
    std::uint32_t a = base;
    for (unsigned r = 0; r < 16; ++r) {
      if (!(list & (1u << r))) continue;
      doStore(a, reg(r));
      a += 4;
    }
    s_.r[13] = base;
    return {};
  }

  Effect pop(std::uint16_t list) {
    const std::uint32_t n = static_cast<std::uint32_t>(std::popcount(list));
    const std::uint32_t base = s_.r[13];
    for (std::uint32_t k = 0; k < n; ++k)
      if (auto e = checkAccess(base + 4 * k, false); e != ExceptionKind::None) return trap(e);
    std::array<std::uint32_t, 16> vals{};
    std::uint32_t a = base;
    for (unsigned r = 0; r < 16; ++r) {
      if (!(list & (1u << r))) continue;
      vals[r] = doLoad(a);
      a += 4;
    }
    if ((list & 0x8000) && !(vals[15] & 1)) return trap(ExceptionKind::UsageInvalidState);
    for (unsigned r = 0; r < 15; ++r)
      if (list & (1u << r)) s_.r[r] = vals[r];
    s_.r[13] = base + 4 * n;
    if (list & 0x8000) return {vals[15] & ~1u, ExceptionKind::None};
    return {};
  }

  ArchState& s_;
  bus::Timeline& tl_;
  bus::TraceStep* rec_;
  std::uint32_t pc_ = 0;
};

// Commits one instruction: executes, raises any trap, retires on the timeline.
void retire(ArchState& s, std::uint32_t pc, const Instr& instr, bus::Timeline& tl, bus::TraceStep* rec,
            Effect e) {
  if (e.trap != ExceptionKind::None) {
    s.xpsr.exceptionNumber = exceptionNumber(e.trap);
    e.redirect = handlerAddress(e.trap);
  }
  if (rec) rec->redirect = e.redirect;
  s.cycles = tl.end(e.redirect);
  if (rec) rec->endCycle = s.cycles;
  s.r[15] = e.redirect ? *e.redirect : pc + instr.width / 8;
}

}  // namespace

RunResult runToWatchpoint(ArchState s, std::uint32_t watchpointAddr, const RunOptions& opt) {
  RunResult res;
  res.state = std::move(s);
  ArchState& st = res.state;
  bus::Timeline tl(opt.timing, st.mem, st.r[15], st.cycles, opt.observer, opt.events);
  std::optional<Substitution> sub = opt.substitution;

  for (;;) {
    if (st.xpsr.exceptionNumber != 0) {
      // The handler spins; only the cycle counter moves until the watchdog.
      if (st.cycles < opt.cycleBudget) st.cycles = opt.cycleBudget;
      res.termination = Termination::CycleBudgetExceeded;
      break;
    }
    if (st.r[15] == watchpointAddr) {
      res.termination = Termination::WatchpointHit;
      break;
    }
    if (st.cycles >= opt.cycleBudget || res.instructions >= opt.maxInstructions) {
      res.termination = Termination::CycleBudgetExceeded;
      break;
    }

    const std::uint32_t pc = st.r[15];
    const bus::Timeline::Fetch f = tl.fetch(pc);
    Instr instr;
    bool fetchFault = false;
    if (sub && sub->addr == pc) {
      std::optional<isa::HalfWord> second = sub->second;
      if (!second && isa::is32BitPrefix(sub->first)) {
        if (st.mem.mapped(pc + 2, 2))
          second = st.mem.read16(pc + 2);
        else
          fetchFault = true;
      }
      instr = isa::decode(sub->first, second);
      sub.reset();
    } else if (f.busError) {
      fetchFault = true;
    } else {
      instr = isa::decode(f.first, f.second);
    }

    bus::TraceStep* rec = nullptr;
    const std::uint64_t start = tl.begin();
    if (opt.trace) {
      rec = &opt.trace->emplace_back();
      rec->pc = pc;
      rec->instr = instr;
      rec->startCycle = start;
    }
    Effect e = fetchFault ? trap(ExceptionKind::BusFault) : Executor(st, tl, rec).run(pc, instr);
    retire(st, pc, instr, tl, rec, e);
    ++res.instructions;
  }
  return res;
}

std::pair<ArchState, Termination> runToWatchpoint(ArchState s, const MemoryImage& program,
                                                  std::uint32_t watchpointAddr, std::uint64_t cycleBudget) {
  s.mem = program;
  RunOptions opt;
  opt.cycleBudget = cycleBudget;
  RunResult r = runToWatchpoint(std::move(s), watchpointAddr, opt);
  return {std::move(r.state), r.termination};
}

ArchState step(ArchState s, const isa::Instr& fetched, const bus::TimingConfig& timing) {
  if (s.xpsr.exceptionNumber != 0) {
    ++s.cycles;
    return s;
  }
  const std::uint32_t pc = s.r[15];
  bus::Timeline tl(timing, s.mem, pc, s.cycles);
  tl.fetch(pc);
  tl.begin();
  const Effect e = Executor(s, tl, nullptr).run(pc, fetched);
  retire(s, pc, fetched, tl, nullptr, e);
  return s;
}

}  // namespace emfi::core
