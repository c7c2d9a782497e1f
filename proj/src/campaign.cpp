#include "emfi/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include "json.hpp"

namespace emfi::campaign {

namespace fs = std::filesystem;

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double toDouble(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
}

std::uint64_t toUnsigned(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long u = std::stoull(v, &used, 0);
      if (used == v.size()) return u;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
}

bool toBool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}

std::string resolve(const std::string& baseDir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? path : (fs::path(baseDir) / p).string();
}

template <typename Fn>
void parallelIndex(std::size_t n, unsigned workers, Fn fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  const auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
  };
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < workers; ++w) threads.emplace_back(body);
  body();
  for (auto& t : threads) t.join();
}

}  // namespace

std::vector<double> Range::values() const {
  std::vector<double> v;
  if (!(step > 0.0) || stop < start) return v;
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) v.push_back(round6(start + static_cast<double>(i) * step));
  return v;
}

const char* axisName(Axis a) {
  switch (a) {
    case Axis::None: return "none";
    case Axis::Voltage: return "voltage";
    case Axis::Time: return "time";
    case Axis::Grid: return "grid";
  }
  return "?";
}

glitch::Coupling CouplingField::at(int x, int y) const {
  std::array<double, 2> sum{};
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < bumpsPerBus; ++k) {
      glitch::Rng rng(glitch::deriveSeed(seed, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(k)));
      const double cx = rng.uniform() * (nx - 1);
      const double cy = rng.uniform() * (ny - 1);
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      sum[static_cast<std::size_t>(b)] += peak * std::exp(-d2 / (2.0 * sigmaCells * sigmaCells));
    }
  }
  return {round6(std::min(1.0, sum[0])), round6(std::min(1.0, sum[1]))};
}

void CampaignSpec::validate() const {
  if (trialsPerPoint < 1) throw ConfigError("trials must be at least 1");
  if (budgetFactor < 1) throw ConfigError("budget_factor must be at least 1");
  const auto checkRange = [](const Range& r, const char* name) {
    if (!(r.step > 0.0)) throw ConfigError(fmt::format("{} step must be positive", name));
    if (r.stop < r.start) throw ConfigError(fmt::format("{} stop precedes start", name));
  };
  if (axis == Axis::Voltage) checkRange(voltage, "voltage");
  if (time) checkRange(*time, "time");
  if (axis == Axis::Time && !time) throw ConfigError("a time sweep needs time_start/time_stop/time_step");
  if (axis == Axis::Grid) {
    if (grid.nx < 1 || grid.ny < 1) throw ConfigError("grid dimensions must be positive");
    if (!(grid.sigmaCells > 0.0)) throw ConfigError("field_sigma must be positive");
    if (grid.bumpsPerBus < 0) throw ConfigError("field_bumps must be non-negative");
    if (!(grid.peak >= 0.0)) throw ConfigError("field_peak must be non-negative");
  }
  try {
    base.validate();
    if (axis == Axis::Voltage)
      for (double v : voltage.values()) {
        glitch::GlitchSpec g = base;
        g.voltage = v;
        g.validate();
      }
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void applyKey(CampaignSpec& s, const std::string& key, const std::string& value, const std::string& baseDir) {
  const auto range = [&]() -> Range& {
    if (!s.time) s.time = Range{s.base.injectionTimeNs, s.base.injectionTimeNs, 0.2};
    return *s.time;
  };
  if (key == "voltage") s.base.voltage = toDouble(key, value);
  else if (key == "width_ns") s.base.widthNs = toDouble(key, value);
  else if (key == "injection_time_ns") s.base.injectionTimeNs = toDouble(key, value);
  else if (key == "coupling_instr") s.base.coupling.instrBus = toDouble(key, value);
  else if (key == "coupling_data") s.base.coupling.dataBus = toDouble(key, value);
  else if (key == "precharge_data") s.model.data.precharge = static_cast<std::uint32_t>(toUnsigned(key, value));
  else if (key == "precharge_instr") s.model.instr.precharge = static_cast<std::uint32_t>(toUnsigned(key, value));
  else if (key == "complex_precharge") s.model.complexInstrPrecharge = toBool(key, value);
  else if (key == "slope") s.model.slope = toDouble(key, value);
  else if (key == "rise_time_ns") s.model.riseTimeNs = toDouble(key, value);
  else if (key == "seed") s.seed = toUnsigned(key, value);
  else if (key == "thresholds_file") {
    try {
      glitch::readThresholds(resolve(baseDir, value), s.model);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "program") {
    const auto& ids = programs::builtinIds();
    s.program = std::find(ids.begin(), ids.end(), value) != ids.end() ? value : resolve(baseDir, value);
  } else if (key == "trials") s.trialsPerPoint = toUnsigned(key, value);
  else if (key == "axis") {
    if (value == "none") s.axis = Axis::None;
    else if (value == "voltage") s.axis = Axis::Voltage;
    else if (value == "time") s.axis = Axis::Time;
    else if (value == "grid") s.axis = Axis::Grid;
    else throw ConfigError("axis: expected none, voltage, time or grid");
  } else if (key == "voltage_start") s.voltage.start = toDouble(key, value);
  else if (key == "voltage_stop") s.voltage.stop = toDouble(key, value);
  else if (key == "voltage_step") s.voltage.step = toDouble(key, value);
  else if (key == "time_start") range().start = toDouble(key, value);
  else if (key == "time_stop") range().stop = toDouble(key, value);
  else if (key == "time_step") range().step = toDouble(key, value);
  else if (key == "grid_nx") s.grid.nx = static_cast<int>(toUnsigned(key, value));
  else if (key == "grid_ny") s.grid.ny = static_cast<int>(toUnsigned(key, value));
  else if (key == "grid_step_um") s.grid.stepUm = toDouble(key, value);
  else if (key == "field_seed") s.grid.seed = toUnsigned(key, value);
  else if (key == "field_bumps") s.grid.bumpsPerBus = static_cast<int>(toUnsigned(key, value));
  else if (key == "field_sigma") s.grid.sigmaCells = toDouble(key, value);
  else if (key == "field_peak") s.grid.peak = toDouble(key, value);
  else if (key == "flash_wait_states") s.timing.flashWaitStates = static_cast<unsigned>(toUnsigned(key, value));
  else if (key == "sram_wait_states") s.timing.sramWaitStates = static_cast<unsigned>(toUnsigned(key, value));
  else if (key == "clock_hz") s.timing.clock.frequencyHz = toDouble(key, value);
  else if (key == "setup_window_ns") s.timing.setupWindowNs = toDouble(key, value);
  else if (key == "budget_factor") s.budgetFactor = static_cast<unsigned>(toUnsigned(key, value));
  else if (key == "explain") s.explain = toBool(key, value);
  else if (key == "oracle_width") {
    if (value == "16") s.oracleWidth = oracle::WidthPolicy::Only16;
    else if (value == "32") s.oracleWidth = oracle::WidthPolicy::Only32;
    else if (value == "both") s.oracleWidth = oracle::WidthPolicy::Both;
    else throw ConfigError("oracle_width: expected 16, 32 or both");
  } else if (key == "compare_memory") s.compare.memory = toBool(key, value);
  else if (key == "compare_pc") s.compare.pc = toBool(key, value);
  else if (key == "compare_cycles") s.compare.cycles = toBool(key, value);
  else if (key == "workers") s.workers = static_cast<unsigned>(toUnsigned(key, value));
  else throw ConfigError(fmt::format("unknown key '{}'", key));
}

CampaignSpec parseConfig(const std::string& text, const std::string& baseDir) {
  CampaignSpec s;
  std::istringstream in(text);
  int lineNo = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineNo;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key = value", lineNo));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      applyKey(s, key, value, baseDir);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", lineNo, e.what()));
    }
  }
  return s;
}

CampaignSpec readConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parseConfig(ss.str(), fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

std::vector<Point> sweepPoints(const CampaignSpec& spec) {
  std::vector<Point> pts;
  Point base;
  base.voltage = spec.base.voltage;
  base.timeNs = spec.base.injectionTimeNs;
  base.coupling = spec.base.coupling;
  switch (spec.axis) {
    case Axis::None: pts.push_back(base); break;
    case Axis::Voltage:
      for (double v : spec.voltage.values()) {
        Point p = base;
        p.voltage = v;
        pts.push_back(p);
      }
      break;
    case Axis::Time:
      for (double t : spec.time->values()) {
        Point p = base;
        p.timeNs = t;
        pts.push_back(p);
      }
      break;
    case Axis::Grid:
      for (int y = 0; y < spec.grid.ny; ++y)
        for (int x = 0; x < spec.grid.nx; ++x) {
          Point p = base;
          p.x = x;
          p.y = y;
          p.coupling = spec.grid.at(x, y);
          if (spec.time) p.timeNs = spec.time->start;
          pts.push_back(p);
        }
      break;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i].index = i;
  return pts;
}

std::uint32_t resultValue(const programs::Program& p, const core::ArchState& s) {
  if (p.resultRegister) return s.r[static_cast<std::size_t>(*p.resultRegister)];
  if (p.resultAddress) return s.mem.read32(*p.resultAddress);
  return s.r[0];
}

std::string outcomeKey(const dump::StateDump& golden, const dump::StateDump& observed, core::Termination t) {
  dump::StateDump a = golden;
  dump::StateDump b = observed;
  a.cycles = b.cycles = 0;
  if (a == b) return "no-fault";
  if (observed.xpsr.exceptionNumber != 0)
    return std::string("exception:") + core::exceptionName(core::exceptionFromNumber(observed.xpsr.exceptionNumber));
  if (t == core::Termination::CycleBudgetExceeded) return "crash";
  std::string key;
  const auto add = [&](const std::string& item) {
    if (!key.empty()) key += ' ';
    key += item;
  };
  for (std::size_t i = 0; i < 16; ++i)
    if (golden.r[i] != observed.r[i]) add(fmt::format("r{}=0x{:08x}", i, observed.r[i]));
  const std::pair<const char*, bool> flags[] = {{"N", observed.xpsr.n != golden.xpsr.n},
                                                {"Z", observed.xpsr.z != golden.xpsr.z},
                                                {"C", observed.xpsr.c != golden.xpsr.c},
                                                {"V", observed.xpsr.v != golden.xpsr.v}};
  const bool values[] = {observed.xpsr.n, observed.xpsr.z, observed.xpsr.c, observed.xpsr.v};
  for (std::size_t i = 0; i < 4; ++i)
    if (flags[i].second) add(fmt::format("{}={}", flags[i].first, values[i] ? 1 : 0));
  for (const auto& [addr, v] : observed.watched) {
    const auto it = golden.watched.find(addr);
    if (it == golden.watched.end() || it->second != v) add(fmt::format("mem[0x{:08x}]=0x{:08x}", addr, v));
  }
  return key;
}

namespace {

// Golden step whose execution the first corrupted transfer reached.
std::optional<std::size_t> faultSite(const glitch::Golden& g, const bus::TransferEvent& e) {
  for (std::size_t i = 0; i < g.trace.size(); ++i) {
    const bus::TraceStep& s = g.trace[i];
    if (e.bus == bus::Bus::DataBus) {
      if (s.pc == e.consumerPC && s.startCycle <= e.addressCycle && e.addressCycle <= s.endCycle) return i;
    } else {
      const bool overlaps = s.pc == e.addr || s.pc == e.addr + 2 || (s.pc + 2 == e.addr && s.instr.width == 32);
      if (overlaps && s.startCycle >= e.addressCycle) return i;
    }
  }
  return std::nullopt;
}

TimeClass timeClassOf(const TrialRecord& t, std::uint32_t goldenValue) {
  if (t.outcome == oracle::OutcomeKind::ExceptionFault) return TimeClass::Exception;
  if (t.outcome == oracle::OutcomeKind::Crash) return TimeClass::Crash;
  return t.value != goldenValue ? TimeClass::OutputFault : TimeClass::NoFault;
}

CellClass cellClassOf(oracle::OutcomeKind k) {
  switch (k) {
    case oracle::OutcomeKind::NoFault: return CellClass::NoFault;
    case oracle::OutcomeKind::Crash: return CellClass::Crash;
    case oracle::OutcomeKind::ExceptionFault: return CellClass::Exception;
    default: return CellClass::RegisterFault;
  }
}

PointSummary summarize(const Point& p, const TrialRecord* first, std::size_t n, const dump::StateDump& golden,
                       std::uint32_t goldenValue) {
  PointSummary s;
  s.point = p;
  if (n == 0) return s;
  std::map<std::string, HistogramEntry> hist;
  std::map<std::uint32_t, std::uint64_t> values;
  std::array<std::uint64_t, 4> timeCounts{};
  std::array<std::uint64_t, 4> cellCounts{};
  double hdSum = 0.0;
  double hwSum = 0.0;
  std::uint64_t faults = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const TrialRecord& t = first[i];
    auto [it, inserted] = hist.try_emplace(t.key);
    if (inserted) {
      it->second.key = t.key;
      it->second.outcome = t.outcome;
      it->second.value = t.value;
    }
    ++it->second.count;
    ++values[t.value];
    ++timeCounts[static_cast<std::size_t>(timeClassOf(t, goldenValue))];
    const CellClass cc = cellClassOf(t.outcome);
    ++cellCounts[static_cast<std::size_t>(cc)];
    hdSum += std::popcount(t.value ^ goldenValue);
    if (t.outcome != oracle::OutcomeKind::NoFault) ++faults;
    if (cc == CellClass::RegisterFault) {
      hwSum += std::popcount(t.value) - std::popcount(goldenValue);
      for (std::size_t r = 0; r < 16; ++r)
        if (t.finalState.r[r] != golden.r[r]) s.faultedRegisters.insert(fmt::format("r{}", r));
    }
  }
  const double total = static_cast<double>(n);
  for (auto& [key, e] : hist) {
    e.rate = static_cast<double>(e.count) / total;
    e.ratePct = std::floor(static_cast<double>(e.count) * 1000.0 / total) / 10.0;
    s.histogram.push_back(e);
  }
  std::stable_sort(s.histogram.begin(), s.histogram.end(),
                   [](const HistogramEntry& a, const HistogramEntry& b) { return a.count > b.count; });
  std::uint64_t best = 0;
  for (auto [v, c] : values)
    if (c > best) {
      best = c;
      s.modalValue = v;
    }
  s.modalHammingDistance = std::popcount(s.modalValue ^ goldenValue);
  s.meanHammingDistance = hdSum / total;
  s.faultRate = static_cast<double>(faults) / total;
  s.timeClass = static_cast<TimeClass>(std::max_element(timeCounts.begin(), timeCounts.end()) - timeCounts.begin());
  // The most frequent fault kind wins whenever any fault occurred.
  std::size_t dom = 0;
  for (std::size_t k = 1; k < 4; ++k)
    if (cellCounts[k] > 0 && (dom == 0 || cellCounts[k] > cellCounts[dom])) dom = k;
  s.cellClass = static_cast<CellClass>(dom);
  if (cellCounts[static_cast<std::size_t>(CellClass::RegisterFault)] > 0)
    s.meanHwIncrease = hwSum / static_cast<double>(cellCounts[static_cast<std::size_t>(CellClass::RegisterFault)]);
  return s;
}

}  // namespace

const char* timeClassName(TimeClass c) {
  switch (c) {
    case TimeClass::NoFault: return "no-fault";
    case TimeClass::OutputFault: return "output-fault";
    case TimeClass::Exception: return "exception";
    case TimeClass::Crash: return "crash";
  }
  return "?";
}

const char* cellClassName(CellClass c) {
  switch (c) {
    case CellClass::NoFault: return "no-fault";
    case CellClass::Crash: return "crash";
    case CellClass::Exception: return "exception";
    case CellClass::RegisterFault: return "register-fault";
  }
  return "?";
}

CampaignReport runCampaign(const CampaignSpec& spec) {
  spec.validate();
  programs::Program program;
  try {
    program = programs::load(spec.program);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  glitch::Golden golden;
  try {
    golden = glitch::computeGolden(program, spec.timing, spec.budgetFactor);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  CampaignReport rep;
  rep.spec = spec;
  rep.programName = program.name;
  rep.golden = dump::harvest(golden.run.state, program.watched);
  rep.goldenValue = resultValue(program, golden.run.state);

  const std::vector<Point> points = sweepPoints(spec);
  std::vector<double> times{spec.base.injectionTimeNs};
  if (spec.axis == Axis::Grid && spec.time) times = spec.time->values();
  const std::size_t perPoint = times.size() * spec.trialsPerPoint;
  const std::size_t total = points.size() * perPoint;

  rep.trials.resize(total);
  std::vector<std::optional<core::ArchState>> pendingState(total);
  std::vector<std::optional<std::size_t>> site(total);

  parallelIndex(total, spec.workers, [&](std::size_t i) {
    const Point& p = points[i / perPoint];
    const std::size_t j = i % perPoint;
    TrialRecord& t = rep.trials[i];
    t.point = p;
    t.trial = j;
    t.seed = glitch::deriveSeed(spec.seed, p.index, j);
    t.timeNs = spec.axis == Axis::Grid ? times[j / spec.trialsPerPoint] : p.timeNs;

    glitch::GlitchSpec g = spec.base;
    g.voltage = p.voltage;
    g.injectionTimeNs = t.timeNs;
    g.coupling = p.coupling;
    g.seed = t.seed;
    glitch::Injection inj = glitch::injectTrial(golden, g, spec.model);

    t.finalState = dump::harvest(inj.run.state, program.watched);
    t.termination = inj.run.termination;
    t.faultedTransfers = inj.faults.size();
    t.value = resultValue(program, inj.run.state);
    t.key = outcomeKey(rep.golden, t.finalState, t.termination);
    t.exception = inj.run.state.exception();
    if (t.key == "no-fault") {
      t.outcome = oracle::OutcomeKind::NoFault;
    } else if (inj.run.state.xpsr.exceptionNumber != 0) {
      t.outcome = oracle::OutcomeKind::ExceptionFault;
    } else if (t.termination == core::Termination::CycleBudgetExceeded) {
      t.outcome = oracle::OutcomeKind::Crash;
    } else {
      t.outcome = oracle::OutcomeKind::DataFlowFault;
      if (spec.explain && !inj.faults.empty()) {
        site[i] = faultSite(golden, inj.faults.front().event);
        if (site[i]) pendingState[i] = std::move(inj.run.state);
      }
    }
  });

  // Replacement searches run in trial order; each one is parallel inside.
  std::map<std::size_t, core::ArchState> preStates;
  std::map<std::pair<std::size_t, std::string>, std::pair<oracle::OutcomeKind, std::uint64_t>> cache;
  oracle::SearchOptions so;
  so.compare = spec.compare;
  so.cycleBudget = golden.budget;
  so.timing = spec.timing;
  so.workers = spec.workers;
  for (std::size_t i = 0; i < total; ++i) {
    if (!pendingState[i]) continue;
    TrialRecord& t = rep.trials[i];
    const std::size_t idx = *site[i];
    const auto ck = std::make_pair(idx, t.key);
    auto it = cache.find(ck);
    if (it == cache.end()) {
      auto ps = preStates.find(idx);
      if (ps == preStates.end()) ps = preStates.emplace(idx, oracle::preStateAt(program, idx, spec.timing)).first;
      const std::uint32_t target = golden.trace[idx].pc;
      const oracle::Explanation ex =
          oracle::explainExhaustive(ps->second, *pendingState[i], target, program, spec.oracleWidth, so);
      const oracle::Outcome o = oracle::classify(golden.run.state, *pendingState[i], ex, t.termination,
                                                 program.watched, spec.compare);
      it = cache.emplace(ck, std::make_pair(o.kind, static_cast<std::uint64_t>(ex.candidates.size()))).first;
    }
    t.outcome = it->second.first;
    t.candidates = it->second.second;
    pendingState[i].reset();
  }

  for (std::size_t k = 0; k < points.size(); ++k)
    rep.points.push_back(summarize(points[k], rep.trials.data() + k * perPoint, perPoint, rep.golden, rep.goldenValue));
  return rep;
}

Format parseFormat(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  if (s == "plotdata") return Format::PlotData;
  throw ConfigError("format: expected csv, json or plotdata");
}

std::string trialsCsv(const CampaignReport& r) {
  std::vector<std::string> head = {"point", "voltage", "time_ns", "x", "y", "coupling_instr", "coupling_data",
                                   "trial", "seed", "termination", "outcome", "exception", "candidates",
                                   "faulted_transfers", "value", "key"};
  const auto dumpHead = dump::csvHeader(r.golden);
  head.insert(head.end(), dumpHead.begin(), dumpHead.end());
  std::string out = fmt::format("{}\n", fmt::join(head, ","));
  for (const TrialRecord& t : r.trials) {
    std::vector<std::string> f = {std::to_string(t.point.index),
                                  fmt::format("{}", t.point.voltage),
                                  fmt::format("{}", t.timeNs),
                                  std::to_string(t.point.x),
                                  std::to_string(t.point.y),
                                  fmt::format("{}", t.point.coupling.instrBus),
                                  fmt::format("{}", t.point.coupling.dataBus),
                                  std::to_string(t.trial),
                                  std::to_string(t.seed),
                                  core::terminationName(t.termination),
                                  oracle::outcomeKindName(t.outcome),
                                  t.exception == core::ExceptionKind::None ? "" : core::exceptionName(t.exception),
                                  std::to_string(t.candidates),
                                  std::to_string(t.faultedTransfers),
                                  dump::hex32(t.value),
                                  t.key};
    const auto df = dump::csvFields(t.finalState);
    f.insert(f.end(), df.begin(), df.end());
    out += fmt::format("{}\n", fmt::join(f, ","));
  }
  return out;
}

std::string reportJson(const CampaignReport& r) {
  using J = nlohmann::ordered_json;
  J j;
  j["program"] = r.programName;
  j["axis"] = axisName(r.spec.axis);
  j["seed"] = r.spec.seed;
  j["trials_per_point"] = r.spec.trialsPerPoint;
  j["golden_value"] = dump::hex32(r.goldenValue);
  j["golden_cycles"] = r.golden.cycles;
  J pts = J::array();
  for (const PointSummary& s : r.points) {
    J p;
    p["index"] = s.point.index;
    p["voltage"] = s.point.voltage;
    p["time_ns"] = s.point.timeNs;
    if (r.spec.axis == Axis::Grid) {
      p["x"] = s.point.x;
      p["y"] = s.point.y;
      p["x_um"] = s.point.x * r.spec.grid.stepUm;
      p["y_um"] = s.point.y * r.spec.grid.stepUm;
    }
    p["coupling_instr"] = s.point.coupling.instrBus;
    p["coupling_data"] = s.point.coupling.dataBus;
    p["modal_value"] = dump::hex32(s.modalValue);
    p["modal_hamming_distance"] = s.modalHammingDistance;
    p["mean_hamming_distance"] = s.meanHammingDistance;
    p["fault_rate"] = s.faultRate;
    p["time_class"] = timeClassName(s.timeClass);
    p["cell_class"] = cellClassName(s.cellClass);
    p["mean_hw_increase"] = s.meanHwIncrease;
    p["faulted_registers"] = J(std::vector<std::string>(s.faultedRegisters.begin(), s.faultedRegisters.end()));
    J h = J::array();
    for (const HistogramEntry& e : s.histogram) {
      J x;
      x["key"] = e.key;
      x["outcome"] = oracle::outcomeKindName(e.outcome);
      x["value"] = dump::hex32(e.value);
      x["count"] = e.count;
      x["rate"] = e.rate;
      x["rate_pct"] = e.ratePct;
      h.push_back(std::move(x));
    }
    p["histogram"] = std::move(h);
    pts.push_back(std::move(p));
  }
  j["points"] = std::move(pts);
  return j.dump(2) + "\n";
}

std::string plotData(const CampaignReport& r) {
  std::string out = fmt::format("# program {} axis {} golden {}\n", r.programName, axisName(r.spec.axis),
                                dump::hex32(r.goldenValue));
  switch (r.spec.axis) {
    case Axis::None:
    case Axis::Voltage:
      out += "\n# series voltage_vs_modal_hamming_distance\n# voltage hd\n";
      for (const auto& s : r.points) out += fmt::format("{} {}\n", s.point.voltage, s.modalHammingDistance);
      out += "\n# series voltage_vs_mean_hamming_distance\n# voltage mean_hd\n";
      for (const auto& s : r.points) out += fmt::format("{} {:.6f}\n", s.point.voltage, s.meanHammingDistance);
      break;
    case Axis::Time:
      out += "\n# series time_vs_class\n# time_ns class_id class value\n";
      for (const auto& s : r.points)
        out += fmt::format("{} {} {} {}\n", s.point.timeNs, static_cast<int>(s.timeClass), timeClassName(s.timeClass),
                           dump::hex32(s.modalValue));
      break;
    case Axis::Grid:
      out += "\n# series grid_heat\n# x_um y_um class_id class mean_hw_increase\n";
      for (const auto& s : r.points)
        out += fmt::format("{} {} {} {} {:.6f}\n", s.point.x * r.spec.grid.stepUm, s.point.y * r.spec.grid.stepUm,
                           static_cast<int>(s.cellClass), cellClassName(s.cellClass), s.meanHwIncrease);
      break;
  }
  return out;
}

std::vector<std::string> emitReport(const CampaignReport& r, Format f, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  std::string name;
  std::string body;
  switch (f) {
    case Format::Csv: name = "trials.csv", body = trialsCsv(r); break;
    case Format::Json: name = "report.json", body = reportJson(r); break;
    case Format::PlotData: name = "plot.dat", body = plotData(r); break;
  }
  const std::string path = (fs::path(dir) / name).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << body;
  out.close();
  if (!out) throw IoError("cannot write '" + path + "'");
  return {path};
}

}  // namespace emfi::campaign
