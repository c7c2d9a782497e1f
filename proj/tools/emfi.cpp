// emfi: golden runs, glitch campaigns, replacement search and calibration.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include "CLI11.hpp"

#include "emfi/assembler.hpp"
#include "emfi/calibration.hpp"
#include "emfi/campaign.hpp"
#include "emfi/dump.hpp"
#include "emfi/glitch.hpp"
#include "emfi/oracle.hpp"
#include "emfi/programs.hpp"

using namespace emfi;

namespace {

constexpr int kConfigError = 1;
constexpr int kIoError = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials;
  std::optional<unsigned> workers;
  std::string out;
  std::string format = "csv";
  bool compareMemory = false;
  bool comparePc = false;
  std::vector<std::string> sets;
};

void addCommon(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value campaign file");
  app->add_option("--seed", c.seed, "campaign seed");
  app->add_option("--trials", c.trials, "trials per point");
  app->add_option("--workers", c.workers, "worker threads (0 = all cores)");
  app->add_option("--out", c.out, "output directory (default: stdout)");
  app->add_option("--format", c.format, "csv, json or plotdata")->check(CLI::IsMember({"csv", "json", "plotdata"}));
  app->add_flag("--compare-memory", c.compareMemory, "also compare watched memory words");
  app->add_flag("--compare-pc", c.comparePc, "also compare r15");
  app->add_option("--set", c.sets, "override a config key, key=value");
}

campaign::CampaignSpec buildSpec(const Common& c) {
  campaign::CampaignSpec s = c.config.empty() ? campaign::CampaignSpec{} : campaign::readConfig(c.config);
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw campaign::ConfigError("--set expects key=value, got '" + kv + "'");
    campaign::applyKey(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) s.seed = *c.seed;
  if (c.trials) s.trialsPerPoint = *c.trials;
  if (c.workers) s.workers = *c.workers;
  if (c.compareMemory) s.compare.memory = true;
  if (c.comparePc) s.compare.pc = true;
  return s;
}

void writeOut(const std::string& dir, const std::string& name, const std::string& body) {
  if (dir.empty()) {
    std::cout << body;
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const std::string path = (std::filesystem::path(dir) / name).string();
  std::ofstream f(path, std::ios::binary);
  if (ec || !f) throw campaign::IoError("cannot write '" + path + "'");
  f << body;
  if (!f) throw campaign::IoError("cannot write '" + path + "'");
  std::cerr << path << "\n";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw campaign::IoError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int emitCampaign(const campaign::CampaignReport& r, const Common& c) {
  const campaign::Format f = campaign::parseFormat(c.format);
  if (c.out.empty()) {
    switch (f) {
      case campaign::Format::Csv: std::cout << campaign::trialsCsv(r); break;
      case campaign::Format::Json: std::cout << campaign::reportJson(r); break;
      case campaign::Format::PlotData: std::cout << campaign::plotData(r); break;
    }
  } else {
    for (const auto& p : campaign::emitReport(r, f, c.out)) std::cerr << p << "\n";
  }
  return 0;
}

std::uint32_t parseAddress(const programs::Program& p, const std::string& s) {
  if (auto it = p.symbols.find(s); it != p.symbols.end()) return it->second;
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(s, &used, 0);
    if (used == s.size()) return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
  }
  throw campaign::ConfigError("target: not an address or label: '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electromagnetic glitch fault-injection simulator for a Cortex-M3 subset"};
  app.require_subcommand(1);

  // run
  std::string runProgram;
  std::string runFormat = "csv";
  std::string runOut;
  std::string chronogram;
  unsigned waitStates = bus::TimingConfig{}.flashWaitStates;
  auto* run = app.add_subcommand("run", "golden execution and state dump");
  run->add_option("program", runProgram, "built-in id or assembly file")->required();
  run->add_option("--format", runFormat, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--out", runOut, "output directory (default: stdout)");
  run->add_option("--chronogram", chronogram, "also print bus transfers: text or json")
      ->check(CLI::IsMember({"text", "json"}));
  run->add_option("--flash-wait-states", waitStates, "Flash wait states");

  // inject / sweep / cartography
  Common injectOpt, sweepOpt, cartoOpt;
  auto* inject = app.add_subcommand("inject", "one glitch, one execution");
  addCommon(inject, injectOpt);
  std::string axis;
  auto* sweep = app.add_subcommand("sweep", "voltage or injection-time sweep");
  addCommon(sweep, sweepOpt);
  sweep->add_option("--axis", axis, "voltage or time")->required()->check(CLI::IsMember({"voltage", "time"}));
  auto* carto = app.add_subcommand("cartography", "synthetic X-Y probe-position grid");
  addCommon(carto, cartoOpt);

  // explain
  std::string exProgram, exTarget, exGolden, exObserved, exOut, exWidth = "both";
  bool exMemory = false, exPc = false, exCycles = false;
  unsigned exWorkers = 0;
  auto* explain = app.add_subcommand("explain", "search single-instruction replacements for an observation");
  explain->add_option("--program", exProgram, "built-in id or assembly file")->required();
  explain->add_option("--target", exTarget, "address or label of the replaced instruction")->required();
  explain->add_option("--golden", exGolden, "golden state dump (csv or json)")->required();
  explain->add_option("--observed", exObserved, "observed state dump (csv or json)")->required();
  explain->add_option("--width", exWidth, "16, 32 or both")->check(CLI::IsMember({"16", "32", "both"}));
  explain->add_option("--out", exOut, "output directory (default: stdout)");
  explain->add_option("--workers", exWorkers, "worker threads (0 = all cores)");
  explain->add_flag("--compare-memory", exMemory, "also compare watched memory words");
  explain->add_flag("--compare-pc", exPc, "also compare r15");
  explain->add_flag("--compare-cycles", exCycles, "also require equal cycle counts");

  // calibrate
  std::string calTarget, calOut;
  auto* calibrate = app.add_subcommand("calibrate", "fit capture thresholds to a voltage/value table");
  calibrate->add_option("target", calTarget, "target file (default: the built-in table)");
  calibrate->add_option("--out", calOut, "thresholds file to write (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) {
      const programs::Program p = programs::load(runProgram);
      bus::TimingConfig timing;
      timing.flashWaitStates = waitStates;
      const glitch::Golden g = glitch::computeGolden(p, timing);
      const dump::StateDump d = dump::harvest(g.run.state, p.watched);
      const double us = static_cast<double>(g.run.state.cycles) * timing.clock.periodNs() / 1000.0;
      std::cerr << fmt::format("{}: {} after {} instructions, {} cycles ({:.3f} us)\n", p.name,
                               core::terminationName(g.run.termination), g.run.instructions, g.run.state.cycles, us);
      writeOut(runOut, runFormat == "json" ? "golden.json" : "golden.csv",
               runFormat == "json" ? dump::toJson(d) + "\n" : dump::toCsv(d));
      if (chronogram == "text") writeOut(runOut, "chronogram.txt", bus::chronogramText(g.events, timing.clock.periodNs()));
      if (chronogram == "json") writeOut(runOut, "chronogram.json", bus::chronogramJson(g.events, timing.clock.periodNs()));
      return 0;
    }
    if (*inject) {
      campaign::CampaignSpec s = buildSpec(injectOpt);
      s.axis = campaign::Axis::None;
      const auto r = campaign::runCampaign(s);
      for (const auto& e : r.points.front().histogram)
        std::cerr << fmt::format("{} {} x{}\n", oracle::outcomeKindName(e.outcome), e.key, e.count);
      return emitCampaign(r, injectOpt);
    }
    if (*sweep) {
      campaign::CampaignSpec s = buildSpec(sweepOpt);
      s.axis = axis == "voltage" ? campaign::Axis::Voltage : campaign::Axis::Time;
      return emitCampaign(campaign::runCampaign(s), sweepOpt);
    }
    if (*carto) {
      campaign::CampaignSpec s = buildSpec(cartoOpt);
      s.axis = campaign::Axis::Grid;
      return emitCampaign(campaign::runCampaign(s), cartoOpt);
    }
    if (*explain) {
      const programs::Program p = programs::load(exProgram);
      const std::uint32_t target = parseAddress(p, exTarget);
      const dump::StateDump gd = dump::parse(slurp(exGolden));
      const dump::StateDump od = dump::parse(slurp(exObserved));
      const core::ArchState golden = dump::restore(gd, p.initial);
      const core::ArchState observed = dump::restore(od, p.initial);
      oracle::SearchOptions o;
      o.compare = {exMemory, exPc, exCycles};
      o.workers = exWorkers;
      const core::ArchState pre = oracle::preState(p, target, o.timing);
      const auto width = exWidth == "16"   ? oracle::WidthPolicy::Only16
                         : exWidth == "32" ? oracle::WidthPolicy::Only32
                                           : oracle::WidthPolicy::Both;
      const oracle::Explanation ex = oracle::explainExhaustive(pre, observed, target, p, width, o);
      // A dump does not say how the run ended; a zero exception number with
      // the PC away from the watchpoint means the watchdog fired.
      const core::Termination term = od.r[15] == p.watchpoint || od.xpsr.exceptionNumber != 0
                                         ? core::Termination::WatchpointHit
                                         : core::Termination::CycleBudgetExceeded;
      const oracle::Outcome out = oracle::classify(golden, observed, ex, term, p.watched, o.compare);
      writeOut(exOut, "explanation.json", oracle::reportJson(ex, out));
      return 0;
    }
    if (*calibrate) {
      const calibration::Target t =
          calTarget.empty() ? calibration::defaultTarget() : calibration::readTarget(calTarget);
      const calibration::FitResult f = calibration::fit(t);
      std::string header = fmt::format("fitted to {} (seed {}), objective {:.6g}",
                                       calTarget.empty() ? "the built-in target" : calTarget, t.seed, f.objective);
      for (std::size_t k = 0; k < t.rows.size(); ++k)
        std::cerr << fmt::format("{:6.1f} V  0x{:08x}  target {:.2f}  model {:.4f}\n", t.rows[k].voltage,
                                 t.rows[k].modal, t.rows[k].rate, f.rates[k]);
      if (calOut.empty())
        std::cout << glitch::formatThresholds(f.model, header);
      else
        glitch::writeThresholds(calOut, f.model, header);
      return 0;
    }
  } catch (const campaign::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const assembler::AssemblyError& e) {
    std::cerr << "assembly error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIoError;
  }
  return 0;
}
