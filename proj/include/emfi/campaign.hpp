#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "emfi/bus.hpp"
#include "emfi/dump.hpp"
#include "emfi/glitch.hpp"
#include "emfi/oracle.hpp"
#include "emfi/programs.hpp"

namespace emfi::campaign {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inclusive arithmetic progression.
struct Range {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  std::vector<double> values() const;
};

enum class Axis : std::uint8_t { None, Voltage, Time, Grid };

const char* axisName(Axis a);

// Synthetic probe-position map: a sum of Gaussian bumps per bus over a
// square grid, bump centres drawn from `seed`.
struct CouplingField {
  int nx = 15;
  int ny = 15;
  double stepUm = 200.0;
  std::uint64_t seed = 7;
  int bumpsPerBus = 1;
  double sigmaCells = 2.0;
  double peak = 1.0;

  glitch::Coupling at(int x, int y) const;
};

struct CampaignSpec {
  std::string program = "ldr-r4";
  Axis axis = Axis::None;
  Range voltage{170.0, 190.0, 2.0};
  // Time axis, or each grid cell's time sub-sweep; unset means the base
  // injection time.
  std::optional<Range> time;
  CouplingField grid;
  std::uint64_t trialsPerPoint = 1;
  std::uint64_t seed = 1;
  glitch::GlitchSpec base;
  glitch::CaptureModel model = glitch::CaptureModel::calibrated();
  bus::TimingConfig timing;
  unsigned budgetFactor = 4;
  // Run the replacement search for faulty outputs that are neither traps
  // nor crashes; otherwise they are reported as DataFlowFault unexamined.
  bool explain = true;
  oracle::WidthPolicy oracleWidth = oracle::WidthPolicy::Only16;
  oracle::CompareOptions compare;
  unsigned workers = 0;  // 0 = hardware concurrency

  void validate() const;  // throws ConfigError
};

// key = value lines, `#` comments. Relative paths resolve against baseDir.
// Throws ConfigError.
CampaignSpec parseConfig(const std::string& text, const std::string& baseDir = ".");
CampaignSpec readConfig(const std::string& path);  // IoError when unreadable
// Applies one key; shared by the file parser and CLI overrides.
void applyKey(CampaignSpec& spec, const std::string& key, const std::string& value, const std::string& baseDir = ".");

struct Point {
  std::size_t index = 0;
  double voltage = 0.0;
  double timeNs = 0.0;
  int x = -1;
  int y = -1;
  glitch::Coupling coupling;
};

struct TrialRecord {
  Point point;
  std::uint64_t trial = 0;
  std::uint64_t seed = 0;
  double timeNs = 0.0;  // differs from point.timeNs inside a grid cell's time sweep
  dump::StateDump finalState;
  core::Termination termination = core::Termination::WatchpointHit;
  oracle::OutcomeKind outcome = oracle::OutcomeKind::NoFault;
  core::ExceptionKind exception = core::ExceptionKind::None;
  std::uint64_t candidates = 0;  // explaining encodings, classes counted once
  std::uint32_t value = 0;       // the program's result word
  std::string key;               // histogram key
  std::size_t faultedTransfers = 0;
};

struct HistogramEntry {
  std::string key;
  oracle::OutcomeKind outcome = oracle::OutcomeKind::NoFault;
  std::uint32_t value = 0;
  std::uint64_t count = 0;
  double rate = 0.0;
  double ratePct = 0.0;  // truncated to 0.1 %
};

enum class TimeClass : std::uint8_t { NoFault, OutputFault, Exception, Crash };
const char* timeClassName(TimeClass c);

enum class CellClass : std::uint8_t { NoFault, Crash, Exception, RegisterFault };
const char* cellClassName(CellClass c);

struct PointSummary {
  Point point;
  std::vector<HistogramEntry> histogram;  // descending count, then key
  std::uint32_t modalValue = 0;
  int modalHammingDistance = 0;
  double meanHammingDistance = 0.0;
  double faultRate = 0.0;
  TimeClass timeClass = TimeClass::NoFault;  // most frequent
  CellClass cellClass = CellClass::NoFault;  // dominant fault class
  double meanHwIncrease = 0.0;               // over register-fault trials
  std::set<std::string> faultedRegisters;
};

struct CampaignReport {
  CampaignSpec spec;
  std::string programName;
  std::uint32_t goldenValue = 0;
  dump::StateDump golden;
  std::vector<TrialRecord> trials;  // point-major, then trial index
  std::vector<PointSummary> points;
};

std::vector<Point> sweepPoints(const CampaignSpec& spec);

// Result word of a program: its .result register or memory word, else r0.
std::uint32_t resultValue(const programs::Program& p, const core::ArchState& s);

// Throws ConfigError before any trial when the program or spec is invalid.
CampaignReport runCampaign(const CampaignSpec& spec);

// Histogram key of one harvested state against the golden one.
std::string outcomeKey(const dump::StateDump& golden, const dump::StateDump& observed, core::Termination t);

enum class Format : std::uint8_t { Csv, Json, PlotData };
Format parseFormat(const std::string& s);  // throws ConfigError

std::string trialsCsv(const CampaignReport& r);
std::string reportJson(const CampaignReport& r);
std::string plotData(const CampaignReport& r);

// Writes into `dir` (created if needed) and returns the files written.
// Throws IoError when the directory is not writable.
std::vector<std::string> emitReport(const CampaignReport& r, Format f, const std::string& dir);

}  // namespace emfi::campaign
