#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "emfi/bus.hpp"
#include "emfi/core.hpp"
#include "emfi/programs.hpp"

namespace emfi::glitch {

struct Coupling {
  double instrBus = 0.0;
  double dataBus = 0.0;

  double of(bus::Bus b) const { return b == bus::Bus::InstructionBus ? instrBus : dataBus; }
};

struct GlitchSpec {
  double voltage = 190.0;  // V, signed; only the magnitude matters
  double widthNs = 10.0;
  double injectionTimeNs = 0.0;  // from the first fetch of the target code
  Coupling coupling;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument.
  void validate() const;
};

struct GlitchEdge {
  double timeNs = 0.0;
  double intensity = 0.0;
};

inline constexpr double kRiseTimeNs = 2.0;
inline constexpr double kDefaultSlope = 0.07;

double widthAttenuation(double widthNs);
double pulseIntensity(double voltage, double widthNs, double riseTimeNs = kRiseTimeNs);

// Rising edge at the injection time, falling edge one width later.
std::array<GlitchEdge, 2> edgeEvents(const GlitchSpec& g, double riseTimeNs = kRiseTimeNs);

using Lanes = std::array<double, 32>;

struct BusCapture {
  std::uint32_t precharge = 0;
  Lanes thresholds{};  // intensity units, one per bit lane
};

struct CaptureModel {
  BusCapture data{0xFFFF'FFFF, {}};
  BusCapture instr{0x0000'0000, {}};
  double slope = kDefaultSlope;
  double riseTimeNs = kRiseTimeNs;
  // Captured instruction-bus lanes take a random value instead of the
  // precharge bit.
  bool complexInstrPrecharge = false;

  // Shipped calibration.
  static CaptureModel calibrated();

  const BusCapture& capture(bus::Bus b) const { return b == bus::Bus::InstructionBus ? instr : data; }
  void validate() const;
};

using Probabilities = std::array<double, 32>;

// Probability that each lane latches the capture target instead of the
// driven bit.
Probabilities captureProbabilities(double intensity, double coupling, const Lanes& thresholds, double slope);
Probabilities captureProbabilities(double intensity, double coupling, const CaptureModel& m, bus::Bus b);

// mt19937_64 with a portable uniform and normal transform so streams are
// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double normal();
  std::uint64_t next() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

std::uint64_t deriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Draws exactly 32 uniforms.
std::uint32_t applyGlitch(std::uint32_t word, std::uint32_t precharge, const Probabilities& p, Rng& rng);
// Draws exactly 64 uniforms: capture decisions, then captured values.
std::uint32_t applyGlitchComplex(std::uint32_t word, const Probabilities& p, Rng& rng);

// 64 reals, data lanes 0..31 then instruction lanes 0..31. Blank lines and
// `#` comments are ignored. Throw std::runtime_error.
void readThresholds(const std::string& path, CaptureModel& m);
void writeThresholds(const std::string& path, const CaptureModel& m, const std::string& header = {});
std::string formatThresholds(const CaptureModel& m, const std::string& header = {});
void parseThresholds(const std::string& text, CaptureModel& m);

struct Golden {
  programs::Program program;
  bus::TimingConfig timing;
  core::RunResult run;
  std::vector<bus::TransferEvent> events;  // ascending latch time
  std::vector<bus::TraceStep> trace;
  std::uint64_t budget = 0;  // watchdog for faulted runs
};

// Throws std::runtime_error when the program does not reach its watchpoint.
Golden computeGolden(const programs::Program& p, const bus::TimingConfig& timing = {}, unsigned budgetFactor = 4,
                     std::uint64_t searchBudget = 1'000'000);

struct AppliedFault {
  bus::TransferEvent event;
  std::uint32_t latched = 0;
};

struct Injection {
  core::RunResult run;
  std::vector<AppliedFault> faults;  // only words that actually changed
  bool touched = false;              // some transfer was inside a glitch window
};

// Golden transfers that any edge of g can reach.
std::vector<bus::TransferEvent> vulnerableEvents(const Golden& golden, const GlitchSpec& g, const CaptureModel& m);

// One pulse, one execution. Randomness comes only from g.seed.
Injection injectTrial(const Golden& golden, const GlitchSpec& g, const CaptureModel& m);

}  // namespace emfi::glitch
