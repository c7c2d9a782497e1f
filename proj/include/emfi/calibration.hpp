#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emfi/glitch.hpp"

namespace emfi::calibration {

// One measured operating point: the most frequent loaded value and how
// often it occurred.
struct TargetRow {
  double voltage = 0.0;
  std::uint32_t modal = 0;
  double rate = 1.0;
};

// Text form, one item per line, `#` comments:
//   base 0x12345678
//   width_ns 10
//   coupling 1
//   seed 1
//   <voltage> <modal value> <rate>      (ascending voltage)
struct Target {
  std::uint32_t base = 0x1234'5678;
  double widthNs = 10.0;
  double coupling = 1.0;
  std::uint64_t seed = 1;
  std::vector<TargetRow> rows;

  double intensity(const TargetRow& r) const;
};

Target parseTarget(const std::string& text);
Target readTarget(const std::string& path);
// The shipped single-LDR voltage sweep.
const Target& defaultTarget();
std::string defaultTargetText();

struct FitOptions {
  double slope = glitch::kDefaultSlope;
  double ridge = 0.01;   // pull toward the evenly spread prior
  double margin = 0.02;  // keep each lane strictly inside its interval
  int sweeps = 200;
  int sectionSteps = 60;
};

struct FitResult {
  glitch::CaptureModel model;
  std::vector<int> fittedLanes;  // data lanes constrained by the target
  double objective = 0.0;
  std::vector<double> rates;  // model probability of each row's modal value
};

// Data lanes the target moves (clear in base, set by some row) are fitted by
// coordinate descent; every other lane, on both buses, is a seeded normal
// draw with the fitted lanes' mean and spread. Throws std::invalid_argument
// when the rows do not form a set-at-1 staircase.
FitResult fit(const Target& t, const FitOptions& o = {});

// Probability of observing exactly `value` when a word is captured at the
// given intensity (after coupling) toward an all-ones precharge.
double outcomeProbability(std::uint32_t base, std::uint32_t value, double intensity, const glitch::Lanes& thresholds,
                          double slope);

// Value each lane lands on when probabilities are rounded at one half.
std::uint32_t roundedOutcome(std::uint32_t base, std::uint32_t precharge, double intensity,
                             const glitch::Lanes& thresholds, double slope);

}  // namespace emfi::calibration
