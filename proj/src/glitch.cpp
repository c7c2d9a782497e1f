#include "emfi/glitch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace emfi::glitch {

void GlitchSpec::validate() const {
  if (!std::isfinite(voltage) || !std::isfinite(injectionTimeNs) || !std::isfinite(widthNs))
    throw std::invalid_argument("glitch parameters must be finite");
  if (widthNs < 10.0) throw std::invalid_argument("pulse width must be at least 10 ns");
  for (double c : {coupling.instrBus, coupling.dataBus})
    if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("coupling must lie in [0, 1]");
}

double widthAttenuation(double widthNs) { return std::min(1.0, 10.0 / widthNs); }

double pulseIntensity(double voltage, double widthNs, double riseTimeNs) {
  return std::abs(voltage) / riseTimeNs * widthAttenuation(widthNs);
}

std::array<GlitchEdge, 2> edgeEvents(const GlitchSpec& g, double riseTimeNs) {
  const double i = pulseIntensity(g.voltage, g.widthNs, riseTimeNs);
  return {GlitchEdge{g.injectionTimeNs, i}, GlitchEdge{g.injectionTimeNs + g.widthNs, i}};
}

void CaptureModel::validate() const {
  if (!(slope > 0.0) || !std::isfinite(slope)) throw std::invalid_argument("capture slope must be positive");
  if (!(riseTimeNs > 0.0)) throw std::invalid_argument("rise time must be positive");
  for (const BusCapture* b : {&data, &instr})
    for (double t : b->thresholds)
      if (!std::isfinite(t)) throw std::invalid_argument("capture thresholds must be finite");
}

Probabilities captureProbabilities(double intensity, double coupling, const Lanes& thresholds, double slope) {
  Probabilities p{};
  const double x = intensity * coupling;
  for (std::size_t i = 0; i < 32; ++i) p[i] = 1.0 / (1.0 + std::exp(-(x - thresholds[i]) / slope));
  return p;
}

Probabilities captureProbabilities(double intensity, double coupling, const CaptureModel& m, bus::Bus b) {
  return captureProbabilities(intensity, coupling, m.capture(b).thresholds, m.slope);
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E37'79B9'7F4A'7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58'476D'1CE4'E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D0'49BB'1331'11EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t deriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0xD6E8'FEB8'6659'FD93ull));
}

std::uint32_t applyGlitch(std::uint32_t word, std::uint32_t precharge, const Probabilities& p, Rng& rng) {
  std::uint32_t out = word;
  for (unsigned i = 0; i < 32; ++i) {
    const std::uint32_t bit = 1u << i;
    if (rng.uniform() < p[i]) out = (out & ~bit) | (precharge & bit);
  }
  return out;
}

std::uint32_t applyGlitchComplex(std::uint32_t word, const Probabilities& p, Rng& rng) {
  std::uint32_t captured = 0;
  for (unsigned i = 0; i < 32; ++i)
    if (rng.uniform() < p[i]) captured |= 1u << i;
  std::uint32_t target = 0;
  for (unsigned i = 0; i < 32; ++i)
    if (rng.uniform() < 0.5) target |= 1u << i;
  return (word & ~captured) | (target & captured);
}

std::string formatThresholds(const CaptureModel& m, const std::string& header) {
  std::string out;
  std::istringstream h(header);
  for (std::string line; std::getline(h, line);) out += "# " + line + "\n";
  out += "# data bus lanes 0..31\n";
  for (double t : m.data.thresholds) out += fmt::format("{:.9f}\n", t);
  out += "# instruction bus lanes 0..31\n";
  for (double t : m.instr.thresholds) out += fmt::format("{:.9f}\n", t);
  return out;
}

void parseThresholds(const std::string& text, CaptureModel& m) {
  std::vector<double> v;
  std::istringstream in(text);
  int lineNo = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineNo;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    std::string extra;
    if (used != tok.size() || (ls >> extra) || !std::isfinite(x))
      throw std::runtime_error(fmt::format("thresholds line {}: expected one real", lineNo));
    v.push_back(x);
  }
  if (v.size() != 64) throw std::runtime_error(fmt::format("thresholds: expected 64 values, found {}", v.size()));
  std::copy(v.begin(), v.begin() + 32, m.data.thresholds.begin());
  std::copy(v.begin() + 32, v.end(), m.instr.thresholds.begin());
}

void readThresholds(const std::string& path, CaptureModel& m) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read thresholds file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  parseThresholds(ss.str(), m);
}

void writeThresholds(const std::string& path, const CaptureModel& m, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write thresholds file '" + path + "'");
  out << formatThresholds(m, header);
  if (!out) throw std::runtime_error("cannot write thresholds file '" + path + "'");
}

Golden computeGolden(const programs::Program& p, const bus::TimingConfig& timing, unsigned budgetFactor,
                     std::uint64_t searchBudget) {
  Golden g;
  g.program = p;
  g.timing = timing;
  core::RunOptions opt;
  opt.cycleBudget = searchBudget;
  opt.timing = timing;
  opt.events = &g.events;
  opt.trace = &g.trace;
  g.run = core::runToWatchpoint(p.initial, p.watchpoint, opt);
  if (g.run.termination != core::Termination::WatchpointHit)
    throw std::runtime_error("program '" + p.name + "' does not reach its watchpoint");
  std::stable_sort(g.events.begin(), g.events.end(),
                   [](const bus::TransferEvent& a, const bus::TransferEvent& b) { return a.latchTimeNs < b.latchTimeNs; });
  g.budget = std::max<std::uint64_t>(1, g.run.state.cycles) * budgetFactor;
  return g;
}

namespace {

class GlitchObserver final : public bus::TransferObserver {
 public:
  GlitchObserver(const GlitchSpec& g, const CaptureModel& m, double window, Injection& out)
      : edges_(edgeEvents(g, m.riseTimeNs)), g_(g), m_(m), window_(window), rng_(g.seed), out_(out) {}

  std::uint32_t onTransfer(const bus::TransferEvent& e) override {
    double intensity = -1.0;
    for (const GlitchEdge& edge : edges_) {
      const double t = edge.timeNs;
      if (bus::latchVulnerable(e, std::span<const double>(&t, 1), window_)) intensity = std::max(intensity, edge.intensity);
    }
    if (intensity < 0.0) return e.word;
    out_.touched = true;
    const Probabilities p = captureProbabilities(intensity, g_.coupling.of(e.bus), m_, e.bus);
    const bool complex = e.bus == bus::Bus::InstructionBus && m_.complexInstrPrecharge;
    const std::uint32_t v =
        complex ? applyGlitchComplex(e.word, p, rng_) : applyGlitch(e.word, m_.capture(e.bus).precharge, p, rng_);
    if (v != e.word) out_.faults.push_back({e, v});
    return v;
  }

 private:
  std::array<GlitchEdge, 2> edges_;
  const GlitchSpec& g_;
  const CaptureModel& m_;
  double window_;
  Rng rng_;
  Injection& out_;
};

}  // namespace

std::vector<bus::TransferEvent> vulnerableEvents(const Golden& golden, const GlitchSpec& g, const CaptureModel& m) {
  const auto edges = edgeEvents(g, m.riseTimeNs);
  const std::array<double, 2> times{edges[0].timeNs, edges[1].timeNs};
  std::vector<bus::TransferEvent> out;
  for (const auto& e : golden.events)
    if (bus::latchVulnerable(e, times, golden.timing.setupWindowNs)) out.push_back(e);
  return out;
}

Injection injectTrial(const Golden& golden, const GlitchSpec& g, const CaptureModel& m) {
  Injection inj;
  if (vulnerableEvents(golden, g, m).empty()) {
    inj.run = golden.run;
    return inj;
  }
  GlitchObserver obs(g, m, golden.timing.setupWindowNs, inj);
  core::RunOptions opt;
  opt.cycleBudget = golden.budget;
  opt.timing = golden.timing;
  opt.observer = &obs;
  inj.run = core::runToWatchpoint(golden.program.initial, golden.program.watchpoint, opt);
  return inj;
}

}  // namespace emfi::glitch
