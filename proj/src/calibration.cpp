#include "emfi/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace emfi::calibration {

double Target::intensity(const TargetRow& r) const {
  return glitch::pulseIntensity(r.voltage, widthNs) * coupling;
}

namespace {

constexpr const char* kDefaultTarget = R"(# Most frequent value loaded by LDR r4,[pc,#44] per pulse voltage.
base 0x12345678
width_ns 10
coupling 1
seed 1
170 0x12345678 1.00
172 0x12345678 1.00
174 0x92345678 0.73
176 0xFE345678 0.30
178 0xFFF45678 0.53
180 0xFFFD5678 0.50
182 0xFFFF7F78 0.46
184 0xFFFFFFFB 0.40
186 0xFFFFFFFF 1.00
188 0xFFFFFFFF 1.00
190 0xFFFFFFFF 1.00
)";

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t parseU(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used, 0);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(fmt::format("calibration target line {}: bad integer '{}'", line, s));
}

double parseD(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(fmt::format("calibration target line {}: bad number '{}'", line, s));
}

}  // namespace

Target parseTarget(const std::string& text) {
  Target t;
  std::istringstream in(text);
  int lineNo = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineNo;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string w; ls >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    if (tok.size() == 2) {
      const std::string& k = tok[0];
      if (k == "base")
        t.base = static_cast<std::uint32_t>(parseU(tok[1], lineNo));
      else if (k == "width_ns")
        t.widthNs = parseD(tok[1], lineNo);
      else if (k == "coupling")
        t.coupling = parseD(tok[1], lineNo);
      else if (k == "seed")
        t.seed = parseU(tok[1], lineNo);
      else
        throw std::invalid_argument(fmt::format("calibration target line {}: unknown key '{}'", lineNo, k));
    } else if (tok.size() == 3) {
      TargetRow r{parseD(tok[0], lineNo), static_cast<std::uint32_t>(parseU(tok[1], lineNo)), parseD(tok[2], lineNo)};
      if (r.rate < 0.0 || r.rate > 1.0)
        throw std::invalid_argument(fmt::format("calibration target line {}: rate outside [0, 1]", lineNo));
      t.rows.push_back(r);
    } else {
      throw std::invalid_argument(fmt::format("calibration target line {}: expected 2 or 3 fields", lineNo));
    }
  }
  if (t.rows.size() < 2) throw std::invalid_argument("calibration target needs at least two rows");
  if (t.widthNs < 10.0) throw std::invalid_argument("calibration target width must be at least 10 ns");
  if (!(t.coupling > 0.0 && t.coupling <= 1.0)) throw std::invalid_argument("calibration coupling must lie in (0, 1]");
  return t;
}

Target readTarget(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read calibration target '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parseTarget(ss.str());
}

std::string defaultTargetText() { return kDefaultTarget; }

const Target& defaultTarget() {
  static const Target t = parseTarget(kDefaultTarget);
  return t;
}

double outcomeProbability(std::uint32_t base, std::uint32_t value, double intensity, const glitch::Lanes& thresholds,
                          double slope) {
  if ((value & base) != base) return 0.0;
  double p = 1.0;
  for (unsigned i = 0; i < 32; ++i) {
    if (base >> i & 1u) continue;
    const double q = logistic((intensity - thresholds[i]) / slope);
    p *= (value >> i & 1u) ? q : 1.0 - q;
  }
  return p;
}

std::uint32_t roundedOutcome(std::uint32_t base, std::uint32_t precharge, double intensity,
                             const glitch::Lanes& thresholds, double slope) {
  std::uint32_t v = base;
  for (unsigned i = 0; i < 32; ++i) {
    if (logistic((intensity - thresholds[i]) / slope) >= 0.5) v = (v & ~(1u << i)) | (precharge & (1u << i));
  }
  return v;
}

FitResult fit(const Target& t, const FitOptions& o) {
  const auto& rows = t.rows;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if ((rows[k].modal & t.base) != t.base)
      throw std::invalid_argument(fmt::format("row {}: modal value clears a bit of the base word", k));
    if (k > 0 && !(rows[k].voltage > rows[k - 1].voltage))
      throw std::invalid_argument("calibration rows must have strictly ascending voltage");
    if (k > 0 && (rows[k].modal & rows[k - 1].modal) != rows[k - 1].modal)
      throw std::invalid_argument(fmt::format("row {}: modal value is not a superset of the previous row", k));
  }

  std::vector<double> level(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) level[k] = t.intensity(rows[k]);

  // Lane -> first row whose modal value has it set.
  std::map<int, std::size_t> group;
  for (int i = 0; i < 32; ++i) {
    if (t.base >> i & 1u) continue;
    for (std::size_t k = 0; k < rows.size(); ++k)
      if (rows[k].modal >> i & 1u) {
        group[i] = k;
        break;
      }
  }
  if (group.empty()) throw std::invalid_argument("calibration rows never move any lane");

  const auto interval = [&](std::size_t k) {
    const double hi = level[k];
    const double lo = k > 0 ? level[k - 1] : level[0] - (level[1] - level[0]);
    return std::pair{lo, hi};
  };

  glitch::Lanes prior{};
  std::map<std::size_t, std::vector<int>> members;
  for (auto [lane, k] : group) members[k].push_back(lane);
  for (auto& [k, lanes] : members) {
    std::sort(lanes.rbegin(), lanes.rend());  // most significant lane first
    const auto [lo, hi] = interval(k);
    const double n = static_cast<double>(lanes.size());
    for (std::size_t j = 0; j < lanes.size(); ++j)
      prior[static_cast<std::size_t>(lanes[j])] = lo + (static_cast<double>(j) + 0.5) / n * (hi - lo);
  }

  std::vector<int> fitted;
  for (auto [lane, k] : group) fitted.push_back(lane);

  std::uint32_t fittedMask = 0;
  for (int i : fitted) fittedMask |= 1u << i;
  const std::uint32_t fitBase = t.base | ~fittedMask;  // ignore lanes the target never moves

  glitch::Lanes th = prior;
  const auto objective = [&](const glitch::Lanes& x) {
    double s = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double d = outcomeProbability(fitBase, rows[k].modal | fitBase, level[k], x, o.slope) - rows[k].rate;
      s += d * d;
    }
    for (int i : fitted) {
      const double d = x[static_cast<std::size_t>(i)] - prior[static_cast<std::size_t>(i)];
      s += o.ridge * d * d;
    }
    return s;
  };

  constexpr double kGolden = 0.6180339887498949;
  for (int sweep = 0; sweep < o.sweeps; ++sweep) {
    for (int lane : fitted) {
      const auto i = static_cast<std::size_t>(lane);
      const auto [lo, hi] = interval(group[lane]);
      double a = lo + o.margin;
      double b = hi - o.margin;
      glitch::Lanes probe = th;
      for (int step = 0; step < o.sectionSteps; ++step) {
        const double c = a + (b - a) * (1.0 - kGolden);
        const double d = a + (b - a) * kGolden;
        probe[i] = c;
        const double fc = objective(probe);
        probe[i] = d;
        const double fd = objective(probe);
        if (fc < fd)
          b = d;
        else
          a = c;
      }
      th[i] = (a + b) / 2.0;
    }
  }

  FitResult r;
  r.fittedLanes = fitted;
  r.objective = objective(th);
  for (std::size_t k = 0; k < rows.size(); ++k)
    r.rates.push_back(outcomeProbability(fitBase, rows[k].modal | fitBase, level[k], th, o.slope));

  double mean = 0.0;
  for (int i : fitted) mean += th[static_cast<std::size_t>(i)];
  mean /= static_cast<double>(fitted.size());
  double var = 0.0;
  for (int i : fitted) var += std::pow(th[static_cast<std::size_t>(i)] - mean, 2);
  const double sd = fitted.size() > 1 ? std::sqrt(var / static_cast<double>(fitted.size() - 1)) : 0.0;

  glitch::Rng rng(t.seed);
  r.model.slope = o.slope;
  for (std::size_t i = 0; i < 32; ++i)
    r.model.data.thresholds[i] = (fittedMask >> i & 1u) ? th[i] : mean + sd * rng.normal();
  for (std::size_t i = 0; i < 32; ++i) r.model.instr.thresholds[i] = mean + sd * rng.normal();
  return r;
}

}  // namespace emfi::calibration
