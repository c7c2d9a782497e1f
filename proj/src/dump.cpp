#include "emfi/dump.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"

namespace emfi::dump {

std::string hex32(std::uint32_t v) { return fmt::format("0x{:08x}", v); }

StateDump harvest(const core::ArchState& s, const std::vector<std::uint32_t>& watched) {
  StateDump d;
  d.r = s.r;
  d.xpsr = s.xpsr;
  d.cycles = s.cycles;
  for (std::uint32_t a : watched) d.watched[a] = s.mem.mapped(a, 4) ? s.mem.read32(a) : 0;
  return d;
}

core::ArchState restore(const StateDump& d, core::ArchState base) {
  base.r = d.r;
  base.xpsr = d.xpsr;
  base.cycles = d.cycles;
  for (auto [a, v] : d.watched)
    if (base.mem.mapped(a, 4)) base.mem.write32(a, v);
  return base;
}

std::vector<std::string> csvHeader(const StateDump& d) {
  std::vector<std::string> h;
  for (int i = 0; i < 16; ++i) h.push_back(fmt::format("r{}", i));
  for (const char* f : {"N", "Z", "C", "V", "exceptionNumber", "cycles"}) h.emplace_back(f);
  for (const auto& [a, v] : d.watched) h.push_back("mem_" + hex32(a));
  return h;
}

std::vector<std::string> csvFields(const StateDump& d) {
  std::vector<std::string> f;
  for (std::uint32_t v : d.r) f.push_back(hex32(v));
  for (bool b : {d.xpsr.n, d.xpsr.z, d.xpsr.c, d.xpsr.v}) f.push_back(b ? "1" : "0");
  f.push_back(std::to_string(d.xpsr.exceptionNumber));
  f.push_back(std::to_string(d.cycles));
  for (const auto& [a, v] : d.watched) f.push_back(hex32(v));
  return f;
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

std::vector<std::string> splitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::uint64_t parseUnsigned(const std::string& s) {
  std::string t = s;
  int radix = 10;
  if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
    radix = 16;
    t = t.substr(2);
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v, radix);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw std::invalid_argument("bad number '" + s + "' in state dump");
  return v;
}

std::uint32_t parse32(const std::string& s) {
  const std::uint64_t v = parseUnsigned(s);
  if (v > 0xFFFF'FFFFull) throw std::invalid_argument("value out of range in state dump: " + s);
  return static_cast<std::uint32_t>(v);
}

std::uint32_t jsonWord(const nlohmann::json& j) {
  if (j.is_string()) return parse32(j.get<std::string>());
  if (j.is_number_unsigned() || j.is_number_integer()) return j.get<std::uint32_t>();
  throw std::invalid_argument("expected a 32-bit value in state dump");
}

}  // namespace

std::string toCsv(const StateDump& d) { return join(csvHeader(d)) + "\n" + join(csvFields(d)) + "\n"; }

std::string toJson(const StateDump& d, int indent) {
  nlohmann::ordered_json j;
  for (int i = 0; i < 16; ++i) j[fmt::format("r{}", i)] = hex32(d.r[static_cast<std::size_t>(i)]);
  j["N"] = d.xpsr.n ? 1 : 0;
  j["Z"] = d.xpsr.z ? 1 : 0;
  j["C"] = d.xpsr.c ? 1 : 0;
  j["V"] = d.xpsr.v ? 1 : 0;
  j["exceptionNumber"] = d.xpsr.exceptionNumber;
  j["cycles"] = d.cycles;
  nlohmann::ordered_json mem = nlohmann::ordered_json::object();
  for (const auto& [a, v] : d.watched) mem[hex32(a)] = hex32(v);
  j["watched"] = mem;
  return j.dump(indent) + "\n";
}

StateDump fromCsv(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  std::string row;
  if (!std::getline(in, header) || !std::getline(in, row)) throw std::invalid_argument("state dump CSV needs a header and a row");
  const auto h = splitCsv(header);
  const auto f = splitCsv(row);
  if (h.size() != f.size() || h.size() < 22) throw std::invalid_argument("state dump CSV has mismatched columns");
  StateDump d;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const std::string& name = h[k];
    const std::string& v = f[k];
    if (name.size() > 1 && name[0] == 'r' && std::isdigit(static_cast<unsigned char>(name[1]))) {
      const auto idx = parseUnsigned(name.substr(1));
      if (idx > 15) throw std::invalid_argument("bad register column " + name);
      d.r[idx] = parse32(v);
    } else if (name == "N") {
      d.xpsr.n = parseUnsigned(v) != 0;
    } else if (name == "Z") {
      d.xpsr.z = parseUnsigned(v) != 0;
    } else if (name == "C") {
      d.xpsr.c = parseUnsigned(v) != 0;
    } else if (name == "V") {
      d.xpsr.v = parseUnsigned(v) != 0;
    } else if (name == "exceptionNumber") {
      d.xpsr.exceptionNumber = static_cast<int>(parseUnsigned(v));
    } else if (name == "cycles") {
      d.cycles = parseUnsigned(v);
    } else if (name.starts_with("mem_")) {
      d.watched[parse32(name.substr(4))] = parse32(v);
    } else {
      throw std::invalid_argument("unknown state dump column " + name);
    }
  }
  return d;
}

StateDump fromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("state dump JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("state dump JSON must be an object");
  StateDump d;
  try {
    for (int i = 0; i < 16; ++i) d.r[static_cast<std::size_t>(i)] = jsonWord(j.at(fmt::format("r{}", i)));
    d.xpsr.n = j.at("N").get<int>() != 0;
    d.xpsr.z = j.at("Z").get<int>() != 0;
    d.xpsr.c = j.at("C").get<int>() != 0;
    d.xpsr.v = j.at("V").get<int>() != 0;
    d.xpsr.exceptionNumber = j.at("exceptionNumber").get<int>();
    d.cycles = j.value("cycles", std::uint64_t{0});
    if (j.contains("watched"))
      for (const auto& [k, v] : j.at("watched").items()) d.watched[parse32(k)] = jsonWord(v);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("state dump JSON: ") + e.what());
  }
  return d;
}

StateDump parse(const std::string& text) {
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    return c == '{' ? fromJson(text) : fromCsv(text);
  }
  throw std::invalid_argument("empty state dump");
}

}  // namespace emfi::dump
