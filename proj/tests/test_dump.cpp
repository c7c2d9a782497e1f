#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "emfi/dump.hpp"
#include "emfi/glitch.hpp"
#include "emfi/programs.hpp"

using namespace emfi;

namespace {

dump::StateDump randomDump(std::mt19937& rng) {
  dump::StateDump d;
  for (auto& r : d.r) r = rng();
  d.xpsr = {rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0, static_cast<int>(rng() % 10)};
  d.cycles = (std::uint64_t{rng()} << 32) | rng();
  for (int k = 0; k < static_cast<int>(rng() % 4); ++k) d.watched[0x20000000u + 4 * (rng() % 256)] = rng();
  return d;
}

}  // namespace

TEST_CASE("csv and json round trips", "[dump]") {
  std::mt19937 rng(5);
  for (int n = 0; n < 500; ++n) {
    const auto d = randomDump(rng);
    REQUIRE(dump::fromCsv(dump::toCsv(d)) == d);
    REQUIRE(dump::fromJson(dump::toJson(d)) == d);
    REQUIRE(dump::parse(dump::toJson(d, 0)) == d);
    REQUIRE(dump::parse(dump::toCsv(d)) == d);
  }
}

TEST_CASE("csv layout is fixed", "[dump]") {
  const auto p = programs::builtin("array-sum");
  const auto g = glitch::computeGolden(p);
  const auto d = dump::harvest(g.run.state, p.watched);
  const auto header = dump::csvHeader(d);
  REQUIRE(header.size() == 23);
  CHECK(header[0] == "r0");
  CHECK(header[15] == "r15");
  CHECK(header[16] == "N");
  CHECK(header[20] == "exceptionNumber");
  CHECK(header[21] == "cycles");
  CHECK(header[22] == "mem_0x20000100");
  const auto f = dump::csvFields(d);
  CHECK(f[22] == "0x000000ff");
  CHECK(f[21] == "184");
}

TEST_CASE("restore undoes harvest", "[dump]") {
  const auto p = programs::builtin("ldr-sram");
  const auto g = glitch::computeGolden(p);
  const auto d = dump::harvest(g.run.state, p.watched);
  const core::ArchState back = dump::restore(d, p.initial);
  CHECK(back.r == g.run.state.r);
  CHECK(back.xpsr == g.run.state.xpsr);
  CHECK(back.cycles == g.run.state.cycles);
  CHECK(dump::harvest(back, p.watched) == d);
}

TEST_CASE("malformed dumps are rejected", "[dump]") {
  CHECK_THROWS_AS(dump::fromCsv("r0\n1\n"), std::invalid_argument);
  CHECK_THROWS_AS(dump::fromCsv(""), std::invalid_argument);
  CHECK_THROWS_AS(dump::fromJson("{"), std::invalid_argument);
  CHECK_THROWS_AS(dump::fromJson("[1,2]"), std::invalid_argument);
  auto csv = dump::toCsv(dump::StateDump{});
  csv.replace(csv.rfind("0x00000000"), 10, "0xZZ");
  CHECK_THROWS_AS(dump::fromCsv(csv), std::invalid_argument);
}
