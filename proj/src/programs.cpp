#include "emfi/programs.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "emfi/assembler.hpp"

namespace emfi::programs {

namespace {

constexpr std::string_view kNopSled = R"(; eight NOPs; the harvest point follows the sled
start:
        nop
        nop
        nop
        nop
        nop
        nop
        nop
        nop
watch:
        nop
        b       watch
)";

constexpr std::string_view kArraySum = R"(; result += array[i] for i in 0..7, array[i] = 2^i
        .reg    r1, 0
        .reg    r2, array
        .result 0x20000100
addition_loop:
        ldr     r4, [r2,r1, lsl #2]     ; r4 = array[i]
        ldr     r3, [r0,#0]             ; r3 = result
        add     r3, r4                  ; r3 = r3 + r4
        str     r3, [r0,#0]             ; result = r3
        add     r1, r1, #1              ; r1 = r1 + 1
        cmp     r1, #8                  ; r1 == 8 ?
        blt     addition_loop
watch:
        nop
        b       watch
        .align  2
array:
        .word   1, 2, 4, 8, 16, 32, 64, 128
)";

constexpr std::string_view kLdrR4 = R"(; single literal load into a low register
        .reg    r4, 0
        .result r4
start:
        ldr     r4, [pc, #44]
        nop
watch:
        nop
        b       watch
        .org    0x30
literal:
        .word   0x12345678
)";

constexpr std::string_view kLdrR8 = R"(; a high destination register forces the 32-bit encoding
        .result r8
start:
        ldr.w   r8, [pc, #44]
watch:
        nop
        b       watch
        .org    0x30
literal:
        .word   0x12345678
)";

constexpr std::string_view kLdrSram = R"(; the same load, sourced from SRAM
        .reg    r4, 0
        .data   0x20000104, 0x12345678
        .watch  0x20000104
        .result r4
start:
        ldr     r4, [r0, #4]
        nop
watch:
        nop
        b       watch
)";

void applyDefaults(core::ArchState& s) {
  s.r[0] = kResultAddr;
  for (int i = 1; i <= 4; ++i) s.r[i] = static_cast<std::uint32_t>(i);
  s.r[5] = 5;
  s.r[6] = 6;
  s.r[7] = 0x100;
  for (int i = 8; i <= 12; ++i) s.r[i] = 0;
  s.r[13] = kSramBase + kSramSize;
  s.r[14] = kFlashBase + 0x1001;  // return address into the harness
}

}  // namespace

const std::vector<std::string>& builtinIds() {
  static const std::vector<std::string> ids = {"nop-sled", "array-sum", "ldr-r4", "ldr-r8", "ldr-sram"};
  return ids;
}

std::string_view builtinSource(std::string_view id) {
  if (id == "nop-sled") return kNopSled;
  if (id == "array-sum") return kArraySum;
  if (id == "ldr-r4") return kLdrR4;
  if (id == "ldr-r8") return kLdrR8;
  if (id == "ldr-sram") return kLdrSram;
  throw std::invalid_argument("unknown built-in program '" + std::string(id) + "'");
}

Program builtin(std::string_view id) { return fromSource(std::string(id), builtinSource(id)); }

Program fromSource(std::string name, std::string_view source) {
  assembler::Assembly a = assembler::assemble(source, kFlashBase);
  Program p;
  p.name = std::move(name);
  p.source = std::string(source);
  p.symbols = a.symbols;
  for (auto [addr, line] : a.lines) p.sourceLines[addr] = line;

  core::ArchState& s = p.initial;
  s.mem = MemoryImage::standard(kFlashSize, kSramSize);
  s.mem.load(kFlashBase, a.bytes);
  core::installHandlers(s.mem);
  applyDefaults(s);
  for (auto [r, v] : a.directives.registers) s.r[static_cast<std::size_t>(r)] = v;

  const auto symbol = [&](const std::string& label, std::uint32_t fallback) {
    if (label.empty()) return fallback;
    return a.symbols.at(label);
  };
  p.entry = symbol(a.directives.entry, a.symbols.contains("start") ? a.symbols.at("start") : kFlashBase);
  if (a.directives.watchpoint.empty() && !a.symbols.contains("watch"))
    throw std::invalid_argument("program '" + p.name + "' has no watchpoint (label 'watch' or .watchpoint)");
  p.watchpoint = symbol(a.directives.watchpoint.empty() ? "watch" : a.directives.watchpoint, 0);
  s.r[15] = p.entry;

  s.mem.write32(kResultAddr, 0);
  for (auto [addr, v] : a.directives.data) {
    if (!s.mem.mapped(addr, 4)) throw std::invalid_argument("data directive targets unmapped memory");
    const std::uint8_t bytes[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                                   static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    s.mem.load(addr, bytes);
  }

  if (const std::string& res = a.directives.result; !res.empty()) {
    if (res[0] == 'r' || res == "sp" || res == "lr" || res == "pc") {
      const int r = res == "sp" ? 13 : res == "lr" ? 14 : res == "pc" ? 15 : std::stoi(res.substr(1));
      p.resultRegister = r;
    } else {
      p.resultAddress = static_cast<std::uint32_t>(std::stoul(res, nullptr, 0));
      if (!s.mem.mapped(*p.resultAddress, 4)) throw std::invalid_argument("result address is unmapped");
      a.directives.watched.push_back(*p.resultAddress);
    }
  }

  p.watched = a.directives.watched;
  p.watched.push_back(kResultAddr);
  std::sort(p.watched.begin(), p.watched.end());
  p.watched.erase(std::unique(p.watched.begin(), p.watched.end()), p.watched.end());
  return p;
}

Program load(std::string_view idOrPath) {
  const auto& ids = builtinIds();
  if (std::find(ids.begin(), ids.end(), idOrPath) != ids.end()) return builtin(idOrPath);
  if (!std::filesystem::exists(idOrPath))
    throw std::invalid_argument("unknown program '" + std::string(idOrPath) +
                                "': not a built-in id and no such file");
  std::ifstream in{std::string(idOrPath)};
  if (!in) throw std::runtime_error("cannot read program file '" + std::string(idOrPath) + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string name(idOrPath);
  return fromSource(name, ss.str());
}

}  // namespace emfi::programs
