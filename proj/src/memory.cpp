#include "emfi/memory.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include <fmt/format.h>

namespace emfi {

const char* regionName(RegionKind k) { return k == RegionKind::Flash ? "Flash" : "SRAM"; }

MemoryImage MemoryImage::standard(std::uint32_t flashSize, std::uint32_t sramSize) {
  MemoryImage m;
  m.addRegion(kFlashBase, flashSize, RegionKind::Flash);
  m.addRegion(kSramBase, sramSize, RegionKind::SRAM);
  return m;
}

void MemoryImage::addRegion(std::uint32_t base, std::uint32_t size, RegionKind kind) {
  if (size == 0) throw std::invalid_argument("empty region");
  const std::uint64_t end = std::uint64_t{base} + size;
  if (end > 0x1'0000'0000ull) throw std::invalid_argument("region wraps the address space");
  for (const auto& r : regions_) {
    const std::uint64_t rend = std::uint64_t{r.base} + r.size;
    if (base < rend && r.base < end)
      throw std::invalid_argument(fmt::format("region 0x{:08x} overlaps 0x{:08x}", base, r.base));
  }
  regions_.push_back({base, size, kind, std::make_shared<std::vector<std::uint8_t>>(size, 0)});
  std::sort(regions_.begin(), regions_.end(), [](const Region& a, const Region& b) { return a.base < b.base; });
}

const Region* MemoryImage::find(std::uint32_t addr, std::uint32_t len) const {
  for (const auto& r : regions_)
    if (r.contains(addr, len)) return &r;
  return nullptr;
}

Region* MemoryImage::findMut(std::uint32_t addr, std::uint32_t len) {
  for (auto& r : regions_)
    if (r.contains(addr, len)) return &r;
  return nullptr;
}

std::optional<RegionKind> MemoryImage::kindOf(std::uint32_t addr) const {
  if (const Region* r = find(addr)) return r->kind;
  return std::nullopt;
}

std::uint8_t* MemoryImage::ownedBytes(Region& r) {
  if (r.bytes.use_count() != 1) r.bytes = std::make_shared<std::vector<std::uint8_t>>(*r.bytes);
  return r.bytes->data();
}

std::uint32_t MemoryImage::read32(std::uint32_t addr) const {
  const Region* r = find(addr, 4);
  if (!r) throw std::out_of_range(fmt::format("read32 at unmapped 0x{:08x}", addr));
  const std::uint8_t* p = r->bytes->data() + (addr - r->base);
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::uint16_t MemoryImage::read16(std::uint32_t addr) const {
  const Region* r = find(addr, 2);
  if (!r) throw std::out_of_range(fmt::format("read16 at unmapped 0x{:08x}", addr));
  const std::uint8_t* p = r->bytes->data() + (addr - r->base);
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void MemoryImage::write32(std::uint32_t addr, std::uint32_t value) {
  Region* r = findMut(addr, 4);
  if (!r) throw std::out_of_range(fmt::format("write32 at unmapped 0x{:08x}", addr));
  std::uint8_t* p = ownedBytes(*r) + (addr - r->base);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(value >> (8 * i));
}

void MemoryImage::load(std::uint32_t addr, std::span<const std::uint8_t> data) {
  if (data.empty()) return;
  Region* r = findMut(addr, static_cast<std::uint32_t>(data.size()));
  if (!r) throw std::out_of_range(fmt::format("load of {} bytes at unmapped 0x{:08x}", data.size(), addr));
  std::memcpy(ownedBytes(*r) + (addr - r->base), data.data(), data.size());
}

bool operator==(const MemoryImage& a, const MemoryImage& b) {
  if (a.regions_.size() != b.regions_.size()) return false;
  for (std::size_t i = 0; i < a.regions_.size(); ++i) {
    const Region& x = a.regions_[i];
    const Region& y = b.regions_[i];
    if (x.base != y.base || x.size != y.size || x.kind != y.kind) return false;
    if (x.bytes != y.bytes && *x.bytes != *y.bytes) return false;
  }
  return true;
}

}  // namespace emfi
