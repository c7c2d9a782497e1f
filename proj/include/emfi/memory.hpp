#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace emfi {

enum class RegionKind : std::uint8_t { Flash, SRAM };

const char* regionName(RegionKind k);

inline constexpr std::uint32_t kFlashBase = 0x0800'0000;
inline constexpr std::uint32_t kSramBase = 0x2000'0000;

struct Region {
  std::uint32_t base = 0;
  std::uint32_t size = 0;
  RegionKind kind = RegionKind::SRAM;
  // Shared between copies of an image; cloned on first write.
  std::shared_ptr<std::vector<std::uint8_t>> bytes;

  bool contains(std::uint32_t addr, std::uint32_t len) const {
    return addr >= base && len <= size && addr - base <= size - len;
  }
};

// Little-endian byte-addressed memory. Copies are cheap: region contents are
// shared until one side writes.
class MemoryImage {
 public:
  MemoryImage() = default;

  static MemoryImage standard(std::uint32_t flashSize = 0x1'0000, std::uint32_t sramSize = 0x400);

  // Throws std::invalid_argument on overlap.
  void addRegion(std::uint32_t base, std::uint32_t size, RegionKind kind);

  const std::vector<Region>& regions() const { return regions_; }
  const Region* find(std::uint32_t addr, std::uint32_t len = 1) const;
  std::optional<RegionKind> kindOf(std::uint32_t addr) const;
  bool mapped(std::uint32_t addr, std::uint32_t len) const { return find(addr, len) != nullptr; }

  // Callers check mapping first; these throw std::out_of_range otherwise.
  std::uint32_t read32(std::uint32_t addr) const;
  std::uint16_t read16(std::uint32_t addr) const;
  void write32(std::uint32_t addr, std::uint32_t value);

  // Loader access: may target Flash.
  void load(std::uint32_t addr, std::span<const std::uint8_t> data);

  friend bool operator==(const MemoryImage& a, const MemoryImage& b);

 private:
  Region* findMut(std::uint32_t addr, std::uint32_t len);
  static std::uint8_t* ownedBytes(Region& r);

  std::vector<Region> regions_;
};

}  // namespace emfi
