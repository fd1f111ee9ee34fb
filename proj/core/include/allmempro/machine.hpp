#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "allmempro/types.hpp"

namespace allmempro {

/// A loaded kernel-mode module image.
struct ModuleImage {
  std::string name;
  Address base = 0;
  std::uint64_t size = 0;
  bool is_protected = false;
  // Module names permitted to share this module's allocations.
  std::vector<std::string> share_names;

  bool contains(Address addr) const {
    return addr >= base && addr - base < size;
  }
  Address end() const { return base + size; }
};

/// Sparse page-granular byte store. Reading a never-written byte yields 0x00;
/// pages materialize on first write only.
class GuestMemory {
 public:
  std::uint8_t read_byte(Address addr) const;
  void write_byte(Address addr, std::uint8_t value);
  std::vector<std::uint8_t> read(Address addr, std::size_t len) const;
  void write(Address addr, std::span<const std::uint8_t> bytes);
  void fill(Address addr, std::uint64_t len, std::uint8_t value);

  std::size_t materialized_pages() const { return pages_.size(); }

 private:
  std::array<std::uint8_t, kPageSize>& page_for(Address addr);

  std::unordered_map<PageIndex, std::array<std::uint8_t, kPageSize>> pages_;
};

/// The guest kernel virtual address space: backing memory plus the registry
/// of loaded modules, keyed both by name and by address range.
class Machine {
 public:
  /// Registers a module, fills its image range with the deterministic
  /// pattern byte[i] = (base + i) mod 256, and hands out the next id.
  /// Throws OverlapError / DuplicateNameError.
  ModuleId register_module(std::string name, Address base, std::uint64_t size,
                           bool is_protected,
                           std::vector<std::string> share_names = {});

  /// Removes the module; protected images are zeroed out first.
  /// Throws UnknownModuleError.
  void unregister_module(ModuleId id);

  /// Module whose [base, base+size) contains addr, if any.
  std::optional<ModuleId> resolve_module(Address addr) const;

  std::optional<ModuleId> find_module(std::string_view name) const;

  /// Throws UnknownModuleError.
  const ModuleImage& module_info(ModuleId id) const;

  const std::map<ModuleId, ModuleImage>& modules() const { return modules_; }

  // Raw access below the translation layer; used by the VMM and the
  // zeroing paths, never directly by scenarios.
  std::vector<std::uint8_t> raw_read(Address addr, std::size_t len) const;
  void raw_write(Address addr, std::span<const std::uint8_t> bytes);

  GuestMemory& memory() { return memory_; }
  const GuestMemory& memory() const { return memory_; }

 private:
  std::map<ModuleId, ModuleImage> modules_;
  ModuleId next_id_ = 1;
  GuestMemory memory_;
};

}  // namespace allmempro
