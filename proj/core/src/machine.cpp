#include "allmempro/machine.hpp"

#include <algorithm>

#include "allmempro/errors.hpp"

namespace allmempro {

std::array<std::uint8_t, kPageSize>& GuestMemory::page_for(Address addr) {
  return pages_[page_of(addr)];  // value-initialized (all zero) on first touch
}

std::uint8_t GuestMemory::read_byte(Address addr) const {
  const auto it = pages_.find(page_of(addr));
  if (it == pages_.end()) return 0;
  return it->second[page_offset(addr)];
}

void GuestMemory::write_byte(Address addr, std::uint8_t value) {
  page_for(addr)[page_offset(addr)] = value;
}

std::vector<std::uint8_t> GuestMemory::read(Address addr,
                                            std::size_t len) const {
  std::vector<std::uint8_t> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = read_byte(addr + i);
  return out;
}

void GuestMemory::write(Address addr, std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < bytes.size(); ++i)
    write_byte(addr + i, bytes[i]);
}

void GuestMemory::fill(Address addr, std::uint64_t len, std::uint8_t value) {
  for (std::uint64_t i = 0; i < len; ++i) write_byte(addr + i, value);
}

ModuleId Machine::register_module(std::string name, Address base,
                                  std::uint64_t size, bool is_protected,
                                  std::vector<std::string> share_names) {
  if (size == 0) throw OverlapError("module '" + name + "' has zero size");
  for (const auto& [id, mod] : modules_) {
    if (mod.name == name)
      throw DuplicateNameError("module '" + name + "' is already loaded");
    if (base < mod.end() && mod.base < base + size)
      throw OverlapError("module '" + name + "' overlaps '" + mod.name + "'");
  }
  const ModuleId id = next_id_++;
  modules_.emplace(id, ModuleImage{std::move(name), base, size, is_protected,
                                   std::move(share_names)});
  // Synthesized image content so zero-on-unload is observable.
  for (std::uint64_t i = 0; i < size; ++i)
    memory_.write_byte(base + i, static_cast<std::uint8_t>((base + i) & 0xFF));
  return id;
}

void Machine::unregister_module(ModuleId id) {
  const auto it = modules_.find(id);
  if (it == modules_.end())
    throw UnknownModuleError("module id " + std::to_string(id) +
                             " is not loaded");
  if (it->second.is_protected)
    memory_.fill(it->second.base, it->second.size, 0x00);
  modules_.erase(it);
}

std::optional<ModuleId> Machine::resolve_module(Address addr) const {
  for (const auto& [id, mod] : modules_)
    if (mod.contains(addr)) return id;
  return std::nullopt;
}

std::optional<ModuleId> Machine::find_module(std::string_view name) const {
  for (const auto& [id, mod] : modules_)
    if (mod.name == name) return id;
  return std::nullopt;
}

const ModuleImage& Machine::module_info(ModuleId id) const {
  const auto it = modules_.find(id);
  if (it == modules_.end())
    throw UnknownModuleError("module id " + std::to_string(id) +
                             " is not loaded");
  return it->second;
}

std::vector<std::uint8_t> Machine::raw_read(Address addr,
                                            std::size_t len) const {
  return memory_.read(addr, len);
}

void Machine::raw_write(Address addr, std::span<const std::uint8_t> bytes) {
  memory_.write(addr, bytes);
}

}  // namespace allmempro
