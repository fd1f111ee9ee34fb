#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace allmempro {

// Kernel virtual address. Rendered in traces and the scenario DSL as
// uppercase hexadecimal without separators.
using Address = std::uint64_t;

using PageIndex = std::uint64_t;

inline constexpr std::size_t kPageSize = 4096;
inline constexpr std::size_t kPageShift = 12;

constexpr PageIndex page_of(Address addr) { return addr >> kPageShift; }
constexpr Address page_base(PageIndex page) { return page << kPageShift; }
constexpr std::size_t page_offset(Address addr) { return addr & (kPageSize - 1); }

enum class AccessKind : std::uint8_t { kRead, kWrite };

constexpr char access_kind_letter(AccessKind kind) {
  return kind == AccessKind::kRead ? 'R' : 'W';
}

// 1-based id handed out by the module registry.
using ModuleId = std::uint32_t;

/// 16-digit zero-padded uppercase hex, the trace rendering of an address.
std::string hex_address(Address addr);

/// Minimal-width uppercase hex (no leading zeroes), the DSL rendering.
std::string hex_compact(std::uint64_t value);

/// "00 0a ba" style lowercase dump used in trace byte windows.
std::string hex_dump(std::span<const std::uint8_t> bytes);

/// Contiguous uppercase hex pairs ("BA0A"), the DSL rendering of byte strings.
std::string hex_bytes(std::span<const std::uint8_t> bytes);

/// Parses case-insensitive hex with optional 0x prefix and leading zeroes.
/// Returns nullopt on empty input, a bad digit, or overflow past 64 bits.
std::optional<std::uint64_t> parse_hex(std::string_view text);

/// Parses an even-length hex string into bytes in memory order.
std::optional<std::vector<std::uint8_t>> parse_hex_bytes(std::string_view text);

}  // namespace allmempro
