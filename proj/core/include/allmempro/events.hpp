#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "allmempro/policy.hpp"
#include "allmempro/types.hpp"

namespace allmempro {

/// Simulated execution context rendered into trace line headers.
struct AccessContext {
  int cpu = 0;
  int pid = 4;
  int tid = 7732;
  std::string process_name = "System";

  friend bool operator==(const AccessContext&, const AccessContext&) = default;
};

/// One simulated instruction's memory access. The payload carries write data;
/// for reads only its length matters (the access width). The accessed range
/// must be 1..8 bytes and lie within a single page.
struct AccessEvent {
  Address ip = 0;      // the simulated RIP
  Address target = 0;
  AccessKind kind = AccessKind::kRead;
  std::vector<std::uint8_t> payload;
  AccessContext context;

  std::size_t width() const { return payload.size(); }
};

struct LoadEvent {
  std::string name;
  Address base = 0;
  std::uint64_t size = 0;
  bool is_protected = false;
  std::vector<std::string> share_names;
};

struct UnloadEvent {
  std::string name;
};

struct AllocEvent {
  std::string driver;
  std::optional<Address> addr;  // nullopt = bump-allocated from the pool
  std::uint64_t size = 0;
};

struct FreeEvent {
  std::string driver;
  Address addr = 0;
};

struct RuleEvent {
  MemoryAccessRule rule;
};

using Event =
    std::variant<LoadEvent, UnloadEvent, AllocEvent, FreeEvent, AccessEvent,
                 RuleEvent>;

}  // namespace allmempro
