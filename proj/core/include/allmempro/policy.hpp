#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "allmempro/ept.hpp"
#include "allmempro/machine.hpp"
#include "allmempro/types.hpp"

namespace allmempro {

/// Binds a driver image range to an allocated byte range plus the shared
/// access flags governing what non-owners may do.
struct MemoryAccessRule {
  Address drv_addr = 0;
  std::uint64_t drv_size = 0;
  Address alloc_addr = 0;
  std::uint64_t alloc_size = 0;
  bool is_readable = false;     // others may read
  bool is_overwritable = false; // others may write

  bool covers(Address addr) const {
    return addr >= alloc_addr && addr - alloc_addr < alloc_size;
  }
  bool drv_contains(Address addr) const {
    return addr >= drv_addr && addr - drv_addr < drv_size;
  }
  bool same_ranges(const MemoryAccessRule& other) const {
    return drv_addr == other.drv_addr && drv_size == other.drv_size &&
           alloc_addr == other.alloc_addr && alloc_size == other.alloc_size;
  }

  friend bool operator==(const MemoryAccessRule&,
                         const MemoryAccessRule&) = default;
};

/// `rule <drv_addr> <drv_size> <alloc_addr> <alloc_size> [R=<0|1>] [W=<0|1>]`
/// with flags defaulting to 0. Shared with the scenario DSL.
/// Throws ParseError (line 1, columns relative to the line start).
MemoryAccessRule parse_rule_line(std::string_view line);
std::string render_rule_line(const MemoryAccessRule& rule);

enum class Action : std::uint8_t { kOwnerAllow, kRuleAllow, kDeny, kUnprotected };

struct Decision {
  Action action = Action::kUnprotected;
  std::optional<MemoryAccessRule> rule;  // matched rule, when any

  bool allowed() const { return action != Action::kDeny; }
};

const char* action_name(Action action);

struct PolicyConfig {
  // When set, a protected module's image pages are R/W-cleared on load and
  // treated as owned by the module itself.
  bool protect_module_image = false;
};

/// Controller + Dispatcher: owns the live rule list, reacts to load/unload
/// and alloc/free events, and decides Allow/Deny per mediated access at byte
/// granularity.
class PolicyEngine {
 public:
  PolicyEngine(Machine& machine, EptTable& ept, PolicyConfig config = {});

  void set_protect_module_image(bool on) { config_.protect_module_image = on; }
  const PolicyConfig& config() const { return config_; }

  /// Starts tracking a protected module; unprotected loads are ignored.
  void on_image_load(ModuleId id);

  /// Sweeps rules bound to the module's image range; for protected modules
  /// also drops owned allocations and the image protection. Pages no longer
  /// covered get their default permits back.
  void on_image_unload(ModuleId id);

  /// Adds the owner rule plus one share rule per share-list module loaded
  /// right now, clears R/W on every page the range touches, and returns the
  /// new rules. Throws UntrackedOwnerError / OverlapError.
  std::vector<MemoryAccessRule> on_alloc(ModuleId owner, Address addr,
                                         std::uint64_t size);

  /// Zero-fills the freed range, removes the whole rule group for it, and
  /// restores pages nothing covers anymore.
  /// Throws UnknownAllocationError / NotOwnerError.
  void on_free(ModuleId owner, Address addr);

  /// Manual rule entry (structure protection, DSL `rule` command).
  /// Throws InvalidRuleError / DuplicateRuleError.
  void add_rule(const MemoryAccessRule& rule);

  /// The Dispatcher decision for one byte. Pure.
  ///   no covering rule          -> Unprotected
  ///   ip inside a covering drv  -> OwnerAllow (full privileges)
  ///   every covering rule's flag permits the kind -> RuleAllow
  ///   otherwise                 -> Deny
  Decision decide(Address ip, Address addr, AccessKind kind) const;

  const std::vector<MemoryAccessRule>& rules() const { return rules_; }

  struct Allocation {
    ModuleId owner = 0;
    Address addr = 0;
    std::uint64_t size = 0;
  };
  const std::vector<Allocation>& allocations() const { return allocations_; }

  bool tracked(ModuleId id) const { return tracked_.contains(id); }

  /// Pages intersected by any rule's alloc range or protected image range.
  std::set<PageIndex> covered_pages() const;

 private:
  struct ImageProtection {
    Address base = 0;
    std::uint64_t size = 0;
  };

  void index_rule(std::size_t rule_index);
  void rebuild_index();
  void clear_pages_for(Address addr, std::uint64_t size);
  void restore_uncovered(const std::set<PageIndex>& previously_covered);

  Machine& machine_;
  EptTable& ept_;
  PolicyConfig config_;

  std::vector<MemoryAccessRule> rules_;
  // page -> indices into rules_ whose alloc range intersects the page
  std::unordered_map<PageIndex, std::vector<std::size_t>> page_index_;
  std::vector<Allocation> allocations_;
  std::map<ModuleId, std::vector<std::string>> tracked_;  // id -> share names
  std::map<ModuleId, ImageProtection> image_protections_;
};

}  // namespace allmempro
