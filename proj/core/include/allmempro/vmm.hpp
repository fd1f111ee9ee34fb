#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "allmempro/ept.hpp"
#include "allmempro/events.hpp"
#include "allmempro/machine.hpp"
#include "allmempro/policy.hpp"
#include "allmempro/tracelog.hpp"
#include "allmempro/types.hpp"

namespace allmempro {

struct EptViolationExit {
  AccessEvent event;
};

struct MtfTrapExit {
  WindowToken token;
};

/// An exit delivered to the VMM: the faulting access or the end of a
/// single-step window.
using VmExit = std::variant<EptViolationExit, MtfTrapExit>;

struct AccessOutcome {
  // What the accessor read, or the post-write bytes it would observe.
  std::vector<std::uint8_t> observed;
  bool denied = false;
  int exits = 0;  // 0 for untrapped pages, 2 for every mediated access
  Decision decision;
};

struct EventResult {
  std::size_t ordinal = 0;
  std::optional<ModuleId> module_id;           // load
  std::optional<Address> alloc_addr;           // alloc (resolved address)
  std::vector<MemoryAccessRule> rules_added;   // alloc / rule
  std::optional<AccessOutcome> access;         // access
  std::vector<TraceLine> trace;                // lines emitted by this event
};

struct SimConfig {
  PolicyConfig policy;
  CostModel cost;
  Address pool_base = 0xFFFFA400AC479000;  // bump allocator start
  std::uint64_t clock_epoch_ms = SimClock::kDefaultEpochMs;
  std::uint64_t ticks_per_ms = 1000;
};

/// The Switcher: runs each mediated access through the
/// check -> exit -> decide -> window -> trap -> restore machine and keeps
/// the exit metrics.
class Simulator {
 public:
  explicit Simulator(SimConfig config = {});

  /// Executes one pre-decoded access.
  ///
  /// A permitted check runs against raw memory with no exits. A violation
  /// costs exactly two exits: the violation itself and the monitor-trap at
  /// the end of the single-instruction window. Denied accesses complete
  /// against the decoy page, leaving raw memory untouched and readers with
  /// zeros. Throws WidthError; never leaves a window open.
  AccessOutcome execute_access(const AccessEvent& event);

  /// Single entry point multiplexing load/unload/alloc/free/access/rule
  /// events to the owning module. Sub-operation errors are rethrown as
  /// EventError tagged with the event's ordinal.
  EventResult run_event(const Event& event);

  Machine& machine() { return machine_; }
  const Machine& machine() const { return machine_; }
  EptTable& ept() { return ept_; }
  const EptTable& ept() const { return ept_; }
  PolicyEngine& policy() { return policy_; }
  const PolicyEngine& policy() const { return policy_; }
  TraceLog& trace() { return trace_; }
  const TraceLog& trace() const { return trace_; }
  const Metrics& metrics() const { return metrics_; }
  const CostModel& cost_model() const { return cost_; }

  std::uint64_t modeled_ticks() const { return cost_.estimate(metrics_); }

  // Scenario-facing configuration.
  void set_pool_base(Address base);
  void set_cost_model(const CostModel& cost);

  std::size_t events_processed() const { return next_ordinal_ - 1; }

 private:
  std::vector<std::uint8_t> perform(const AccessEvent& event);
  static void validate(const AccessEvent& event);
  Address take_pool_slot(std::uint64_t size);

  Machine machine_;
  EptTable ept_;
  PolicyEngine policy_;
  TraceLog trace_;
  Metrics metrics_;
  CostModel cost_;
  Address pool_cursor_ = 0;
  std::size_t next_ordinal_ = 1;
};

}  // namespace allmempro
