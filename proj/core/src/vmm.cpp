#include "allmempro/vmm.hpp"

#include <algorithm>

#include "allmempro/errors.hpp"

namespace allmempro {

namespace {

constexpr std::uint64_t kPoolAlign = 16;

Address align_up(Address addr, std::uint64_t align) {
  return (addr + align - 1) & ~(align - 1);
}

// 16-byte aligned window containing the target, as dumped in write traces.
Address dump_window_base(Address target) { return target & ~Address{0xF}; }

}  // namespace

Simulator::Simulator(SimConfig config)
    : policy_(machine_, ept_, config.policy),
      cost_(config.cost),
      pool_cursor_(align_up(config.pool_base, kPoolAlign)) {
  if (!cost_.valid())
    throw ConfigError("cost model must satisfy mediated > uncached > cached");
  trace_.clock().set_epoch_ms(config.clock_epoch_ms);
  trace_.clock().set_ticks_per_ms(config.ticks_per_ms);
}

void Simulator::set_pool_base(Address base) {
  pool_cursor_ = align_up(base, kPoolAlign);
}

void Simulator::set_cost_model(const CostModel& cost) {
  if (!cost.valid())
    throw ConfigError("cost model must satisfy mediated > uncached > cached");
  cost_ = cost;
}

Address Simulator::take_pool_slot(std::uint64_t size) {
  const Address addr = pool_cursor_;
  pool_cursor_ = align_up(pool_cursor_ + size, kPoolAlign);
  return addr;
}

void Simulator::validate(const AccessEvent& event) {
  const std::size_t width = event.width();
  if (width < 1 || width > 8)
    throw WidthError("access width must be 1..8 bytes, got " +
                     std::to_string(width));
  if (page_of(event.target) != page_of(event.target + width - 1))
    throw WidthError("access crosses a page boundary");
}

std::vector<std::uint8_t> Simulator::perform(const AccessEvent& event) {
  // Executed through the current translation, so an open deny window
  // transparently lands the access in the decoy page.
  const EptTable::Translation loc = ept_.translate(event.target);
  if (event.kind == AccessKind::kWrite) {
    if (loc.to_decoy) {
      auto decoy = ept_.decoy_page();
      std::copy(event.payload.begin(), event.payload.end(),
                decoy.begin() + loc.location);
    } else {
      machine_.raw_write(loc.location, event.payload);
    }
    return event.payload;
  }
  if (loc.to_decoy) {
    const auto decoy = ept_.decoy_page();
    return {decoy.begin() + loc.location,
            decoy.begin() + loc.location + event.width()};
  }
  return machine_.raw_read(loc.location, event.width());
}

AccessOutcome Simulator::execute_access(const AccessEvent& event) {
  validate(event);

  AccessOutcome outcome;
  if (ept_.check(event.target, event.kind) == CheckResult::kPermit) {
    outcome.observed = perform(event);
    outcome.exits = 0;
    metrics_.unmediated_accesses += 1;
    trace_.clock().advance_ticks(cost_.uncached_unprotected);
    return outcome;
  }

  // First exit: the EPT violation reaches the VMM with the faulting access.
  const VmExit violation = EptViolationExit{event};
  metrics_.ept_violations += 1;
  outcome.decision = policy_.decide(event.ip, event.target, event.kind);
  outcome.denied = outcome.decision.action == Action::kDeny;

  const PageIndex page = page_of(event.target);
  const bool dump = event.kind == AccessKind::kWrite;
  const Address window = dump_window_base(event.target);
  const std::vector<std::uint8_t> before =
      dump ? machine_.raw_read(window, 16) : std::vector<std::uint8_t>{};

  WindowToken token = outcome.denied
                          ? ept_.open_deny_window(page, event.kind)
                          : ept_.open_grant_window(page, event.kind);
  try {
    // The guest re-executes the single faulting instruction inside the
    // window, then the armed MTF forces the second exit.
    outcome.observed = perform(event);
  } catch (...) {
    ept_.close_window(token);
    throw;
  }
  const VmExit trap = MtfTrapExit{token};
  metrics_.mtf_traps += 1;
  ept_.close_window(std::get<MtfTrapExit>(trap).token);
  outcome.exits = 2;

  if (outcome.denied) {
    (event.kind == AccessKind::kRead ? metrics_.denied_reads
                                     : metrics_.denied_writes) += 1;
    trace_.append(format_denial(event.ip, event.target, event.kind,
                                event.context, trace_.clock()));
  } else {
    metrics_.granted_accesses += 1;
  }

  const std::vector<std::uint8_t> after =
      dump ? machine_.raw_read(window, 16) : std::vector<std::uint8_t>{};
  std::optional<Address> src_base;
  if (const auto src = machine_.resolve_module(event.ip))
    src_base = machine_.module_info(*src).base;
  trace_.append(format_access(event, src_base, before, after, trace_.clock()));
  trace_.clock().advance_ticks(cost_.mediated);
  (void)violation;
  return outcome;
}

EventResult Simulator::run_event(const Event& event) {
  const std::size_t ordinal = next_ordinal_++;
  EventResult result;
  result.ordinal = ordinal;
  const std::size_t trace_mark = trace_.size();

  try {
    if (const auto* load = std::get_if<LoadEvent>(&event)) {
      const ModuleId id =
          machine_.register_module(load->name, load->base, load->size,
                                   load->is_protected, load->share_names);
      policy_.on_image_load(id);
      result.module_id = id;
    } else if (const auto* unload = std::get_if<UnloadEvent>(&event)) {
      const auto id = machine_.find_module(unload->name);
      if (!id)
        throw UnknownModuleError("module '" + unload->name +
                                 "' is not loaded");
      policy_.on_image_unload(*id);
      machine_.unregister_module(*id);
    } else if (const auto* alloc = std::get_if<AllocEvent>(&event)) {
      const auto id = machine_.find_module(alloc->driver);
      if (!id)
        throw UnknownModuleError("module '" + alloc->driver +
                                 "' is not loaded");
      const Address addr =
          alloc->addr ? *alloc->addr : take_pool_slot(alloc->size);
      result.rules_added = policy_.on_alloc(*id, addr, alloc->size);
      result.alloc_addr = addr;
    } else if (const auto* free_ev = std::get_if<FreeEvent>(&event)) {
      const auto id = machine_.find_module(free_ev->driver);
      if (!id)
        throw UnknownModuleError("module '" + free_ev->driver +
                                 "' is not loaded");
      policy_.on_free(*id, free_ev->addr);
    } else if (const auto* access = std::get_if<AccessEvent>(&event)) {
      result.access = execute_access(*access);
    } else if (const auto* rule_ev = std::get_if<RuleEvent>(&event)) {
      policy_.add_rule(rule_ev->rule);
      result.rules_added = {rule_ev->rule};
    }
  } catch (const Error& e) {
    throw EventError(ordinal, e.what());
  }

  result.trace.assign(trace_.lines().begin() + trace_mark,
                      trace_.lines().end());
  return result;
}

}  // namespace allmempro
