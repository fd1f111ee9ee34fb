#include <doctest.h>

#include <algorithm>
#include <random>

#include "allmempro/errors.hpp"
#include "allmempro/vmm.hpp"
#include "support/oracles.hpp"

using namespace allmempro;

namespace {

constexpr Address kAllocatorBase = 0xFFFFF8016F630000;
constexpr Address kAttackerBase = 0xFFFFF8016F650000;
constexpr Address kPoolAddr = 0xFFFFA400AC479FD0;

struct SimFixture {
  Simulator sim;

  SimFixture() {
    sim.run_event(LoadEvent{"mem_allocator_driver.sys", kAllocatorBase, 0xB000,
                            true, {}});
    sim.run_event(
        LoadEvent{"mem_attacker_driver.sys", kAttackerBase, 0x9000, false, {}});
    sim.run_event(AllocEvent{"mem_allocator_driver.sys", kPoolAddr, 0x10});
  }

  AccessOutcome read(Address ip, Address target, std::size_t width) {
    AccessEvent ev;
    ev.ip = ip;
    ev.target = target;
    ev.kind = AccessKind::kRead;
    ev.payload.assign(width, 0);
    return sim.execute_access(ev);
  }

  AccessOutcome write(Address ip, Address target,
                      std::vector<std::uint8_t> bytes) {
    AccessEvent ev;
    ev.ip = ip;
    ev.target = target;
    ev.kind = AccessKind::kWrite;
    ev.payload = std::move(bytes);
    return sim.execute_access(ev);
  }
};

}  // namespace

TEST_CASE("owner write then read round-trips through mediation") {
  SimFixture fx;
  const auto w =
      fx.write(0xFFFFF8016F6314EA, 0xFFFFA400AC479FD8, {0xBA, 0x0A});
  CHECK_FALSE(w.denied);
  CHECK(w.exits == 2);
  CHECK(w.decision.action == Action::kOwnerAllow);

  const auto r = fx.read(0xFFFFF8016F6317C8, 0xFFFFA400AC479FD8, 8);
  CHECK_FALSE(r.denied);
  CHECK(r.exits == 2);
  CHECK(r.observed ==
        std::vector<std::uint8_t>{0xBA, 0x0A, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("attacker reads observe zeros") {
  SimFixture fx;
  fx.write(0xFFFFF8016F6314EA, 0xFFFFA400AC479FD8, {0xBA, 0x0A});
  const auto r = fx.read(0xFFFFF8016F651228, 0xFFFFA400AC479FD8, 8);
  CHECK(r.denied);
  CHECK(r.exits == 2);
  CHECK(r.decision.action == Action::kDeny);
  CHECK(r.observed == std::vector<std::uint8_t>(8, 0));
}

TEST_CASE("attacker writes leave raw memory untouched") {
  SimFixture fx;
  fx.write(0xFFFFF8016F6314EA, 0xFFFFA400AC479FD8, {0xBA, 0x0A});
  const auto before = fx.sim.machine().raw_read(0xFFFFA400AC479FD8, 2);
  const auto w = fx.write(0xFFFFF8016F651257, 0xFFFFA400AC479FD8, {0xFF});
  CHECK(w.denied);
  CHECK(w.exits == 2);
  CHECK(fx.sim.machine().raw_read(0xFFFFA400AC479FD8, 2) == before);
  CHECK(fx.sim.ept().quiescent());
}

TEST_CASE("untrapped pages cost zero exits") {
  SimFixture fx;
  const Address elsewhere = 0xFFFFB00000000100;
  fx.sim.machine().raw_write(elsewhere, std::vector<std::uint8_t>{7, 7});
  const auto r = fx.read(0xFFFFF8016F651228, elsewhere, 2);
  CHECK(r.exits == 0);
  CHECK_FALSE(r.denied);
  CHECK(r.observed == std::vector<std::uint8_t>{7, 7});
  CHECK(fx.sim.metrics().unmediated_accesses == 1);
}

TEST_CASE("width and page-crossing constraints are enforced") {
  SimFixture fx;
  AccessEvent ev;
  ev.ip = kAllocatorBase + 0x1000;
  ev.kind = AccessKind::kRead;

  ev.target = 0xFFFFA400AC479FD8;
  ev.payload.clear();
  CHECK_THROWS_AS(fx.sim.execute_access(ev), WidthError);
  ev.payload.assign(9, 0);
  CHECK_THROWS_AS(fx.sim.execute_access(ev), WidthError);

  ev.target = 0xFFFFA400AC479FFD;  // 4 bytes would cross into the next page
  ev.payload.assign(4, 0);
  CHECK_THROWS_AS(fx.sim.execute_access(ev), WidthError);
  CHECK_FALSE(fx.sim.ept().window_open());
}

TEST_CASE("metrics partition mediated accesses") {
  SimFixture fx;
  fx.write(0xFFFFF8016F6314EA, 0xFFFFA400AC479FD8, {0xBA, 0x0A});  // grant
  fx.read(0xFFFFF8016F6317C8, 0xFFFFA400AC479FD8, 8);              // grant
  fx.read(0xFFFFF8016F651228, 0xFFFFA400AC479FD8, 8);              // deny R
  fx.write(0xFFFFF8016F651257, 0xFFFFA400AC479FD8, {0xFF});        // deny W
  fx.read(0xFFFFF8016F651228, 0xFFFFB00000000100, 1);              // unmediated

  const Metrics& m = fx.sim.metrics();
  CHECK(m.ept_violations == 4);
  CHECK(m.mtf_traps == 4);
  CHECK(m.granted_accesses == 2);
  CHECK(m.denied_reads == 1);
  CHECK(m.denied_writes == 1);
  CHECK(m.unmediated_accesses == 1);
  CHECK(metrics_consistent(m));
}

TEST_CASE("run_event routes and tags errors with the event ordinal") {
  Simulator sim;
  const auto load = sim.run_event(
      LoadEvent{"mem_allocator_driver.sys", kAllocatorBase, 0xB000, true, {}});
  CHECK(load.module_id == 1);

  const auto alloc =
      sim.run_event(AllocEvent{"mem_allocator_driver.sys", kPoolAddr, 0x10});
  REQUIRE(alloc.rules_added.size() == 1);
  CHECK(alloc.alloc_addr == kPoolAddr);

  const auto rule_result = sim.run_event(RuleEvent{MemoryAccessRule{
      0xFFFFF80170201000, 0x8D2000, 0xFFFFA400AC479F80, 0x40, false, false}});
  CHECK(rule_result.rules_added.size() == 1);

  try {
    sim.run_event(FreeEvent{"mem_allocator_driver.sys", 0xFFFF000000000000});
    FAIL("expected EventError");
  } catch (const EventError& e) {
    CHECK(e.ordinal() == 4);
  }

  const auto free_result =
      sim.run_event(FreeEvent{"mem_allocator_driver.sys", kPoolAddr});
  CHECK(free_result.ordinal == 5);
  const auto raw = sim.machine().raw_read(kPoolAddr, 0x10);
  CHECK(std::all_of(raw.begin(), raw.end(),
                    [](std::uint8_t b) { return b == 0; }));
}

TEST_CASE("alloc auto bumps deterministically from the pool base") {
  Simulator sim;
  sim.run_event(
      LoadEvent{"mem_allocator_driver.sys", kAllocatorBase, 0xB000, true, {}});
  const auto first = sim.run_event(
      AllocEvent{"mem_allocator_driver.sys", std::nullopt, 0x10});
  const auto second = sim.run_event(
      AllocEvent{"mem_allocator_driver.sys", std::nullopt, 0x28});
  const auto third = sim.run_event(
      AllocEvent{"mem_allocator_driver.sys", std::nullopt, 0x10});
  CHECK(first.alloc_addr == 0xFFFFA400AC479000);
  CHECK(second.alloc_addr == 0xFFFFA400AC479010);
  CHECK(third.alloc_addr == 0xFFFFA400AC479040);  // 0x28 rounded up to 0x30
}

TEST_CASE("two-exit law over randomized events and rule sets") {
  std::mt19937_64 rng(0x5EED0004);
  std::size_t total_events = 0;
  while (total_events < 10000) {
    Simulator sim;
    const auto space = allmempro::testing::make_rule_space(rng);
    for (const auto& rule : space.rules)
      sim.run_event(RuleEvent{rule});

    std::uint64_t violating = 0;
    for (int i = 0; i < 250; ++i, ++total_events) {
      AccessEvent ev;
      const auto& [drv_addr, drv_size] =
          space.drv_ranges[rng() % space.drv_ranges.size()];
      ev.ip = rng() % 2 == 0 ? drv_addr + rng() % drv_size : rng();
      ev.kind = rng() % 2 == 0 ? AccessKind::kRead : AccessKind::kWrite;
      const std::size_t width = 1 + rng() % 8;
      // keep the access inside one page
      Address target = space.space_base + rng() % (2 * kPageSize);
      if (page_of(target) != page_of(target + width - 1))
        target = page_base(page_of(target) + 1) - width;
      ev.target = target;
      ev.payload.assign(width, static_cast<std::uint8_t>(rng()));

      const bool page_covered = std::any_of(
          space.rules.begin(), space.rules.end(),
          [&](const MemoryAccessRule& r) {
            return page_of(r.alloc_addr) <= page_of(target) &&
                   page_of(target) <=
                       page_of(r.alloc_addr + r.alloc_size - 1);
          });

      const auto outcome = sim.execute_access(ev);
      CHECK((outcome.exits == 0 || outcome.exits == 2));
      CHECK(outcome.exits == (page_covered ? 2 : 0));
      if (page_covered) ++violating;
      CHECK(sim.ept().quiescent());
    }

    const Metrics& m = sim.metrics();
    CHECK(metrics_consistent(m));
    CHECK(m.ept_violations == violating);
    CHECK(m.mtf_traps + m.ept_violations == 2 * violating);
  }
}

TEST_CASE("confidentiality and integrity of denied accesses") {
  std::mt19937_64 rng(0x5EED0005);
  std::size_t denied_checked = 0;
  while (denied_checked < 10000) {
    Simulator sim;
    const auto space = allmempro::testing::make_rule_space(rng);
    // force rules that deny all others
    std::vector<MemoryAccessRule> rules = space.rules;
    for (auto& r : rules) {
      r.is_readable = false;
      r.is_overwritable = false;
      sim.run_event(RuleEvent{r});
    }
    // randomize the protected contents
    std::vector<std::uint8_t> contents(2 * kPageSize);
    for (auto& b : contents) b = static_cast<std::uint8_t>(rng());
    sim.machine().raw_write(space.space_base, contents);

    for (int i = 0; i < 300 && denied_checked < 10000; ++i) {
      const MemoryAccessRule& rule = rules[rng() % rules.size()];
      AccessEvent ev;
      Address ip = rng();
      // ip outside every drv range so the decision is Deny
      const auto inside_any = [&](Address a) {
        return std::any_of(rules.begin(), rules.end(),
                           [&](const MemoryAccessRule& r) {
                             return r.drv_contains(a);
                           });
      };
      while (inside_any(ip)) ip += 0x100000;
      ev.ip = ip;
      const std::size_t width = 1 + rng() % 8;
      Address target = rule.alloc_addr + rng() % rule.alloc_size;
      if (target + width - 1 >= rule.alloc_addr + rule.alloc_size)
        target = rule.alloc_addr;  // stay decidably inside for first byte
      if (page_of(target) != page_of(target + width - 1)) continue;
      ev.target = target;
      ev.kind = rng() % 2 == 0 ? AccessKind::kRead : AccessKind::kWrite;
      ev.payload.assign(width, static_cast<std::uint8_t>(rng() | 1));

      const auto page_before =
          sim.machine().raw_read(page_base(page_of(target)), kPageSize);
      const auto outcome = sim.execute_access(ev);
      if (!outcome.denied) continue;  // a covering rule might permit via ip
      ++denied_checked;

      if (ev.kind == AccessKind::kRead) {
        CHECK(outcome.observed == std::vector<std::uint8_t>(width, 0));
      } else {
        const auto page_after =
            sim.machine().raw_read(page_base(page_of(target)), kPageSize);
        CHECK(page_before == page_after);
      }
      CHECK(sim.ept().quiescent());  // includes the all-zero decoy check
    }
  }
  CHECK(denied_checked == 10000);
}

TEST_CASE("permit paths are transparent against an unmediated oracle") {
  std::mt19937_64 rng(0x5EED0006);
  Simulator sim;
  sim.run_event(
      LoadEvent{"mem_allocator_driver.sys", kAllocatorBase, 0xB000, true, {}});
  sim.run_event(AllocEvent{"mem_allocator_driver.sys", kPoolAddr, 0x10});

  // oracle: plain byte array mirroring every granted write
  std::vector<std::uint8_t> mirror(kPageSize, 0);
  const Address page = page_base(page_of(kPoolAddr));
  // image pattern does not reach this page; start from the raw snapshot
  mirror = sim.machine().raw_read(page, kPageSize);

  for (int i = 0; i < 4000; ++i) {
    AccessEvent ev;
    ev.ip = kAllocatorBase + rng() % 0xB000;  // always the owner
    const std::size_t width = 1 + rng() % 8;
    Address target = page + rng() % (kPageSize - 8);
    ev.target = target;
    ev.kind = rng() % 2 == 0 ? AccessKind::kRead : AccessKind::kWrite;
    ev.payload.assign(width, static_cast<std::uint8_t>(rng()));

    const auto outcome = sim.execute_access(ev);
    CHECK_FALSE(outcome.denied);
    if (ev.kind == AccessKind::kWrite) {
      std::copy(ev.payload.begin(), ev.payload.end(),
                mirror.begin() + (target - page));
      CHECK(sim.machine().raw_read(target, width) == ev.payload);
    } else {
      const std::vector<std::uint8_t> expected(
          mirror.begin() + (target - page),
          mirror.begin() + (target - page) + width);
      CHECK(outcome.observed == expected);
    }
  }
  CHECK(sim.machine().raw_read(page, kPageSize) == mirror);
}
