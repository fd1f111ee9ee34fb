#include <doctest.h>

#include <algorithm>

#include "allmempro/ept.hpp"
#include "allmempro/errors.hpp"

using namespace allmempro;

namespace {
constexpr PageIndex kPage = 0xFFFFA400AC479;
constexpr Address kAddr = 0xFFFFA400AC479FD8;
}  // namespace

TEST_CASE("default entries permit everything and map identity") {
  EptTable ept;
  CHECK(ept.check(kAddr, AccessKind::kRead) == CheckResult::kPermit);
  CHECK(ept.check(kAddr, AccessKind::kWrite) == CheckResult::kPermit);
  const EptEntry e = ept.entry(kPage);
  CHECK(e.pfn == kPage);
  CHECK(e.exec_permit);
  const auto t = ept.translate(kAddr);
  CHECK_FALSE(t.to_decoy);
  CHECK(t.location == kAddr);
}

TEST_CASE("clear_rw traps both kinds on that page only") {
  EptTable ept;
  ept.clear_rw(kPage);
  CHECK(ept.check(kAddr, AccessKind::kRead) == CheckResult::kViolation);
  CHECK(ept.check(kAddr, AccessKind::kWrite) == CheckResult::kViolation);
  CHECK(ept.check(0xFFFFA400AC478FFF, AccessKind::kRead) ==
        CheckResult::kPermit);
  CHECK(ept.entry(kPage).exec_permit);

  ept.clear_rw(kPage);  // idempotent
  CHECK(ept.rw_cleared(kPage));

  ept.restore_default(kPage);
  CHECK(ept.check(kAddr, AccessKind::kRead) == CheckResult::kPermit);
  CHECK(ept.entries().empty());
}

TEST_CASE("check is pure") {
  EptTable ept;
  ept.clear_rw(kPage);
  const auto first = ept.check(kAddr, AccessKind::kRead);
  const auto second = ept.check(kAddr, AccessKind::kRead);
  CHECK(first == second);
}

TEST_CASE("grant window sets only the named permit and arms MTF") {
  EptTable ept;
  ept.clear_rw(kPage);
  const EptEntry prior = ept.entry(kPage);

  const WindowToken token = ept.open_grant_window(kPage, AccessKind::kRead);
  CHECK(token.prior == prior);
  CHECK(ept.check(kAddr, AccessKind::kRead) == CheckResult::kPermit);
  CHECK(ept.check(kAddr, AccessKind::kWrite) == CheckResult::kViolation);
  CHECK(ept.mtf_armed());
  CHECK_FALSE(ept.translate(kAddr).to_decoy);

  ept.close_window(token);
  CHECK(ept.entry(kPage) == prior);
  CHECK_FALSE(ept.mtf_armed());
  CHECK(ept.check(kAddr, AccessKind::kRead) == CheckResult::kViolation);
}

TEST_CASE("only one window may be open") {
  EptTable ept;
  const WindowToken token = ept.open_grant_window(kPage, AccessKind::kWrite);
  CHECK_THROWS_AS(ept.open_grant_window(kPage, AccessKind::kRead),
                  WindowAlreadyOpenError);
  CHECK_THROWS_AS(ept.open_deny_window(kPage + 1, AccessKind::kRead),
                  WindowAlreadyOpenError);
  ept.close_window(token);
}

TEST_CASE("deny window redirects the page to the decoy") {
  EptTable ept;
  ept.clear_rw(kPage);
  const WindowToken token = ept.open_deny_window(kPage, AccessKind::kRead);
  const auto t = ept.translate(kAddr);
  CHECK(t.to_decoy);
  CHECK(t.location == page_offset(kAddr));
  CHECK(ept.check(kAddr, AccessKind::kRead) == CheckResult::kPermit);
  ept.close_window(token);
  CHECK_FALSE(ept.translate(kAddr).to_decoy);
}

TEST_CASE("decoy page is rezeroed on every deny-window close") {
  EptTable ept;
  ept.clear_rw(kPage);
  for (int round = 0; round < 8; ++round) {
    const WindowToken token = ept.open_deny_window(kPage, AccessKind::kWrite);
    auto decoy = ept.decoy_page();
    decoy[round] = 0xFF;
    decoy[4095] = 0xAB;
    ept.close_window(token);
    // full-page scan after every close
    const auto after = ept.decoy_page();
    CHECK(std::all_of(after.begin(), after.end(),
                      [](std::uint8_t b) { return b == 0; }));
  }
}

TEST_CASE("stale or missing tokens are rejected") {
  EptTable ept;
  WindowToken stale = ept.open_grant_window(kPage, AccessKind::kRead);
  ept.close_window(stale);
  CHECK_THROWS_AS(ept.close_window(stale), StaleTokenError);

  const WindowToken current = ept.open_grant_window(kPage, AccessKind::kRead);
  CHECK_THROWS_AS(ept.close_window(stale), StaleTokenError);
  ept.close_window(current);
}

TEST_CASE("windows restore quiescence") {
  EptTable ept;
  CHECK(ept.quiescent());
  ept.clear_rw(kPage);
  CHECK(ept.quiescent());  // cleared permits are quiescent; remapping is not

  const WindowToken grant = ept.open_grant_window(kPage, AccessKind::kRead);
  CHECK_FALSE(ept.quiescent());
  ept.close_window(grant);
  CHECK(ept.quiescent());

  const WindowToken deny = ept.open_deny_window(kPage, AccessKind::kWrite);
  CHECK_FALSE(ept.quiescent());
  ept.close_window(deny);
  CHECK(ept.quiescent());
}
