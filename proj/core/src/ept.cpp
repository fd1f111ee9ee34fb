#include "allmempro/ept.hpp"

#include <algorithm>

#include "allmempro/errors.hpp"

namespace allmempro {

EptEntry EptTable::entry(PageIndex page) const {
  const auto it = entries_.find(page);
  if (it != entries_.end()) return it->second;
  return EptEntry{.pfn = page};
}

CheckResult EptTable::check(Address addr, AccessKind kind) const {
  return entry(page_of(addr)).permits(kind) ? CheckResult::kPermit
                                            : CheckResult::kViolation;
}

void EptTable::clear_rw(PageIndex page) {
  EptEntry e = entry(page);
  e.read_permit = false;
  e.write_permit = false;
  entries_[page] = e;
}

void EptTable::restore_default(PageIndex page) { entries_.erase(page); }

bool EptTable::rw_cleared(PageIndex page) const {
  const EptEntry e = entry(page);
  return !e.read_permit && !e.write_permit;
}

WindowToken EptTable::open_grant_window(PageIndex page, AccessKind kind) {
  if (open_window_)
    throw WindowAlreadyOpenError("a single-step window is already open");
  WindowToken token{page, entry(page), kind, /*deny=*/false, next_serial_++};
  EptEntry e = token.prior;
  (kind == AccessKind::kRead ? e.read_permit : e.write_permit) = true;
  entries_[page] = e;
  mtf_armed_ = true;
  open_window_ = token;
  return token;
}

WindowToken EptTable::open_deny_window(PageIndex page, AccessKind kind) {
  if (open_window_)
    throw WindowAlreadyOpenError("a single-step window is already open");
  WindowToken token{page, entry(page), kind, /*deny=*/true, next_serial_++};
  EptEntry e = token.prior;
  e.pfn = kFakePfn;
  (kind == AccessKind::kRead ? e.read_permit : e.write_permit) = true;
  entries_[page] = e;
  mtf_armed_ = true;
  open_window_ = token;
  return token;
}

void EptTable::close_window(const WindowToken& token) {
  if (!open_window_ || open_window_->serial != token.serial)
    throw StaleTokenError("token does not match the open window");
  if (is_default(token.page, token.prior))
    entries_.erase(token.page);
  else
    entries_[token.page] = token.prior;
  if (token.deny) decoy_.fill(0);
  mtf_armed_ = false;
  open_window_.reset();
}

EptTable::Translation EptTable::translate(Address addr) const {
  const EptEntry e = entry(page_of(addr));
  if (e.pfn == kFakePfn)
    return {.to_decoy = true, .location = page_offset(addr)};
  return {.to_decoy = false, .location = page_base(e.pfn) + page_offset(addr)};
}

bool EptTable::decoy_zeroed() const {
  return std::all_of(decoy_.begin(), decoy_.end(),
                     [](std::uint8_t b) { return b == 0; });
}

bool EptTable::quiescent() const {
  if (open_window_ || mtf_armed_ || !decoy_zeroed()) return false;
  for (const auto& [page, e] : entries_)
    if (e.pfn != page) return false;
  return true;
}

}  // namespace allmempro
