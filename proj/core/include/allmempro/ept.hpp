#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>

#include "allmempro/types.hpp"

namespace allmempro {

/// Per-page translation record. In quiescent state the pfn is the identity
/// mapping for its page; exec_permit is always true in this artifact.
struct EptEntry {
  std::uint64_t pfn = 0;
  bool read_permit = true;
  bool write_permit = true;
  bool exec_permit = true;

  bool permits(AccessKind kind) const {
    return kind == AccessKind::kRead ? read_permit : write_permit;
  }

  friend bool operator==(const EptEntry&, const EptEntry&) = default;
};

enum class CheckResult : std::uint8_t { kPermit, kViolation };

/// Restoration bookkeeping for the single-instruction grant/deny window.
struct WindowToken {
  PageIndex page = 0;
  EptEntry prior;
  AccessKind kind = AccessKind::kRead;
  bool deny = false;
  std::uint64_t serial = 0;
};

/// The simulated EPT layer: per-page permits and frame mapping, the all-zero
/// decoy page, and the temporary permission/PFN flips around a mediated
/// access. Unmapped pages resolve to a default entry (identity pfn, all
/// permits set).
class EptTable {
 public:
  /// Frame number that redirects a page to the decoy.
  static constexpr std::uint64_t kFakePfn = ~std::uint64_t{0};

  /// Entry currently governing the page (stored or default).
  EptEntry entry(PageIndex page) const;

  /// Permit iff the entry for addr's page permits the kind. Pure.
  CheckResult check(Address addr, AccessKind kind) const;

  void clear_rw(PageIndex page);
  void restore_default(PageIndex page);
  bool rw_cleared(PageIndex page) const;

  /// Sets the named permit on the page and arms the MTF.
  /// Throws WindowAlreadyOpenError.
  WindowToken open_grant_window(PageIndex page, AccessKind kind);

  /// Swaps the page's pfn to the decoy and sets the named permit; arms MTF.
  /// Throws WindowAlreadyOpenError.
  WindowToken open_deny_window(PageIndex page, AccessKind kind);

  /// Restores the pre-window entry, disarms MTF, and re-zeroes the decoy
  /// after a deny window. Throws StaleTokenError.
  void close_window(const WindowToken& token);

  bool window_open() const { return open_window_.has_value(); }
  bool mtf_armed() const { return mtf_armed_; }

  struct Translation {
    bool to_decoy = false;
    // Guest-physical address for normal pages; byte offset into the decoy
    // page when to_decoy is set.
    Address location = 0;
  };
  Translation translate(Address addr) const;

  std::span<std::uint8_t> decoy_page() { return decoy_; }
  std::span<const std::uint8_t> decoy_page() const { return decoy_; }
  bool decoy_zeroed() const;

  /// True iff no window is open, MTF is disarmed, every entry is
  /// identity-mapped, and the decoy page is all-zero.
  bool quiescent() const;

  const std::unordered_map<PageIndex, EptEntry>& entries() const {
    return entries_;
  }

 private:
  static bool is_default(PageIndex page, const EptEntry& e) {
    return e == EptEntry{.pfn = page};
  }

  std::unordered_map<PageIndex, EptEntry> entries_;
  std::array<std::uint8_t, kPageSize> decoy_{};
  std::optional<WindowToken> open_window_;
  bool mtf_armed_ = false;
  std::uint64_t next_serial_ = 1;
};

}  // namespace allmempro
