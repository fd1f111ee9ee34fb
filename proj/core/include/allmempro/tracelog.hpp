#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "allmempro/events.hpp"
#include "allmempro/types.hpp"

namespace allmempro {

struct TraceLine {
  enum class Kind : std::uint8_t { kAccess, kDenialBanner, kMtfBanner };

  std::string rendered;
  Kind kind = Kind::kAccess;
};

/// Deterministic wall clock for trace headers. Starts at a configurable
/// epoch and advances by modeled ticks at a fixed ticks-per-millisecond
/// rate; purely cosmetic.
class SimClock {
 public:
  static constexpr std::uint64_t kDefaultEpochMs =
      ((22ull * 60 + 34) * 60 + 47) * 1000;  // 22:34:47.000

  void set_epoch_ms(std::uint64_t ms) { epoch_ms_ = ms; ticks_ = 0; }
  void set_ticks_per_ms(std::uint64_t tpm);
  std::uint64_t ticks_per_ms() const { return ticks_per_ms_; }

  void advance_ticks(std::uint64_t ticks) { ticks_ += ticks; }

  /// HH:MM:SS.mmm, wrapping at 24 h.
  std::string timestamp() const;

  /// Parses "HH:MM:SS.mmm" into milliseconds since midnight.
  static std::optional<std::uint64_t> parse_epoch(std::string_view text);

 private:
  std::uint64_t epoch_ms_ = kDefaultEpochMs;
  std::uint64_t ticks_per_ms_ = 1000;
  std::uint64_t ticks_ = 0;
};

struct Metrics {
  std::uint64_t ept_violations = 0;
  std::uint64_t mtf_traps = 0;
  std::uint64_t denied_reads = 0;
  std::uint64_t denied_writes = 0;
  std::uint64_t granted_accesses = 0;
  std::uint64_t unmediated_accesses = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Two-exit law and the denial/grant partition.
bool metrics_consistent(const Metrics& m);

/// Per-access latency constants in TSC ticks. Each default is the measured
/// total for 10 access attempts divided by 10; all three are configurable.
struct CostModel {
  std::uint64_t cached_unprotected = 7;
  std::uint64_t uncached_unprotected = 10000;
  std::uint64_t mediated = 50000;

  bool valid() const {
    return cached_unprotected > 0 &&
           mediated > uncached_unprotected &&
           uncached_unprotected > cached_unprotected;
  }

  /// Modeled cost of the counted accesses, in ticks. A model, not a
  /// measurement: mediated accesses at the mediated rate, unmediated ones
  /// at the uncached rate.
  std::uint64_t estimate(const Metrics& m) const {
    return mediated * (m.granted_accesses + m.denied_reads + m.denied_writes) +
           uncached_unprotected * m.unmediated_accesses;
  }
};

/// `key=value` lines: the six counters plus modeled_ticks.
std::string render_metrics(const Metrics& m, const CostModel& cost);

/// Header line shared by access and banner records:
/// `HH:MM:SS.mmm INF #<cpu> <pid> <tid> <proc>`.
std::string format_header(const AccessContext& ctx, const SimClock& clock);

/// The standard access record: header line plus
/// `S= <ip> (<src module base or 16 zeros>), D= <target> (0000000000000000), T= <R|W>`.
/// Writes append `,` and the 16-byte aligned before/after window dump.
TraceLine format_access(const AccessEvent& event,
                        std::optional<Address> src_module_base,
                        std::span<const std::uint8_t> before,
                        std::span<const std::uint8_t> after,
                        const SimClock& clock);

/// The denial preamble, in order: the `illegal access` line, the monitor-trap
/// banner, and the fake-contents banner matching the access kind. The caller
/// appends the standard access line.
std::vector<TraceLine> format_denial(Address ip, Address target,
                                     AccessKind kind, const AccessContext& ctx,
                                     const SimClock& clock);

/// Append-only trace sink owned by the simulator.
class TraceLog {
 public:
  void append(TraceLine line) { lines_.push_back(std::move(line)); }
  void append(std::vector<TraceLine> lines);

  const std::vector<TraceLine>& lines() const { return lines_; }
  std::size_t size() const { return lines_.size(); }

  /// All records joined with newlines (each record ends with one).
  std::string text() const;

  SimClock& clock() { return clock_; }
  const SimClock& clock() const { return clock_; }

 private:
  std::vector<TraceLine> lines_;
  SimClock clock_;
};

}  // namespace allmempro
