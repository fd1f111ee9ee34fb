#include "allmempro/tracelog.hpp"

#include <cstdio>

#include "allmempro/errors.hpp"

namespace allmempro {

void SimClock::set_ticks_per_ms(std::uint64_t tpm) {
  if (tpm == 0) throw ConfigError("ticks_per_ms must be positive");
  ticks_per_ms_ = tpm;
}

std::string SimClock::timestamp() const {
  const std::uint64_t ms_total = epoch_ms_ + ticks_ / ticks_per_ms_;
  const std::uint64_t ms_of_day = ms_total % (24ull * 60 * 60 * 1000);
  const unsigned h = static_cast<unsigned>(ms_of_day / 3600000);
  const unsigned m = static_cast<unsigned>(ms_of_day / 60000 % 60);
  const unsigned s = static_cast<unsigned>(ms_of_day / 1000 % 60);
  const unsigned ms = static_cast<unsigned>(ms_of_day % 1000);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02u:%02u:%02u.%03u", h, m, s, ms);
  return buf;
}

std::optional<std::uint64_t> SimClock::parse_epoch(std::string_view text) {
  unsigned h = 0, m = 0, s = 0, ms = 0;
  if (std::sscanf(std::string(text).c_str(), "%u:%u:%u.%u", &h, &m, &s, &ms) !=
      4)
    return std::nullopt;
  if (h >= 24 || m >= 60 || s >= 60 || ms >= 1000) return std::nullopt;
  return ((static_cast<std::uint64_t>(h) * 60 + m) * 60 + s) * 1000 + ms;
}

bool metrics_consistent(const Metrics& m) {
  return m.mtf_traps == m.ept_violations &&
         m.denied_reads + m.denied_writes + m.granted_accesses ==
             m.ept_violations;
}

std::string render_metrics(const Metrics& m, const CostModel& cost) {
  std::string out;
  const auto line = [&out](const char* key, std::uint64_t value) {
    out += key;
    out += '=';
    out += std::to_string(value);
    out += '\n';
  };
  line("ept_violations", m.ept_violations);
  line("mtf_traps", m.mtf_traps);
  line("denied_reads", m.denied_reads);
  line("denied_writes", m.denied_writes);
  line("granted_accesses", m.granted_accesses);
  line("unmediated_accesses", m.unmediated_accesses);
  line("modeled_ticks", cost.estimate(m));
  return out;
}

std::string format_header(const AccessContext& ctx, const SimClock& clock) {
  return clock.timestamp() + " INF #" + std::to_string(ctx.cpu) + " " +
         std::to_string(ctx.pid) + " " + std::to_string(ctx.tid) + " " +
         ctx.process_name;
}

TraceLine format_access(const AccessEvent& event,
                        std::optional<Address> src_module_base,
                        std::span<const std::uint8_t> before,
                        std::span<const std::uint8_t> after,
                        const SimClock& clock) {
  std::string body = format_header(event.context, clock) + "\n";
  body += "S= " + hex_address(event.ip) + " (" +
          (src_module_base ? hex_address(*src_module_base)
                           : std::string(16, '0')) +
          "), D= " + hex_address(event.target) + " (" + std::string(16, '0') +
          "), T= ";
  body += access_kind_letter(event.kind);
  if (event.kind == AccessKind::kWrite) {
    body += ",\n";
    body += hex_dump(before);
    body += " => ";
    body += hex_dump(after);
  }
  return {std::move(body), TraceLine::Kind::kAccess};
}

std::vector<TraceLine> format_denial(Address ip, Address target,
                                     AccessKind kind, const AccessContext& ctx,
                                     const SimClock& clock) {
  std::vector<TraceLine> lines;
  lines.push_back({"illegal access " + hex_address(ip) + " ==>> " +
                       hex_address(target),
                   TraceLine::Kind::kDenialBanner});
  lines.push_back({"** RweHandleMonitorTrapFlag " + hex_address(ip) + " " +
                       hex_address(target) + " **",
                   TraceLine::Kind::kMtfBanner});
  lines.push_back(
      {format_header(ctx, clock) +
           "\n[Protected via ActiveMemPolice] Memory is being " +
           (kind == AccessKind::kRead ? "READ" : "WRITTEN") +
           ". Returning fake contents.",
       TraceLine::Kind::kDenialBanner});
  return lines;
}

void TraceLog::append(std::vector<TraceLine> lines) {
  for (auto& line : lines) lines_.push_back(std::move(line));
}

std::string TraceLog::text() const {
  std::string out;
  for (const auto& line : lines_) {
    out += line.rendered;
    out += '\n';
  }
  return out;
}

}  // namespace allmempro
