#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "allmempro/tracelog.hpp"
#include "allmempro/types.hpp"
#include "allmempro/vmm.hpp"

namespace allmempro {

// Scenario DSL command forms. Addresses and sizes are hex (case-insensitive,
// optional leading zeroes); `ip auto` resolves to the driver base + 0x1000 at
// run time.

struct LoadCmd {
  std::string name;
  Address base = 0;
  std::uint64_t size = 0;
  bool is_protected = false;
  std::vector<std::string> share_names;

  friend bool operator==(const LoadCmd&, const LoadCmd&) = default;
};

struct UnloadCmd {
  std::string name;

  friend bool operator==(const UnloadCmd&, const UnloadCmd&) = default;
};

struct AllocCmd {
  std::string driver;
  std::optional<Address> addr;  // nullopt = `addr auto`
  std::uint64_t size = 0;

  friend bool operator==(const AllocCmd&, const AllocCmd&) = default;
};

struct FreeCmd {
  std::string driver;
  Address addr = 0;

  friend bool operator==(const FreeCmd&, const FreeCmd&) = default;
};

// Context overrides shared by read/write commands; absent fields fall back
// to the default trace context.
struct ContextOverride {
  std::optional<int> cpu;
  std::optional<int> pid;
  std::optional<int> tid;
  std::optional<std::string> proc;

  AccessContext resolve() const;

  friend bool operator==(const ContextOverride&,
                         const ContextOverride&) = default;
};

struct ReadCmd {
  std::string driver;
  std::optional<Address> ip;  // nullopt = `ip auto`
  Address addr = 0;
  std::size_t width = 0;
  std::optional<std::vector<std::uint8_t>> expect;  // observed bytes
  ContextOverride context;

  friend bool operator==(const ReadCmd&, const ReadCmd&) = default;
};

struct WriteCmd {
  std::string driver;
  std::optional<Address> ip;
  Address addr = 0;
  std::vector<std::uint8_t> bytes;
  bool expect_unchanged = false;  // raw memory must survive the write
  ContextOverride context;

  friend bool operator==(const WriteCmd&, const WriteCmd&) = default;
};

struct RuleCmd {
  MemoryAccessRule rule;

  friend bool operator==(const RuleCmd&, const RuleCmd&) = default;
};

struct ConfigCmd {
  std::string key;
  std::string value;

  friend bool operator==(const ConfigCmd&, const ConfigCmd&) = default;
};

using Command = std::variant<LoadCmd, UnloadCmd, AllocCmd, FreeCmd, ReadCmd,
                             WriteCmd, RuleCmd, ConfigCmd>;

struct SourcedCommand {
  Command command;
  int line = 0;  // 1-based source line

  friend bool operator==(const SourcedCommand& a, const SourcedCommand& b) {
    return a.command == b.command;  // line numbers are not structural
  }
};

struct Scenario {
  std::vector<SourcedCommand> commands;
  std::string source_name = "<memory>";

  friend bool operator==(const Scenario& a, const Scenario& b) {
    return a.commands == b.commands;
  }
};

/// Parses scenario text. Lines are commands, `#` / `//` comments, or blank.
/// Throws ParseError at the first malformed line.
Scenario parse(std::string_view text, std::string source_name = "<memory>");

/// Canonical text form; parse(render(s)) equals s structurally.
std::string render(const Scenario& scenario);
std::string render_command(const Command& command);

struct RunOptions {
  bool continue_on_error = false;
  // Applied before the first command, as if `config key value` lines led
  // the scenario.
  std::map<std::string, std::string> config_overrides;
};

struct CommandOutcome {
  int line = 0;
  std::string rendered;
  bool executed = false;
  std::optional<bool> expectation_pass;
  std::string detail;
};

struct RuntimeErrorInfo {
  int line = 0;
  std::string message;
};

struct Report {
  std::string source;
  std::vector<CommandOutcome> commands;
  std::size_t expectations_total = 0;
  std::size_t expectations_passed = 0;
  Metrics metrics;
  CostModel cost;
  std::uint64_t modeled_ticks = 0;
  std::vector<TraceLine> trace;
  std::optional<RuntimeErrorInfo> error;

  bool ok() const {
    return !error && expectations_passed == expectations_total;
  }

  std::string to_text() const;
  std::string metrics_text() const;
  std::string trace_text() const;
};

/// Runs the scenario through a fresh simulator, evaluating inline
/// expectations. Execution stops at the first runtime error unless
/// continue_on_error is set; the error is recorded in the report.
Report run(const Scenario& scenario, const RunOptions& options = {});

/// Applies one `config` key/value to the simulator or run state.
/// Throws ConfigError on unknown keys or bad values.
void apply_config(Simulator& sim, bool& continue_on_error,
                  const std::string& key, const std::string& value);

}  // namespace allmempro
