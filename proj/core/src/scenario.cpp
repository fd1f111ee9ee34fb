#include "allmempro/scenario.hpp"

#include <algorithm>
#include <charconv>

#include "allmempro/errors.hpp"

namespace allmempro {

namespace {

struct Token {
  std::string text;
  int column = 0;  // 1-based
};

// Whitespace-delimited tokens; a token starting with '#' or '//' begins a
// trailing comment and ends the line.
std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    std::string_view text = line.substr(start, i - start);
    if (text[0] == '#' || text.starts_with("//")) break;
    tokens.push_back({std::string(text), static_cast<int>(start) + 1});
  }
  return tokens;
}

// Prefix of the line before any trailing comment token.
std::string_view strip_comment(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    const std::string_view tok = line.substr(start, i - start);
    if (tok[0] == '#' || tok.starts_with("//")) return line.substr(0, start);
  }
  return line;
}

[[noreturn]] void fail(int line, const Token& tok, const std::string& msg) {
  throw ParseError(line, tok.column, msg + " (got '" + tok.text + "')");
}

[[noreturn]] void fail_eol(int line, std::string_view source_line,
                           const std::string& msg) {
  throw ParseError(line, static_cast<int>(source_line.size()) + 1, msg);
}

std::uint64_t expect_hex(int line, const Token& tok) {
  const auto value = parse_hex(tok.text);
  if (!value) fail(line, tok, "expected a hex value");
  return *value;
}

std::uint64_t expect_dec(int line, const Token& tok) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(
      tok.text.data(), tok.text.data() + tok.text.size(), value, 10);
  if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size())
    fail(line, tok, "expected a decimal value");
  return value;
}

std::vector<std::string> split_names(std::string_view csv) {
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string_view piece =
        csv.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                          : comma - start);
    if (!piece.empty()) names.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return names;
}

// Shared `key=value` suffix handling for read/write commands.
bool parse_context_token(int line, const Token& tok, ContextOverride& ctx) {
  const auto eq = tok.text.find('=');
  if (eq == std::string::npos) return false;
  const std::string_view key(tok.text.data(), eq);
  const std::string value = tok.text.substr(eq + 1);
  const Token value_tok{value, tok.column + static_cast<int>(eq) + 1};
  if (key == "cpu") ctx.cpu = static_cast<int>(expect_dec(line, value_tok));
  else if (key == "pid") ctx.pid = static_cast<int>(expect_dec(line, value_tok));
  else if (key == "tid") ctx.tid = static_cast<int>(expect_dec(line, value_tok));
  else if (key == "proc") {
    if (value.empty()) fail(line, tok, "proc= needs a name");
    ctx.proc = value;
  } else {
    return false;
  }
  return true;
}

Command parse_load(int line, std::string_view src,
                   const std::vector<Token>& t) {
  if (t.size() < 2) fail_eol(line, src, "load needs a module name");
  LoadCmd cmd;
  cmd.name = t[1].text;
  bool have_base = false, have_size = false;
  for (std::size_t i = 2; i < t.size(); ++i) {
    if (t[i].text == "base") {
      if (++i >= t.size()) fail_eol(line, src, "base needs a value");
      cmd.base = expect_hex(line, t[i]);
      have_base = true;
    } else if (t[i].text == "size") {
      if (++i >= t.size()) fail_eol(line, src, "size needs a value");
      cmd.size = expect_hex(line, t[i]);
      have_size = true;
    } else if (t[i].text == "protected") {
      cmd.is_protected = true;
    } else if (t[i].text.starts_with("share=")) {
      cmd.share_names = split_names(std::string_view(t[i].text).substr(6));
      if (cmd.share_names.empty()) fail(line, t[i], "share= needs names");
    } else {
      fail(line, t[i], "unexpected token in load");
    }
  }
  if (!have_base || !have_size) fail_eol(line, src, "load needs base and size");
  return cmd;
}

Command parse_unload(int line, std::string_view src,
                     const std::vector<Token>& t) {
  if (t.size() != 2) fail_eol(line, src, "unload takes exactly a module name");
  return UnloadCmd{t[1].text};
}

Command parse_alloc(int line, std::string_view src,
                    const std::vector<Token>& t) {
  if (t.size() != 6 || t[2].text != "addr" || t[4].text != "size")
    fail_eol(line, src, "alloc form: alloc <driver> addr <hex>|auto size <hex>");
  AllocCmd cmd;
  cmd.driver = t[1].text;
  if (t[3].text != "auto") cmd.addr = expect_hex(line, t[3]);
  cmd.size = expect_hex(line, t[5]);
  return cmd;
}

Command parse_free(int line, std::string_view src,
                   const std::vector<Token>& t) {
  if (t.size() != 4 || t[2].text != "addr")
    fail_eol(line, src, "free form: free <driver> addr <hex>");
  return FreeCmd{t[1].text, expect_hex(line, t[3])};
}

Command parse_read(int line, std::string_view src,
                   const std::vector<Token>& t) {
  if (t.size() < 8 || t[2].text != "ip" || t[4].text != "addr" ||
      t[6].text != "width")
    fail_eol(line, src,
             "read form: read <driver> ip <hex>|auto addr <hex> width <n>");
  ReadCmd cmd;
  cmd.driver = t[1].text;
  if (t[3].text != "auto") cmd.ip = expect_hex(line, t[3]);
  cmd.addr = expect_hex(line, t[5]);
  cmd.width = static_cast<std::size_t>(expect_dec(line, t[7]));
  if (cmd.width < 1 || cmd.width > 8)
    fail(line, t[7], "width must be 1..8");
  for (std::size_t i = 8; i < t.size(); ++i) {
    if (t[i].text.starts_with("expect=")) {
      const auto bytes =
          parse_hex_bytes(std::string_view(t[i].text).substr(7));
      if (!bytes) fail(line, t[i], "expect= needs hex byte pairs");
      if (bytes->size() != cmd.width)
        fail(line, t[i], "expect= length must match width");
      cmd.expect = *bytes;
    } else if (!parse_context_token(line, t[i], cmd.context)) {
      fail(line, t[i], "unexpected token in read");
    }
  }
  return cmd;
}

Command parse_write(int line, std::string_view src,
                    const std::vector<Token>& t) {
  if (t.size() < 8 || t[2].text != "ip" || t[4].text != "addr" ||
      t[6].text != "bytes")
    fail_eol(line, src,
             "write form: write <driver> ip <hex>|auto addr <hex> bytes <hex>");
  WriteCmd cmd;
  cmd.driver = t[1].text;
  if (t[3].text != "auto") cmd.ip = expect_hex(line, t[3]);
  cmd.addr = expect_hex(line, t[5]);
  const auto bytes = parse_hex_bytes(t[7].text);
  if (!bytes || bytes->empty()) fail(line, t[7], "bytes needs hex byte pairs");
  if (bytes->size() > 8) fail(line, t[7], "write width must be 1..8");
  cmd.bytes = *bytes;
  for (std::size_t i = 8; i < t.size(); ++i) {
    if (t[i].text == "expect_unchanged") {
      cmd.expect_unchanged = true;
    } else if (!parse_context_token(line, t[i], cmd.context)) {
      fail(line, t[i], "unexpected token in write");
    }
  }
  return cmd;
}

Command parse_config(int line, std::string_view src,
                     const std::vector<Token>& t) {
  if (t.size() != 3) fail_eol(line, src, "config form: config <key> <value>");
  return ConfigCmd{t[1].text, t[2].text};
}

}  // namespace

AccessContext ContextOverride::resolve() const {
  AccessContext ctx;
  if (cpu) ctx.cpu = *cpu;
  if (pid) ctx.pid = *pid;
  if (tid) ctx.tid = *tid;
  if (proc) ctx.process_name = *proc;
  return ctx;
}

Scenario parse(std::string_view text, std::string source_name) {
  Scenario scenario;
  scenario.source_name = std::move(source_name);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? std::string_view::npos
                                           : eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;

    const auto tokens = tokenize(line);
    if (!tokens.empty()) {
      const std::string& verb = tokens[0].text;
      Command cmd;
      if (verb == "load") cmd = parse_load(line_no, line, tokens);
      else if (verb == "unload") cmd = parse_unload(line_no, line, tokens);
      else if (verb == "alloc") cmd = parse_alloc(line_no, line, tokens);
      else if (verb == "free") cmd = parse_free(line_no, line, tokens);
      else if (verb == "read") cmd = parse_read(line_no, line, tokens);
      else if (verb == "write") cmd = parse_write(line_no, line, tokens);
      else if (verb == "config") cmd = parse_config(line_no, line, tokens);
      else if (verb == "rule") {
        try {
          cmd = RuleCmd{parse_rule_line(strip_comment(line))};
        } catch (const ParseError& e) {
          throw ParseError(line_no, e.column(), e.message());
        }
      } else {
        fail(line_no, tokens[0], "unknown command");
      }
      scenario.commands.push_back({std::move(cmd), line_no});
    }

    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return scenario;
}

namespace {

std::string render_context(const ContextOverride& ctx) {
  std::string out;
  if (ctx.cpu) out += " cpu=" + std::to_string(*ctx.cpu);
  if (ctx.pid) out += " pid=" + std::to_string(*ctx.pid);
  if (ctx.tid) out += " tid=" + std::to_string(*ctx.tid);
  if (ctx.proc) out += " proc=" + *ctx.proc;
  return out;
}

struct CommandRenderer {
  std::string operator()(const LoadCmd& c) const {
    std::string out = "load " + c.name + " base " + hex_compact(c.base) +
                      " size " + hex_compact(c.size);
    if (c.is_protected) out += " protected";
    if (!c.share_names.empty()) {
      out += " share=";
      for (std::size_t i = 0; i < c.share_names.size(); ++i) {
        if (i) out += ',';
        out += c.share_names[i];
      }
    }
    return out;
  }
  std::string operator()(const UnloadCmd& c) const {
    return "unload " + c.name;
  }
  std::string operator()(const AllocCmd& c) const {
    return "alloc " + c.driver + " addr " +
           (c.addr ? hex_compact(*c.addr) : std::string("auto")) + " size " +
           hex_compact(c.size);
  }
  std::string operator()(const FreeCmd& c) const {
    return "free " + c.driver + " addr " + hex_compact(c.addr);
  }
  std::string operator()(const ReadCmd& c) const {
    std::string out = "read " + c.driver + " ip " +
                      (c.ip ? hex_compact(*c.ip) : std::string("auto")) +
                      " addr " + hex_compact(c.addr) + " width " +
                      std::to_string(c.width);
    if (c.expect) out += " expect=" + hex_bytes(*c.expect);
    return out + render_context(c.context);
  }
  std::string operator()(const WriteCmd& c) const {
    std::string out = "write " + c.driver + " ip " +
                      (c.ip ? hex_compact(*c.ip) : std::string("auto")) +
                      " addr " + hex_compact(c.addr) + " bytes " +
                      hex_bytes(c.bytes);
    if (c.expect_unchanged) out += " expect_unchanged";
    return out + render_context(c.context);
  }
  std::string operator()(const RuleCmd& c) const {
    return render_rule_line(c.rule);
  }
  std::string operator()(const ConfigCmd& c) const {
    return "config " + c.key + " " + c.value;
  }
};

}  // namespace

std::string render_command(const Command& command) {
  return std::visit(CommandRenderer{}, command);
}

std::string render(const Scenario& scenario) {
  std::string out;
  for (const auto& sourced : scenario.commands) {
    out += render_command(sourced.command);
    out += '\n';
  }
  return out;
}

namespace {

bool parse_bool_value(const std::string& value, bool& out) {
  if (value == "0" || value == "false") { out = false; return true; }
  if (value == "1" || value == "true") { out = true; return true; }
  return false;
}

std::uint64_t config_dec(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out, 10);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("config " + key + ": expected a decimal value, got '" +
                      value + "'");
  return out;
}

}  // namespace

void apply_config(Simulator& sim, bool& continue_on_error,
                  const std::string& key, const std::string& value) {
  if (key == "pool_base") {
    const auto addr = parse_hex(value);
    if (!addr) throw ConfigError("config pool_base: bad hex '" + value + "'");
    sim.set_pool_base(*addr);
  } else if (key == "protect_module_image") {
    bool on = false;
    if (!parse_bool_value(value, on))
      throw ConfigError("config protect_module_image: expected 0 or 1");
    sim.policy().set_protect_module_image(on);
  } else if (key == "continue_on_error") {
    bool on = false;
    if (!parse_bool_value(value, on))
      throw ConfigError("config continue_on_error: expected 0 or 1");
    continue_on_error = on;
  } else if (key == "epoch") {
    const auto ms = SimClock::parse_epoch(value);
    if (!ms)
      throw ConfigError("config epoch: expected HH:MM:SS.mmm, got '" + value +
                        "'");
    sim.trace().clock().set_epoch_ms(*ms);
  } else if (key == "ticks_per_ms") {
    sim.trace().clock().set_ticks_per_ms(config_dec(key, value));
  } else if (key == "cost_cached" || key == "cost_uncached" ||
             key == "cost_mediated") {
    CostModel cost = sim.cost_model();
    if (key == "cost_cached") cost.cached_unprotected = config_dec(key, value);
    if (key == "cost_uncached")
      cost.uncached_unprotected = config_dec(key, value);
    if (key == "cost_mediated") cost.mediated = config_dec(key, value);
    sim.set_cost_model(cost);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

namespace {

Address resolve_ip(const Machine& machine, const std::string& driver,
                   std::optional<Address> ip) {
  const auto id = machine.find_module(driver);
  if (!id)
    throw UnknownModuleError("module '" + driver + "' is not loaded");
  const ModuleImage& mod = machine.module_info(*id);
  if (!ip) return mod.base + 0x1000;  // `ip auto`
  if (!mod.contains(*ip))
    throw Error("ip " + hex_compact(*ip) + " lies outside module '" + driver +
                "'");
  return *ip;
}

struct CommandExecutor {
  Simulator& sim;
  bool& continue_on_error;
  CommandOutcome& outcome;

  void operator()(const LoadCmd& c) const {
    const auto result = sim.run_event(
        LoadEvent{c.name, c.base, c.size, c.is_protected, c.share_names});
    outcome.detail =
        "loaded as module #" + std::to_string(*result.module_id);
  }
  void operator()(const UnloadCmd& c) const {
    sim.run_event(UnloadEvent{c.name});
    outcome.detail = "unloaded";
  }
  void operator()(const AllocCmd& c) const {
    const auto result = sim.run_event(AllocEvent{c.driver, c.addr, c.size});
    outcome.detail = "allocated " + hex_compact(*result.alloc_addr) + " +" +
                     hex_compact(c.size) + ", " +
                     std::to_string(result.rules_added.size()) + " rule(s)";
  }
  void operator()(const FreeCmd& c) const {
    sim.run_event(FreeEvent{c.driver, c.addr});
    outcome.detail = "freed " + hex_compact(c.addr) + ", zeroed";
  }
  void operator()(const ReadCmd& c) const {
    AccessEvent event;
    event.ip = resolve_ip(sim.machine(), c.driver, c.ip);
    event.target = c.addr;
    event.kind = AccessKind::kRead;
    event.payload.assign(c.width, 0);
    event.context = c.context.resolve();
    const auto result = sim.run_event(event);
    const AccessOutcome& access = *result.access;
    outcome.detail = "observed " + hex_bytes(access.observed) + " (" +
                     action_name(access.decision.action) + ", " +
                     std::to_string(access.exits) + " exits)";
    if (c.expect) {
      const bool pass = access.observed == *c.expect;
      outcome.expectation_pass = pass;
      if (!pass)
        outcome.detail += "; expected " + hex_bytes(*c.expect);
    }
  }
  void operator()(const WriteCmd& c) const {
    AccessEvent event;
    event.ip = resolve_ip(sim.machine(), c.driver, c.ip);
    event.target = c.addr;
    event.kind = AccessKind::kWrite;
    event.payload = c.bytes;
    event.context = c.context.resolve();
    const auto before = sim.machine().raw_read(c.addr, c.bytes.size());
    const auto result = sim.run_event(event);
    const auto after = sim.machine().raw_read(c.addr, c.bytes.size());
    const AccessOutcome& access = *result.access;
    outcome.detail = "raw " + hex_bytes(before) + " -> " + hex_bytes(after) +
                     " (" + action_name(access.decision.action) + ", " +
                     std::to_string(access.exits) + " exits)";
    if (c.expect_unchanged) {
      const bool pass = before == after;
      outcome.expectation_pass = pass;
      if (!pass) outcome.detail += "; expected raw memory unchanged";
    }
  }
  void operator()(const RuleCmd& c) const {
    sim.run_event(RuleEvent{c.rule});
    outcome.detail = "rule added";
  }
  void operator()(const ConfigCmd& c) const {
    apply_config(sim, continue_on_error, c.key, c.value);
    outcome.detail = c.key + " set to " + c.value;
  }
};

}  // namespace

Report run(const Scenario& scenario, const RunOptions& options) {
  Simulator sim;
  Report report;
  report.source = scenario.source_name;
  bool continue_on_error = options.continue_on_error;

  for (const auto& [key, value] : options.config_overrides)
    apply_config(sim, continue_on_error, key, value);

  for (const auto& sourced : scenario.commands) {
    CommandOutcome outcome;
    outcome.line = sourced.line;
    outcome.rendered = render_command(sourced.command);
    bool stop = false;
    try {
      std::visit(CommandExecutor{sim, continue_on_error, outcome},
                 sourced.command);
      outcome.executed = true;
    } catch (const Error& e) {
      const RuntimeError tagged(sourced.line, e.what());
      outcome.detail = tagged.what();
      if (!report.error)
        report.error = RuntimeErrorInfo{sourced.line, e.what()};
      stop = !continue_on_error;
    }
    report.commands.push_back(std::move(outcome));
    if (stop) break;
  }

  for (const auto& outcome : report.commands) {
    if (!outcome.expectation_pass.has_value()) continue;
    report.expectations_total += 1;
    if (*outcome.expectation_pass) report.expectations_passed += 1;
  }
  report.metrics = sim.metrics();
  report.cost = sim.cost_model();
  report.modeled_ticks = sim.modeled_ticks();
  if (!metrics_consistent(report.metrics))
    throw std::logic_error("metrics identities violated after scenario run");
  report.trace = sim.trace().lines();
  return report;
}

std::string Report::to_text() const {
  std::string out = "scenario " + source + "\n";
  for (const auto& cmd : commands) {
    out += "  line " + std::to_string(cmd.line) + ": " + cmd.rendered + "\n";
    std::string status;
    if (cmd.expectation_pass.has_value())
      status = *cmd.expectation_pass ? " [PASS]" : " [FAIL]";
    out += "    -> " + cmd.detail + status + "\n";
  }
  out += "expectations: " + std::to_string(expectations_passed) + "/" +
         std::to_string(expectations_total) + " passed\n";
  if (error)
    out += "error: line " + std::to_string(error->line) + ": " +
           error->message + "\n";
  out += "status: " + std::string(ok() ? "OK" : "FAILED") + "\n";
  out += metrics_text();
  return out;
}

std::string Report::metrics_text() const {
  return render_metrics(metrics, cost);
}

std::string Report::trace_text() const {
  std::string out;
  for (const auto& line : trace) {
    out += line.rendered;
    out += '\n';
  }
  return out;
}

}  // namespace allmempro
