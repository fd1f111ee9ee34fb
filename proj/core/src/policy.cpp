#include "allmempro/policy.hpp"

#include <algorithm>

#include "allmempro/errors.hpp"

namespace allmempro {

namespace {

struct Token {
  std::string_view text;
  int column = 0;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    tokens.push_back({line.substr(start, i - start),
                      static_cast<int>(start) + 1});
  }
  return tokens;
}

bool parse_flag_token(const Token& tok, char name, bool& out) {
  if (tok.text.size() != 3 || tok.text[1] != '=') return false;
  const char key = tok.text[0];
  if (key != name && key != static_cast<char>(name + ('a' - 'A')))
    return false;
  if (tok.text[2] == '0') {
    out = false;
    return true;
  }
  if (tok.text[2] == '1') {
    out = true;
    return true;
  }
  return false;
}

}  // namespace

MemoryAccessRule parse_rule_line(std::string_view line) {
  const auto tokens = tokenize(line);
  if (tokens.empty() || tokens[0].text != "rule")
    throw ParseError(1, tokens.empty() ? 1 : tokens[0].column,
                     "expected 'rule'");
  if (tokens.size() < 5)
    throw ParseError(1, static_cast<int>(line.size()) + 1,
                     "rule needs <drv_addr> <drv_size> <alloc_addr> "
                     "<alloc_size>");
  std::uint64_t fields[4];
  for (int i = 0; i < 4; ++i) {
    const auto value = parse_hex(tokens[i + 1].text);
    if (!value)
      throw ParseError(1, tokens[i + 1].column,
                       "bad hex value '" + std::string(tokens[i + 1].text) +
                           "'");
    fields[i] = *value;
  }
  MemoryAccessRule rule{fields[0], fields[1], fields[2], fields[3],
                        /*is_readable=*/false, /*is_overwritable=*/false};
  for (std::size_t i = 5; i < tokens.size(); ++i) {
    if (parse_flag_token(tokens[i], 'R', rule.is_readable)) continue;
    if (parse_flag_token(tokens[i], 'W', rule.is_overwritable)) continue;
    throw ParseError(1, tokens[i].column,
                     "expected R=<0|1> or W=<0|1>, got '" +
                         std::string(tokens[i].text) + "'");
  }
  return rule;
}

std::string render_rule_line(const MemoryAccessRule& rule) {
  std::string out = "rule " + hex_compact(rule.drv_addr) + " " +
                    hex_compact(rule.drv_size) + " " +
                    hex_compact(rule.alloc_addr) + " " +
                    hex_compact(rule.alloc_size);
  if (rule.is_readable) out += " R=1";
  if (rule.is_overwritable) out += " W=1";
  return out;
}

const char* action_name(Action action) {
  switch (action) {
    case Action::kOwnerAllow:
      return "OwnerAllow";
    case Action::kRuleAllow:
      return "RuleAllow";
    case Action::kDeny:
      return "Deny";
    case Action::kUnprotected:
      return "Unprotected";
  }
  return "?";
}

PolicyEngine::PolicyEngine(Machine& machine, EptTable& ept,
                           PolicyConfig config)
    : machine_(machine), ept_(ept), config_(config) {}

void PolicyEngine::index_rule(std::size_t rule_index) {
  const auto& rule = rules_[rule_index];
  const PageIndex first = page_of(rule.alloc_addr);
  const PageIndex last = page_of(rule.alloc_addr + rule.alloc_size - 1);
  for (PageIndex p = first; p <= last; ++p)
    page_index_[p].push_back(rule_index);
}

void PolicyEngine::rebuild_index() {
  page_index_.clear();
  for (std::size_t i = 0; i < rules_.size(); ++i) index_rule(i);
}

void PolicyEngine::clear_pages_for(Address addr, std::uint64_t size) {
  const PageIndex first = page_of(addr);
  const PageIndex last = page_of(addr + size - 1);
  for (PageIndex p = first; p <= last; ++p) ept_.clear_rw(p);
}

std::set<PageIndex> PolicyEngine::covered_pages() const {
  std::set<PageIndex> pages;
  for (const auto& rule : rules_) {
    const PageIndex first = page_of(rule.alloc_addr);
    const PageIndex last = page_of(rule.alloc_addr + rule.alloc_size - 1);
    for (PageIndex p = first; p <= last; ++p) pages.insert(p);
  }
  for (const auto& [id, image] : image_protections_) {
    const PageIndex first = page_of(image.base);
    const PageIndex last = page_of(image.base + image.size - 1);
    for (PageIndex p = first; p <= last; ++p) pages.insert(p);
  }
  return pages;
}

void PolicyEngine::restore_uncovered(
    const std::set<PageIndex>& previously_covered) {
  const std::set<PageIndex> now = covered_pages();
  for (PageIndex p : previously_covered)
    if (!now.contains(p)) ept_.restore_default(p);
}

void PolicyEngine::on_image_load(ModuleId id) {
  const ModuleImage& mod = machine_.module_info(id);
  if (!mod.is_protected) return;
  tracked_[id] = mod.share_names;
  if (config_.protect_module_image) {
    image_protections_[id] = {mod.base, mod.size};
    clear_pages_for(mod.base, mod.size);
  }
}

void PolicyEngine::on_image_unload(ModuleId id) {
  const ModuleImage& mod = machine_.module_info(id);
  const std::set<PageIndex> covered = covered_pages();

  // Rules bound to this image range go away regardless of protection, so
  // unloading a share-list module retires its share rules too.
  std::erase_if(rules_, [&](const MemoryAccessRule& r) {
    return r.drv_addr == mod.base && r.drv_size == mod.size;
  });

  if (tracked_.contains(id)) {
    std::erase_if(allocations_,
                  [&](const Allocation& a) { return a.owner == id; });
    image_protections_.erase(id);
    tracked_.erase(id);
  }

  rebuild_index();
  restore_uncovered(covered);
}

std::vector<MemoryAccessRule> PolicyEngine::on_alloc(ModuleId owner,
                                                     Address addr,
                                                     std::uint64_t size) {
  const auto tracked_it = tracked_.find(owner);
  if (tracked_it == tracked_.end())
    throw UntrackedOwnerError(
        "allocation by a driver that is not protected is not mediated");
  for (const auto& rule : rules_) {
    if (addr < rule.alloc_addr + rule.alloc_size &&
        rule.alloc_addr < addr + size)
      throw OverlapError("allocation overlaps an existing rule's range");
  }

  const ModuleImage& mod = machine_.module_info(owner);
  std::vector<MemoryAccessRule> added;
  added.push_back({mod.base, mod.size, addr, size, false, false});
  // One share rule per pre-configured name resolvable right now; modules
  // loaded later get no retroactive rule.
  for (const std::string& share_name : tracked_it->second) {
    const auto share_id = machine_.find_module(share_name);
    if (!share_id) continue;
    const ModuleImage& share = machine_.module_info(*share_id);
    added.push_back({share.base, share.size, addr, size, false, false});
  }

  for (const auto& rule : added) {
    rules_.push_back(rule);
    index_rule(rules_.size() - 1);
  }
  allocations_.push_back({owner, addr, size});
  clear_pages_for(addr, size);
  return added;
}

void PolicyEngine::on_free(ModuleId owner, Address addr) {
  const auto it = std::find_if(
      allocations_.begin(), allocations_.end(),
      [&](const Allocation& a) { return a.addr == addr; });
  if (it == allocations_.end())
    throw UnknownAllocationError("no allocation at " + hex_compact(addr));
  if (it->owner != owner)
    throw NotOwnerError("free attempted by a module that does not own " +
                        hex_compact(addr));

  const std::uint64_t size = it->size;
  const std::set<PageIndex> covered = covered_pages();

  machine_.memory().fill(addr, size, 0x00);
  std::erase_if(rules_, [&](const MemoryAccessRule& r) {
    return r.alloc_addr == addr && r.alloc_size == size;
  });
  allocations_.erase(it);

  rebuild_index();
  restore_uncovered(covered);
}

void PolicyEngine::add_rule(const MemoryAccessRule& rule) {
  if (rule.drv_size == 0 || rule.alloc_size == 0)
    throw InvalidRuleError("rule ranges must have nonzero size");
  if (rule.drv_addr < rule.alloc_addr + rule.alloc_size &&
      rule.alloc_addr < rule.drv_addr + rule.drv_size)
    throw InvalidRuleError("rule driver and allocation ranges overlap");
  for (const auto& existing : rules_)
    if (existing.same_ranges(rule))
      throw DuplicateRuleError("rule already present: " +
                               render_rule_line(rule));
  rules_.push_back(rule);
  index_rule(rules_.size() - 1);
  clear_pages_for(rule.alloc_addr, rule.alloc_size);
}

Decision PolicyEngine::decide(Address ip, Address addr,
                              AccessKind kind) const {
  // Covering set for the single byte at addr: indexed rules first, then the
  // implicit image protections.
  const MemoryAccessRule* first_covering = nullptr;
  const MemoryAccessRule* owner_match = nullptr;
  bool all_permit = true;
  const MemoryAccessRule* deny_rule = nullptr;

  const auto idx = page_index_.find(page_of(addr));
  if (idx != page_index_.end()) {
    for (std::size_t rule_index : idx->second) {
      const MemoryAccessRule& rule = rules_[rule_index];
      if (!rule.covers(addr)) continue;
      if (!first_covering) first_covering = &rule;
      if (!owner_match && rule.drv_contains(ip)) owner_match = &rule;
      const bool permits =
          kind == AccessKind::kRead ? rule.is_readable : rule.is_overwritable;
      if (!permits && !deny_rule) deny_rule = &rule;
      all_permit = all_permit && permits;
    }
  }

  std::optional<MemoryAccessRule> image_rule;
  for (const auto& [id, image] : image_protections_) {
    if (addr < image.base || addr - image.base >= image.size) continue;
    // Image bytes behave like a rule owned by the module itself, R=0 W=0.
    image_rule = MemoryAccessRule{image.base, image.size, image.base,
                                  image.size, false, false};
    if (!first_covering) first_covering = &*image_rule;
    if (!owner_match && image_rule->drv_contains(ip))
      owner_match = &*image_rule;
    if (!deny_rule) deny_rule = &*image_rule;
    all_permit = false;
    break;
  }

  if (!first_covering) return {Action::kUnprotected, std::nullopt};
  if (owner_match) return {Action::kOwnerAllow, *owner_match};
  if (all_permit) return {Action::kRuleAllow, *first_covering};
  return {Action::kDeny, *deny_rule};
}

}  // namespace allmempro
