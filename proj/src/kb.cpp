#include "relchain/kb.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace relchain {

namespace {

// Default rule table. Derived from standard monogamous-family genealogy;
// compositions whose outcome depends on the subject's identity or gender
// (e.g. son∘father: self vs. husband) are deliberately absent, as are
// results outside the 20-label vocabulary (e.g. sibling-in-law).
constexpr const char* kDefaultRules = R"(father	father	grandfather
father	mother	grandmother
mother	father	grandfather
mother	mother	grandmother
father	brother	uncle
father	sister	aunt
mother	brother	uncle
mother	sister	aunt
father	wife	mother
mother	husband	father
father	father-in-law	grandfather
father	mother-in-law	grandmother
mother	father-in-law	grandfather
mother	mother-in-law	grandmother
son	son	grandson
son	daughter	granddaughter
daughter	son	grandson
daughter	daughter	granddaughter
son	brother	son
son	sister	daughter
daughter	brother	son
daughter	sister	daughter
son	wife	daughter-in-law
daughter	husband	son-in-law
son	nephew	grandson
son	niece	granddaughter
daughter	nephew	grandson
daughter	niece	granddaughter
brother	father	father
brother	mother	mother
sister	father	father
sister	mother	mother
brother	son	nephew
brother	daughter	niece
sister	son	nephew
sister	daughter	niece
brother	grandfather	grandfather
brother	grandmother	grandmother
sister	grandfather	grandfather
sister	grandmother	grandmother
brother	uncle	uncle
brother	aunt	aunt
sister	uncle	uncle
sister	aunt	aunt
husband	father	father-in-law
husband	mother	mother-in-law
wife	father	father-in-law
wife	mother	mother-in-law
husband	son	son
husband	daughter	daughter
wife	son	son
wife	daughter	daughter
husband	grandson	grandson
husband	granddaughter	granddaughter
wife	grandson	grandson
wife	granddaughter	granddaughter
husband	father-in-law	father
husband	mother-in-law	mother
wife	father-in-law	father
wife	mother-in-law	mother
husband	son-in-law	son-in-law
husband	daughter-in-law	daughter-in-law
wife	son-in-law	son-in-law
wife	daughter-in-law	daughter-in-law
grandfather	wife	grandmother
grandmother	husband	grandfather
grandson	brother	grandson
grandson	sister	granddaughter
granddaughter	brother	grandson
granddaughter	sister	granddaughter
uncle	father	grandfather
uncle	mother	grandmother
aunt	father	grandfather
aunt	mother	grandmother
nephew	brother	nephew
nephew	sister	niece
niece	brother	nephew
niece	sister	niece
father-in-law	wife	mother-in-law
mother-in-law	husband	father-in-law
son-in-law	son	grandson
son-in-law	daughter	granddaughter
daughter-in-law	son	grandson
daughter-in-law	daughter	granddaughter
son-in-law	wife	daughter
daughter-in-law	husband	son
)";

Rule parse_rule_line(const std::string& line, int line_no) {
  size_t t1 = line.find('\t');
  size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
  if (t1 == std::string::npos || t2 == std::string::npos)
    throw std::runtime_error("kb: line " + std::to_string(line_no) +
                             ": expected `lhs1<TAB>lhs2<TAB>rhs`");
  auto ra = parse_relation(std::string_view(line).substr(0, t1));
  auto rb = parse_relation(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
  auto rc = parse_relation(std::string_view(line).substr(t2 + 1));
  if (!ra || !rb || !rc)
    throw std::runtime_error("kb: line " + std::to_string(line_no) + ": unknown relation in `" +
                             line + "`");
  return Rule{*ra, *rb, *rc};
}

std::vector<Rule> parse_rules(std::istream& in) {
  std::vector<Rule> rules;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    rules.push_back(parse_rule_line(line, line_no));
  }
  return rules;
}

}  // namespace

KnowledgeBase KnowledgeBase::from_rules(std::vector<Rule> rules) {
  KnowledgeBase kb;
  kb.rules_ = std::move(rules);
  for (const Rule& r : kb.rules_) {
    size_t idx = index(r.lhs1, r.lhs2);
    if (kb.table_[idx] < 0) kb.table_[idx] = static_cast<int16_t>(r.rhs);
    // conflicting duplicates keep the first entry; validate_kb reports them
  }
  return kb;
}

const KnowledgeBase& KnowledgeBase::default_kb() {
  static const KnowledgeBase kb = [] {
    std::istringstream in(kDefaultRules);
    return from_rules(parse_rules(in));
  }();
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("kb: cannot open " + file.string());
  return from_rules(parse_rules(in));
}

void KnowledgeBase::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("kb: cannot write " + file.string());
  for (const Rule& r : rules_) {
    out << relation_name(r.lhs1) << '\t' << relation_name(r.lhs2) << '\t' << relation_name(r.rhs)
        << '\n';
  }
}

std::optional<Rel> KnowledgeBase::resolve_chain(std::span<const Rel> chain) const {
  if (chain.empty()) throw std::invalid_argument("resolve_chain: empty chain");
  std::optional<Rel> acc = chain[0];
  for (size_t i = 1; i < chain.size(); ++i) {
    acc = compose(*acc, chain[i]);
    if (!acc) return std::nullopt;
  }
  return acc;
}

int ValidationReport::count(ValidationIssue::Kind k) const {
  int n = 0;
  for (const auto& i : issues)
    if (i.kind == k) ++n;
  return n;
}

ValidationReport validate_kb(const KnowledgeBase& kb, const FamilyTree& oracle) {
  ValidationReport report;
  const auto& rules = kb.rules();

  // (a) functional: no two rules share (lhs1, lhs2) with different rhs
  for (size_t i = 0; i < rules.size(); ++i) {
    for (size_t j = i + 1; j < rules.size(); ++j) {
      if (rules[i].lhs1 == rules[j].lhs1 && rules[i].lhs2 == rules[j].lhs2 &&
          rules[i].rhs != rules[j].rhs) {
        report.issues.push_back(
            {ValidationIssue::Kind::functional,
             std::string("(") + std::string(relation_name(rules[i].lhs1)) + ", " +
                 std::string(relation_name(rules[i].lhs2)) + ") maps to both " +
                 std::string(relation_name(rules[i].rhs)) + " and " +
                 std::string(relation_name(rules[j].rhs))});
      }
    }
  }

  // (b) gender-swap closure: the fully swapped rule must also exist
  for (const Rule& r : rules) {
    Rule swapped{gender_swap(r.lhs1), gender_swap(r.lhs2), gender_swap(r.rhs)};
    bool found = false;
    for (const Rule& s : rules) {
      if (s == swapped) {
        found = true;
        break;
      }
    }
    if (!found) {
      report.issues.push_back({ValidationIssue::Kind::closure,
                               std::string("missing gender-swap of (") +
                                   std::string(relation_name(r.lhs1)) + ", " +
                                   std::string(relation_name(r.lhs2)) + ") -> " +
                                   std::string(relation_name(r.rhs))});
    }
  }

  // (c) oracle: every embedding of (lhs1, lhs2) into the tree must yield rhs
  const int n = oracle.size();
  std::vector<std::optional<Rel>> derived(static_cast<size_t>(n) * static_cast<size_t>(n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      derived[static_cast<size_t>(a) * static_cast<size_t>(n) + static_cast<size_t>(b)] =
          oracle.derive(a, b);
  auto rel_at = [&](int a, int b) -> const std::optional<Rel>& {
    return derived[static_cast<size_t>(a) * static_cast<size_t>(n) + static_cast<size_t>(b)];
  };
  for (const Rule& r : rules) {
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (rel_at(a, b) != std::optional<Rel>(r.lhs1)) continue;
        for (int c = 0; c < n; ++c) {
          if (rel_at(b, c) != std::optional<Rel>(r.lhs2)) continue;
          auto truth = rel_at(a, c);
          if (truth != std::optional<Rel>(r.rhs)) {
            report.issues.push_back(
                {ValidationIssue::Kind::oracle,
                 std::string("rule (") + std::string(relation_name(r.lhs1)) + ", " +
                     std::string(relation_name(r.lhs2)) + ") -> " +
                     std::string(relation_name(r.rhs)) + " contradicted at (" + std::to_string(a) +
                     "," + std::to_string(b) + "," + std::to_string(c) + "): tree says " +
                     (truth ? std::string(relation_name(*truth)) : std::string("none"))});
          }
        }
      }
    }
  }

  return report;
}

ValidationReport validate_kb(const KnowledgeBase& kb) { return validate_kb(kb, reference_tree()); }

}  // namespace relchain
