#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relchain/family_tree.hpp"
#include "relchain/relations.hpp"

namespace relchain {

// One composition rule: if x's lhs1 is y and y's lhs2 is z, then x's rhs is z.
struct Rule {
  Rel lhs1;
  Rel lhs2;
  Rel rhs;
  bool operator==(const Rule&) const = default;
};

struct ValidationIssue {
  enum class Kind { functional, closure, oracle };
  Kind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  int count(ValidationIssue::Kind k) const;
};

class KnowledgeBase {
 public:
  KnowledgeBase() { table_.fill(-1); }

  static KnowledgeBase from_rules(std::vector<Rule> rules);
  // Monogamous-family kinship KB over the 20 base labels; every rule is
  // vetted against the reference tree at test time.
  static const KnowledgeBase& default_kb();

  // Plain-text rule file: one rule per line, `lhs1<TAB>lhs2<TAB>rhs`.
  static KnowledgeBase load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  // Unique rhs of rule (a, b); absence is a value, not an error.
  std::optional<Rel> compose(Rel a, Rel b) const {
    int v = table_[index(a, b)];
    return v < 0 ? std::nullopt : std::optional<Rel>(static_cast<Rel>(v));
  }

  // Left fold of compose; empty as soon as one step is undefined.
  // Throws std::invalid_argument on an empty chain.
  std::optional<Rel> resolve_chain(std::span<const Rel> chain) const;

  const std::vector<Rule>& rules() const { return rules_; }

 private:
  static size_t index(Rel a, Rel b) {
    return static_cast<size_t>(a) * kRelationCount + static_cast<size_t>(b);
  }
  std::vector<Rule> rules_;
  std::array<int16_t, kRelationCount * kRelationCount> table_{};
};

// Report lists functional-rule violations, gender-swap closure violations,
// and rules contradicted by path enumeration over the oracle tree.
ValidationReport validate_kb(const KnowledgeBase& kb, const FamilyTree& oracle);
ValidationReport validate_kb(const KnowledgeBase& kb);  // against reference_tree()

}  // namespace relchain
