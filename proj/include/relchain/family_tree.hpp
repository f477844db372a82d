#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relchain/relations.hpp"

namespace relchain {

// Ground family structure: parent links and monogamous marriages. Serves as
// the symbolic oracle — kinship labels between two people are derived by
// walking this structure directly, independently of the rule table.
//
// Modelled family conventions: every child has both parents recorded and the
// parents are married to each other; each person marries at most once;
// spouses share no recorded ancestor; marriages pair a male and a female.
class FamilyTree {
 public:
  struct Person {
    Gender gender = Gender::male;
    int father = -1;
    int mother = -1;
    int spouse = -1;
  };

  int add_person(Gender g);
  void marry(int a, int b);
  int add_child(int father, int mother, Gender g);

  int size() const { return static_cast<int>(people_.size()); }
  const Person& person(int id) const { return people_[static_cast<size_t>(id)]; }
  Gender gender(int id) const { return people_[static_cast<size_t>(id)].gender; }
  int spouse(int id) const { return people_[static_cast<size_t>(id)].spouse; }

  std::vector<int> parents_of(int id) const;
  std::vector<int> children_of(int id) const;
  std::vector<int> siblings_of(int id) const;  // shared parent, excluding self
  bool is_ancestor(int anc, int person) const;

  // Base kinship label read straight off the structure: "subject's R is
  // object". Returns nullopt when no vocabulary label applies. Labels are
  // mutually exclusive in a tree that satisfies the conventions above.
  std::optional<Rel> derive(int subject, int object) const;

  // Like derive, but falls back to the inv- dual when only the converse
  // base label holds.
  std::optional<Rel> derive_any(int subject, int object) const;

  // Checks the structural conventions; returns a description of the first
  // violation, or nullopt when consistent.
  std::optional<std::string> check_consistent() const;

 private:
  bool parent_of(int child, int candidate) const;
  std::vector<Person> people_;
};

// Hand-built 4-generation reference tree used to vet the knowledge base:
// two founding couples, cross-married descendants, multiple sibling groups,
// both genders in every generation.
const FamilyTree& reference_tree();

}  // namespace relchain
