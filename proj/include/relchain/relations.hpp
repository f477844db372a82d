#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace relchain {

enum class Gender : uint8_t { male, female };

// Kinship vocabulary. An edge (x, r, y) with a base relation reads
// "x's r is y"; the inv- dual reverses the reading: (x, inv-r, y) states
// "x is the r of y". Base labels 0..19, inv- duals 20..39.
enum class Rel : uint8_t {
  father,
  mother,
  son,
  daughter,
  brother,
  sister,
  grandfather,
  grandmother,
  grandson,
  granddaughter,
  husband,
  wife,
  uncle,
  aunt,
  nephew,
  niece,
  father_in_law,
  mother_in_law,
  son_in_law,
  daughter_in_law,
  inv_father,
  inv_mother,
  inv_son,
  inv_daughter,
  inv_brother,
  inv_sister,
  inv_grandfather,
  inv_grandmother,
  inv_grandson,
  inv_granddaughter,
  inv_husband,
  inv_wife,
  inv_uncle,
  inv_aunt,
  inv_nephew,
  inv_niece,
  inv_father_in_law,
  inv_mother_in_law,
  inv_son_in_law,
  inv_daughter_in_law,
};

inline constexpr int kBaseRelationCount = 20;
inline constexpr int kRelationCount = 40;

constexpr bool is_base(Rel r) { return static_cast<int>(r) < kBaseRelationCount; }

// Involution: father <-> inv-father and so on.
constexpr Rel invert(Rel r) {
  int i = static_cast<int>(r);
  return static_cast<Rel>(i < kBaseRelationCount ? i + kBaseRelationCount
                                                 : i - kBaseRelationCount);
}

constexpr Rel base_of(Rel r) { return is_base(r) ? r : invert(r); }

// Gender implied for the gendered person the label names (the object of the
// base reading): father/uncle/... are male, mother/aunt/... female. Base
// labels alternate male/female in declaration order.
constexpr Gender relation_gender(Rel r) {
  return static_cast<int>(base_of(r)) % 2 == 0 ? Gender::male : Gender::female;
}

// father <-> mother etc.; inv- duals swap through their base form.
constexpr Rel gender_swap(Rel r) {
  int b = static_cast<int>(base_of(r));
  Rel swapped = static_cast<Rel>(b % 2 == 0 ? b + 1 : b - 1);
  return is_base(r) ? swapped : invert(swapped);
}

std::string_view relation_name(Rel r);
std::optional<Rel> parse_relation(std::string_view name);

constexpr std::array<Rel, kRelationCount> all_relations() {
  std::array<Rel, kRelationCount> out{};
  for (int i = 0; i < kRelationCount; ++i) out[static_cast<size_t>(i)] = static_cast<Rel>(i);
  return out;
}

constexpr std::array<Rel, kBaseRelationCount> base_relations() {
  std::array<Rel, kBaseRelationCount> out{};
  for (int i = 0; i < kBaseRelationCount; ++i) out[static_cast<size_t>(i)] = static_cast<Rel>(i);
  return out;
}

}  // namespace relchain
