#include "relchain/relations.hpp"

#include <string>
#include <unordered_map>

namespace relchain {

namespace {

constexpr std::array<std::string_view, kBaseRelationCount> kBaseNames = {
    "father",        "mother",        "son",           "daughter",
    "brother",       "sister",        "grandfather",   "grandmother",
    "grandson",      "granddaughter", "husband",       "wife",
    "uncle",         "aunt",          "nephew",        "niece",
    "father-in-law", "mother-in-law", "son-in-law",    "daughter-in-law",
};

const std::array<std::string, kRelationCount>& names() {
  static const std::array<std::string, kRelationCount> table = [] {
    std::array<std::string, kRelationCount> t;
    for (int i = 0; i < kBaseRelationCount; ++i) {
      t[static_cast<size_t>(i)] = std::string(kBaseNames[static_cast<size_t>(i)]);
      t[static_cast<size_t>(i + kBaseRelationCount)] =
          "inv-" + std::string(kBaseNames[static_cast<size_t>(i)]);
    }
    return t;
  }();
  return table;
}

}  // namespace

std::string_view relation_name(Rel r) { return names()[static_cast<size_t>(r)]; }

std::optional<Rel> parse_relation(std::string_view name) {
  static const std::unordered_map<std::string_view, Rel> index = [] {
    std::unordered_map<std::string_view, Rel> m;
    for (int i = 0; i < kRelationCount; ++i) {
      m.emplace(names()[static_cast<size_t>(i)], static_cast<Rel>(i));
    }
    return m;
  }();
  auto it = index.find(name);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

}  // namespace relchain
