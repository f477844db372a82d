#include "relchain/family_tree.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace relchain {

int FamilyTree::add_person(Gender g) {
  people_.push_back(Person{g, -1, -1, -1});
  return static_cast<int>(people_.size()) - 1;
}

void FamilyTree::marry(int a, int b) {
  if (people_[static_cast<size_t>(a)].spouse != -1 || people_[static_cast<size_t>(b)].spouse != -1)
    throw std::invalid_argument("FamilyTree::marry: person already married");
  if (people_[static_cast<size_t>(a)].gender == people_[static_cast<size_t>(b)].gender)
    throw std::invalid_argument("FamilyTree::marry: same-gender marriage not modelled");
  people_[static_cast<size_t>(a)].spouse = b;
  people_[static_cast<size_t>(b)].spouse = a;
}

int FamilyTree::add_child(int father, int mother, Gender g) {
  if (people_[static_cast<size_t>(father)].gender != Gender::male ||
      people_[static_cast<size_t>(mother)].gender != Gender::female)
    throw std::invalid_argument("FamilyTree::add_child: parent genders wrong");
  if (people_[static_cast<size_t>(father)].spouse != mother)
    throw std::invalid_argument("FamilyTree::add_child: parents must be married");
  int id = add_person(g);
  people_[static_cast<size_t>(id)].father = father;
  people_[static_cast<size_t>(id)].mother = mother;
  return id;
}

std::vector<int> FamilyTree::parents_of(int id) const {
  std::vector<int> out;
  const Person& p = people_[static_cast<size_t>(id)];
  if (p.father != -1) out.push_back(p.father);
  if (p.mother != -1) out.push_back(p.mother);
  return out;
}

std::vector<int> FamilyTree::children_of(int id) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    const Person& p = people_[static_cast<size_t>(i)];
    if (p.father == id || p.mother == id) out.push_back(i);
  }
  return out;
}

std::vector<int> FamilyTree::siblings_of(int id) const {
  std::vector<int> out;
  const Person& me = people_[static_cast<size_t>(id)];
  if (me.father == -1 && me.mother == -1) return out;
  for (int i = 0; i < size(); ++i) {
    if (i == id) continue;
    const Person& p = people_[static_cast<size_t>(i)];
    bool shared = (p.father != -1 && p.father == me.father) ||
                  (p.mother != -1 && p.mother == me.mother);
    if (shared) out.push_back(i);
  }
  return out;
}

bool FamilyTree::is_ancestor(int anc, int person) const {
  for (int p : parents_of(person)) {
    if (p == anc || is_ancestor(anc, p)) return true;
  }
  return false;
}

bool FamilyTree::parent_of(int child, int candidate) const {
  const Person& c = people_[static_cast<size_t>(child)];
  return c.father == candidate || c.mother == candidate;
}

std::optional<Rel> FamilyTree::derive(int subject, int object) const {
  if (subject == object) return std::nullopt;
  const bool obj_male = gender(object) == Gender::male;
  auto pick = [obj_male](Rel male_label) {
    return obj_male ? male_label : gender_swap(male_label);
  };

  if (parent_of(subject, object)) return pick(Rel::father);
  if (parent_of(object, subject)) return pick(Rel::son);

  auto sibs = siblings_of(subject);
  if (std::find(sibs.begin(), sibs.end(), object) != sibs.end()) return pick(Rel::brother);

  for (int p : parents_of(subject)) {
    if (parent_of(p, object)) return pick(Rel::grandfather);
  }
  for (int p : parents_of(object)) {
    if (parent_of(p, subject)) return pick(Rel::grandson);
  }

  if (spouse(subject) == object) return pick(Rel::husband);

  // blood uncle/aunt: a parent's sibling
  for (int p : parents_of(subject)) {
    auto ps = siblings_of(p);
    if (std::find(ps.begin(), ps.end(), object) != ps.end()) return pick(Rel::uncle);
  }
  // blood nephew/niece: a sibling's child
  for (int s : sibs) {
    if (parent_of(object, s)) return pick(Rel::nephew);
  }

  if (spouse(subject) != -1 && parent_of(spouse(subject), object)) return pick(Rel::father_in_law);
  int osp = spouse(object);
  if (osp != -1 && parent_of(osp, subject)) return pick(Rel::son_in_law);

  return std::nullopt;
}

std::optional<Rel> FamilyTree::derive_any(int subject, int object) const {
  if (auto r = derive(subject, object)) return r;
  if (auto r = derive(object, subject)) return invert(*r);
  return std::nullopt;
}

std::optional<std::string> FamilyTree::check_consistent() const {
  for (int i = 0; i < size(); ++i) {
    const Person& p = people_[static_cast<size_t>(i)];
    if ((p.father == -1) != (p.mother == -1))
      return "person " + std::to_string(i) + ": only one parent recorded";
    if (p.father != -1) {
      if (gender(p.father) != Gender::male) return "person " + std::to_string(i) + ": father not male";
      if (gender(p.mother) != Gender::female) return "person " + std::to_string(i) + ": mother not female";
      if (spouse(p.father) != p.mother) return "person " + std::to_string(i) + ": parents not married";
    }
    if (p.spouse != -1) {
      if (spouse(p.spouse) != i) return "person " + std::to_string(i) + ": marriage not mutual";
      if (gender(p.spouse) == p.gender) return "person " + std::to_string(i) + ": same-gender marriage";
      for (int a = 0; a < size(); ++a) {
        if (is_ancestor(a, i) && is_ancestor(a, p.spouse))
          return "person " + std::to_string(i) + ": spouses share ancestor " + std::to_string(a);
      }
    }
    if (p.father == i || p.mother == i) return "person " + std::to_string(i) + ": own parent";
    if (p.father != -1 && (is_ancestor(i, p.father) || is_ancestor(i, p.mother)))
      return "person " + std::to_string(i) + ": ancestry cycle";
  }
  return std::nullopt;
}

const FamilyTree& reference_tree() {
  static const FamilyTree tree = [] {
    FamilyTree t;
    const Gender M = Gender::male;
    const Gender F = Gender::female;

    // generation 1: two founding couples
    int g1a_m = t.add_person(M);  // 0
    int g1a_f = t.add_person(F);  // 1
    int g1b_m = t.add_person(M);  // 2
    int g1b_f = t.add_person(F);  // 3
    t.marry(g1a_m, g1a_f);
    t.marry(g1b_m, g1b_f);

    // generation 2
    int a_son = t.add_child(g1a_m, g1a_f, M);   // 4
    int a_dau1 = t.add_child(g1a_m, g1a_f, F);  // 5
    int a_dau2 = t.add_child(g1a_m, g1a_f, F);  // 6
    int b_son1 = t.add_child(g1b_m, g1b_f, M);  // 7
    int b_dau = t.add_child(g1b_m, g1b_f, F);   // 8
    int b_son2 = t.add_child(g1b_m, g1b_f, M);  // 9
    t.marry(a_son, b_dau);
    t.marry(b_son1, a_dau1);
    (void)a_dau2;
    (void)b_son2;

    // generation 3
    int c_son1 = t.add_child(a_son, b_dau, M);  // 10
    int c_dau = t.add_child(a_son, b_dau, F);   // 11
    int c_son2 = t.add_child(a_son, b_dau, M);  // 12
    int d_dau = t.add_child(b_son1, a_dau1, F); // 13
    int d_son = t.add_child(b_son1, a_dau1, M); // 14
    int c_wife = t.add_person(F);               // 15, married in
    int d_husb = t.add_person(M);               // 16, married in
    t.marry(c_son1, c_wife);
    t.marry(d_husb, d_dau);
    (void)c_son2;
    (void)d_son;

    // generation 4
    t.add_child(c_son1, c_wife, M);  // 17
    t.add_child(c_son1, c_wife, F);  // 18
    t.add_child(d_husb, d_dau, F);   // 19
    t.add_child(d_husb, d_dau, F);   // 20, sister pair with 19

    auto issue = t.check_consistent();
    assert(!issue);
    (void)issue;
    return t;
  }();
  return tree;
}

}  // namespace relchain
