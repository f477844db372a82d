#include "relchain/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace relchain {

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

std::optional<std::string> KeyValues::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) return std::nullopt;
  return it->second;
}

void KeyValues::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values) {
    bool ok = false;
    for (const auto& k : known)
      if (k == key) ok = true;
    if (!ok) throw std::runtime_error("config: unknown key `" + key + "`");
  }
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(line_no) +
                               ": expected `key = value`");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config: line " + std::to_string(line_no) +
                                              ": empty key");
    if (kv.values.count(key))
      throw std::runtime_error("config: line " + std::to_string(line_no) + ": duplicate key `" +
                               key + "`");
    kv.values[key] = value;
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("config: cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::istringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

std::string fingerprint(const KeyValues& kv) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto absorb = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [key, value] : kv.values) {
    absorb(key);
    absorb("=");
    absorb(value);
    absorb("\n");
  }
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace relchain
