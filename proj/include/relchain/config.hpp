#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace relchain {

// `key = value` files with # comments; shared by data and train configs.
struct KeyValues {
  std::map<std::string, std::string> values;
  std::optional<std::string> get(const std::string& key) const;
  void reject_unknown(const std::vector<std::string>& known) const;
};

KeyValues load_key_values(const std::filesystem::path& file);
KeyValues parse_key_values(const std::string& text);

std::vector<int> parse_int_list(const std::string& csv);

// FNV-1a over the canonical key=value rendering; identifies configs in
// sweep tables and checkpoints.
std::string fingerprint(const KeyValues& kv);

}  // namespace relchain
