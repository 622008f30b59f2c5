#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pex/error.hpp"

namespace pex {

// Flat key/value configuration parsed from a TOML-style file: [section]
// headers, `key = value` lines, values may be quoted strings, integers,
// floats, booleans, or arrays of those. Keys are addressed as
// "section.key".
class Config {
public:
  using Scalar = std::variant<bool, std::int64_t, double, std::string>;
  using Value = std::variant<Scalar, std::vector<Scalar>>;

  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         std::vector<std::int64_t> def) const;

  std::string require_string(const std::string& key) const;

  void set_string(const std::string& key, const std::string& v);
  void set_int(const std::string& key, std::int64_t v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

  // Echoed into every output document for provenance.
  nlohmann::json to_json() const;

private:
  const Value* find(const std::string& key) const;

  std::map<std::string, Value> values_;
};

}  // namespace pex
