#include "pex/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace pex {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    else if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

Config::Scalar parse_scalar(const std::string& raw, const std::string& where) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      char c = raw[i];
      if (c == '\\' && i + 2 < raw.size()) {
        char n = raw[++i];
        switch (n) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: out += n;
        }
      } else {
        out += c;
      }
    }
    return out;
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  if (raw.find_first_of(".eE") == std::string::npos ||
      (raw.size() > 1 && (raw[0] == '0' && raw[1] == 'x'))) {
    std::int64_t iv = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), iv);
    if (ec == std::errc() && p == raw.data() + raw.size()) return iv;
  }
  try {
    std::size_t used = 0;
    double dv = std::stod(raw, &used);
    if (used == raw.size()) return dv;
  } catch (...) {
  }
  throw ConfigError(where + ": cannot parse value '" + raw + "'");
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (value.empty()) throw ConfigError(where + ": empty value");
    std::string full = section.empty() ? key : section + "." + key;
    if (value.front() == '[') {
      if (value.back() != ']')
        throw ConfigError(where + ": unterminated array");
      std::vector<Scalar> items;
      std::string body = value.substr(1, value.size() - 2);
      std::string item;
      bool in_string = false;
      for (char c : body) {
        if (c == '"') in_string = !in_string;
        if (c == ',' && !in_string) {
          if (!trim(item).empty()) items.push_back(parse_scalar(trim(item), where));
          item.clear();
        } else {
          item += c;
        }
      }
      if (!trim(item).empty()) items.push_back(parse_scalar(trim(item), where));
      cfg.values_[full] = std::move(items);
    } else {
      cfg.values_[full] = parse_scalar(value, where);
    }
  }
  return cfg;
}

const Config::Value* Config::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

namespace {

template <typename T>
const T* scalar_as(const Config::Value* v) {
  if (!v) return nullptr;
  const auto* s = std::get_if<Config::Scalar>(v);
  if (!s) return nullptr;
  return std::get_if<T>(s);
}

}  // namespace

std::string Config::get_string(const std::string& key, const std::string& def) const {
  const auto* v = find(key);
  if (!v) return def;
  if (const auto* s = scalar_as<std::string>(v)) return *s;
  throw ConfigError("config key '" + key + "' is not a string");
}

std::int64_t Config::get_int(const std::string& key, std::int64_t def) const {
  const auto* v = find(key);
  if (!v) return def;
  if (const auto* s = scalar_as<std::int64_t>(v)) return *s;
  if (const auto* d = scalar_as<double>(v)) {
    auto i = static_cast<std::int64_t>(*d);
    if (static_cast<double>(i) == *d) return i;
  }
  throw ConfigError("config key '" + key + "' is not an integer");
}

double Config::get_double(const std::string& key, double def) const {
  const auto* v = find(key);
  if (!v) return def;
  if (const auto* d = scalar_as<double>(v)) return *d;
  if (const auto* i = scalar_as<std::int64_t>(v)) return static_cast<double>(*i);
  throw ConfigError("config key '" + key + "' is not a number");
}

bool Config::get_bool(const std::string& key, bool def) const {
  const auto* v = find(key);
  if (!v) return def;
  if (const auto* b = scalar_as<bool>(v)) return *b;
  throw ConfigError("config key '" + key + "' is not a boolean");
}

std::vector<std::int64_t> Config::get_int_list(
    const std::string& key, std::vector<std::int64_t> def) const {
  const auto* v = find(key);
  if (!v) return def;
  const auto* list = std::get_if<std::vector<Scalar>>(v);
  if (!list) {
    // A single integer counts as a one-element list.
    return {get_int(key, 0)};
  }
  std::vector<std::int64_t> out;
  for (const auto& s : *list) {
    if (const auto* i = std::get_if<std::int64_t>(&s)) out.push_back(*i);
    else throw ConfigError("config key '" + key + "' must hold integers");
  }
  return out;
}

std::string Config::require_string(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required config key '" + key + "'");
  return get_string(key, "");
}

void Config::set_string(const std::string& key, const std::string& v) {
  values_[key] = Scalar{v};
}
void Config::set_int(const std::string& key, std::int64_t v) {
  values_[key] = Scalar{v};
}
void Config::set_double(const std::string& key, double v) {
  values_[key] = Scalar{v};
}
void Config::set_bool(const std::string& key, bool v) {
  values_[key] = Scalar{v};
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto scalar_to_json = [](const Scalar& s) {
    nlohmann::json out;
    std::visit([&out](const auto& v) { out = v; }, s);
    return out;
  };
  for (const auto& [key, value] : values_) {
    if (const auto* s = std::get_if<Scalar>(&value)) {
      j[key] = scalar_to_json(*s);
    } else {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& s : std::get<std::vector<Scalar>>(value))
        arr.push_back(scalar_to_json(s));
      j[key] = std::move(arr);
    }
  }
  return j;
}

}  // namespace pex
