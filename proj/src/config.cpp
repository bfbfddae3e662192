#include "dualres/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dualres/error.hpp"

namespace dualres {

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("unterminated section header at line " +
                          std::to_string(lineno));
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty())
        throw ConfigError("empty section name at line " + std::to_string(lineno));
      c.kv_[section];
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key=value at line " + std::to_string(lineno));
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key.empty())
      throw ConfigError("empty key at line " + std::to_string(lineno));
    if (section.empty())
      throw ConfigError("key outside any [section] at line " +
                        std::to_string(lineno));
    c.kv_[section][key] = val;
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

bool Config::has(const std::string& section, const std::string& key) const {
  auto s = kv_.find(section);
  return s != kv_.end() && s->second.count(key) > 0;
}

std::string Config::get_str(const std::string& section, const std::string& key,
                            const std::string& dflt) const {
  auto s = kv_.find(section);
  if (s == kv_.end()) return dflt;
  auto k = s->second.find(key);
  return k == s->second.end() ? dflt : k->second;
}

long Config::get_int(const std::string& section, const std::string& key,
                     long dflt) const {
  if (!has(section, key)) return dflt;
  const std::string v = get_str(section, key, "");
  char* end = nullptr;
  long r = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("expected integer for " + section + "." + key +
                      ", got '" + v + "'");
  return r;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double dflt) const {
  if (!has(section, key)) return dflt;
  const std::string v = get_str(section, key, "");
  char* end = nullptr;
  double r = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("expected number for " + section + "." + key +
                      ", got '" + v + "'");
  return r;
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  kv_[section][key] = value;
}

std::string Config::canonical() const {
  std::ostringstream out;
  for (const auto& [sec, kvs] : kv_) {
    out << "[" << sec << "]\n";
    for (const auto& [k, v] : kvs) out << k << "=" << v << "\n";
  }
  return out.str();
}

}  // namespace dualres
