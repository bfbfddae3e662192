#pragma once

#include <map>
#include <string>

namespace dualres {

// INI-style config: [section] headers, key=value lines, # or ; comments.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& dflt) const;
  long get_int(const std::string& section, const std::string& key,
               long dflt) const;
  double get_double(const std::string& section, const std::string& key,
                    double dflt) const;
  void set(const std::string& section, const std::string& key,
           const std::string& value);

  // Canonical serialization (sorted sections and keys); replay digests.
  std::string canonical() const;

 private:
  // section -> key -> value
  std::map<std::string, std::map<std::string, std::string>> kv_;
};

}  // namespace dualres
