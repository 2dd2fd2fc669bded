#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace diffo {

/// "key = value" text records; '#' starts a comment. Keys are kept sorted so
/// the serialized form is canonical.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& source = "<string>");
  static KeyValues load(const std::string& path);
  std::string str() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace diffo
