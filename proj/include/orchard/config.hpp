// Copyright 2026 The OrchardSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "orchard/common.hpp"

namespace orchard::config {

// Flat `key = value` configuration grouped into `[section]` headers.
// '#' starts a comment; keys before any header land in the "" section.
// Duplicate keys within a section are rejected.
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin);

  bool has(const std::string& section, const std::string& key) const;
  // Throws DataError when the key is absent.
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;

  double number(const std::string& section, const std::string& key) const;
  double number_or(const std::string& section, const std::string& key, double fallback) const;
  int integer(const std::string& section, const std::string& key) const;
  int integer_or(const std::string& section, const std::string& key, int fallback) const;
  bool flag_or(const std::string& section, const std::string& key, bool fallback) const;

  // Comma-separated integers, e.g. "32,64".
  std::vector<int> int_list(const std::string& section, const std::string& key) const;

  // Programmatic override (CLI flags beat file values).
  void set(const std::string& section, const std::string& key, const std::string& value);

  // Throws DataError naming the first key in `section` that is not listed
  // in `known`; catches config typos early.
  void require_known(const std::string& section, const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::string origin_ = "<config>";
};

}  // namespace orchard::config
