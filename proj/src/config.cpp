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

#include "orchard/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace orchard::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_string(text.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ParseError(origin + ":" + std::to_string(lineno) + ": empty section name");
      }
      cfg.sections_[section];  // a header alone is valid
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!cfg.sections_[section].emplace(key, value).second) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                       "' in section [" + section + "]");
    }
  }
  return cfg;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) != 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s != sections_.end()) {
    const auto k = s->second.find(key);
    if (k != s->second.end()) return k->second;
  }
  throw DataError(origin_ + ": missing key '" + key + "' in section [" + section + "]");
}

std::string ConfigFile::get_or(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double ConfigFile::number(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw DataError(origin_ + ": key '" + key + "' in [" + section + "] has non-numeric value '" +
                    v + "'");
  }
}

double ConfigFile::number_or(const std::string& section, const std::string& key,
                             double fallback) const {
  return has(section, key) ? number(section, key) : fallback;
}

int ConfigFile::integer(const std::string& section, const std::string& key) const {
  const double d = number(section, key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw DataError(origin_ + ": key '" + key + "' in [" + section + "] must be an integer");
  }
  return i;
}

int ConfigFile::integer_or(const std::string& section, const std::string& key,
                           int fallback) const {
  return has(section, key) ? integer(section, key) : fallback;
}

bool ConfigFile::flag_or(const std::string& section, const std::string& key,
                         bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw DataError(origin_ + ": key '" + key + "' in [" + section +
                  "] must be on/off, got '" + v + "'");
}

std::vector<int> ConfigFile::int_list(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  std::vector<int> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    try {
      size_t pos = 0;
      out.push_back(std::stoi(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(origin_ + ": key '" + key + "' in [" + section +
                      "] must be a comma-separated integer list, got '" + v + "'");
    }
  }
  if (out.empty()) {
    throw DataError(origin_ + ": key '" + key + "' in [" + section + "] is empty");
  }
  return out;
}

void ConfigFile::set(const std::string& section, const std::string& key,
                     const std::string& value) {
  sections_[section][key] = value;
}

void ConfigFile::require_known(const std::string& section,
                               const std::vector<std::string>& known) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return;
  for (const auto& [key, value] : s->second) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw DataError(origin_ + ": unknown key '" + key + "' in section [" + section + "]");
    }
  }
}

}  // namespace orchard::config
