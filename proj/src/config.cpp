#include "shapecm/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace shapecm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_num(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not numeric: '" +
                                v + "'");
  }
  if (used != v.size())
    throw std::invalid_argument("config: key '" + key +
                                "' has trailing junk: '" + v + "'");
  return x;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value': '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key on line " +
                                  std::to_string(lineno));
    cfg.kv_[key] = val;
  }
  return cfg;
}

void KeyValueConfig::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("config: override '" + assignment +
                                "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::invalid_argument("config: empty key");
  kv_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
  return kv_.count(key) != 0;
}

std::string KeyValueConfig::get_str(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end())
    throw std::invalid_argument("config: missing required key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_str(const std::string& key,
                                    const std::string& dflt) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

double KeyValueConfig::get_num(const std::string& key, double dflt) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? dflt : parse_num(key, it->second);
}

double KeyValueConfig::get_num(const std::string& key) const {
  return parse_num(key, get_str(key));
}

long KeyValueConfig::get_int(const std::string& key, long dflt) const {
  const double v = get_num(key, static_cast<double>(dflt));
  const long i = static_cast<long>(std::llround(v));
  if (std::abs(v - i) > 1e-9)
    throw std::invalid_argument("config: key '" + key + "' is not integral");
  return i;
}

bool KeyValueConfig::get_bool(const std::string& key, bool dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: key '" + key + "' is not boolean: '" +
                              v + "'");
}

std::vector<double> KeyValueConfig::get_grid(const std::string& key) const {
  const std::string v = get_str(key);
  std::vector<double> grid;
  if (v.find(':') != std::string::npos) {
    double lo = 0, hi = 0, step = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(v);
    if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' ||
        !(step > 0))
      throw std::invalid_argument("config: grid '" + v +
                                  "' is not lo:hi:step");
    for (double x = lo; x <= hi + 1e-9; x += step) grid.push_back(x);
  } else {
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ','))
      grid.push_back(parse_num(key, trim(item)));
  }
  if (grid.empty())
    throw std::invalid_argument("config: empty grid for '" + key + "'");
  return grid;
}

std::vector<std::uint64_t> KeyValueConfig::get_seed_list(
    const std::string& key, std::vector<std::uint64_t> dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  std::vector<std::uint64_t> seeds;
  std::string item;
  std::istringstream is(it->second);
  while (std::getline(is, item, ','))
    seeds.push_back(static_cast<std::uint64_t>(
        std::stoull(trim(item))));
  if (seeds.empty())
    throw std::invalid_argument("config: empty seed list for '" + key + "'");
  return seeds;
}

std::string KeyValueConfig::canonical_string() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

}  // namespace shapecm
