#include "csdro/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace csdro::cli {

const std::map<std::string, std::vector<std::string>>& config_schema() {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"experiment", {"application", "model", "policy", "seed", "seeds", "test_size", "models"}},
      {"data", {"source", "n", "d_x", "d_y", "c_amp", "path", "features", "outcomes"}},
      {"costs", {"h", "b", "c", "omega"}},
      {"sinkhorn", {"p", "eps", "lambda", "B", "n1", "n2", "n3"}},
      {"train", {"iterations", "gd_steps", "c_alpha", "c_beta", "radius", "eval_every", "rate", "batch",
                 "record_wallclock"}},
      {"policy", {"trees", "depth", "hidden", "tau", "file"}},
      {"benchmark", {"n", "d_x", "p", "lambda", "eps", "select", "holdout"}},
      {"worstcase", {"lambda", "x_min", "x_max", "y_min", "y_max", "grid", "rho", "lambda_lo", "lambda_hi", "curve_points"}},
      {"interpret", {"top_k", "quadrature", "point"}},
      {"portfolio", {"window", "hold", "assets", "min_window"}},
  };
  return schema;
}

namespace {

void check_key(const std::string& section, const std::string& key) {
  const auto& schema = config_schema();
  const auto it = schema.find(section);
  if (it == schema.end()) throw ValidationError("config: unknown section [" + section + "]");
  if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
    throw ValidationError("config: unknown key '" + key + "' in section [" + section + "]");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double parse_double(const std::string& section, const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ValidationError("config: " + section + "." + key + ": expected a number, got '" + s + "'");
  return v;
}

long parse_long(const std::string& section, const std::string& key, const std::string& s) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ValidationError("config: " + section + "." + key + ": expected an integer, got '" + s + "'");
  return v;
}

}  // namespace

Config Config::from_string(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  Config c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ValidationError("config: key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) c.set(section, key, value.get_value<std::string>());
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ValidationError("config: cannot open '" + path + "'");
  std::string text;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  std::fclose(f);
  return from_string(text);
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  check_key(section, key);
  values_[section][key] = value;
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& def) const {
  check_key(section, key);
  return has(section, key) ? values_.at(section).at(key) : def;
}

double Config::get_double(const std::string& section, const std::string& key, double def) const {
  return has(section, key) ? parse_double(section, key, get_string(section, key, "")) : def;
}

long Config::get_long(const std::string& section, const std::string& key, long def) const {
  return has(section, key) ? parse_long(section, key, get_string(section, key, "")) : def;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool def) const {
  if (!has(section, key)) return def;
  const auto s = get_string(section, key, "");
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError("config: " + section + "." + key + ": expected true or false, got '" + s + "'");
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key,
                                        const std::vector<double>& def) const {
  if (!has(section, key)) return def;
  std::vector<double> out;
  for (const auto& s : split_list(get_string(section, key, ""))) out.push_back(parse_double(section, key, s));
  if (out.empty()) throw ValidationError("config: " + section + "." + key + ": empty list");
  return out;
}

std::vector<long> Config::get_longs(const std::string& section, const std::string& key,
                                    const std::vector<long>& def) const {
  if (!has(section, key)) return def;
  std::vector<long> out;
  for (const auto& s : split_list(get_string(section, key, ""))) out.push_back(parse_long(section, key, s));
  if (out.empty()) throw ValidationError("config: " + section + "." + key + ": empty list");
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& section, const std::string& key,
                                             const std::vector<std::string>& def) const {
  if (!has(section, key)) return def;
  auto out = split_list(get_string(section, key, ""));
  if (out.empty()) throw ValidationError("config: " + section + "." + key + ": empty list");
  return out;
}

std::string Config::canonical() const {
  std::string s;
  for (const auto& [section, body] : values_)
    for (const auto& [key, value] : body) s += section + "." + key + "=" + value + "\n";
  return s;
}

std::uint64_t Config::hash() const {
  // FNV-1a, 64 bit.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string Config::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

}  // namespace csdro::cli
