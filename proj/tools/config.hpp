#pragma once

// Scenario configuration: strict JSON reading, the field/measure catalog and the
// config hash.

#include "otto/error.hpp"
#include "otto/fields.hpp"
#include "otto/measure.hpp"
#include "otto/transport.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace otto::cli {

using nlohmann::json;

// Reads an object key by key and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) raise_config("ConfigSchema", where_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string str(const std::string& key, const std::optional<std::string>& fallback = std::nullopt) {
    if (!has(key)) return required(key, fallback);
    const json& v = raw(key);
    if (!v.is_string()) raise_config("ConfigSchema", where_ + "." + key + " must be a string");
    return v.get<std::string>();
  }

  double num(const std::string& key, const std::optional<double>& fallback = std::nullopt) {
    if (!has(key)) return required(key, fallback);
    const json& v = raw(key);
    if (!v.is_number()) raise_config("ConfigSchema", where_ + "." + key + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) raise_config("ConfigSchema", where_ + "." + key + " must be finite");
    return x;
  }

  int integer(const std::string& key, const std::optional<int>& fallback = std::nullopt) {
    if (!has(key)) return required(key, fallback);
    const json& v = raw(key);
    if (!v.is_number_integer()) raise_config("ConfigSchema", where_ + "." + key + " must be an integer");
    return v.get<int>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) raise_config("ConfigSchema", where_ + "." + key + " must be true or false");
    return v.get<bool>();
  }

  std::vector<std::string> strings(const std::string& key) {
    if (!has(key)) return {};
    const json& v = raw(key);
    if (!v.is_array()) raise_config("ConfigSchema", where_ + "." + key + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) raise_config("ConfigSchema", where_ + "." + key + " must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::size_t expect = 0) {
    if (!has(key)) return {};
    const json& v = raw(key);
    if (!v.is_array()) raise_config("ConfigSchema", where_ + "." + key + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) raise_config("ConfigSchema", where_ + "." + key + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
    if (expect && out.size() != expect)
      raise_config("ConfigSchema", where_ + "." + key + " must have " + std::to_string(expect) + " entries");
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) raise_config("UnknownKey", "unknown key '" + it.key() + "' in " + where_);
  }

 private:
  template <class T>
  T required(const std::string& key, const std::optional<T>& fallback) {
    if (!fallback) raise_config("MissingKey", "missing key '" + key + "' in " + where_);
    return *fallback;
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

// Seeds are decimal strings so that every 64-bit value round-trips; small integers are accepted.
inline std::uint64_t parse_seed(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  if (!v.is_string()) raise_config("ConfigSchema", "seed must be a decimal string");
  const std::string s = v.get<std::string>();
  if (s.empty() || s.size() > 20 || s.find_first_not_of("0123456789") != std::string::npos)
    raise_config("ConfigSchema", "seed must be a decimal string");
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(s, &pos);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    raise_config("ConfigSchema", "seed does not fit in 64 bits");
  }
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << x;
  return os.str();
}

// Config hash over the canonical dump (keys sorted, no whitespace).
inline std::string config_hash(const json& j) { return hex64(fnv1a(j.dump())); }

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise_config("ConfigRead", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    raise_config("ConfigParse", std::string("malformed JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- catalog

struct CatalogEntry {
  std::string name;
  std::vector<std::string> args;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

// "name" or "name(a, b, ...)".
inline CatalogEntry parse_entry(const std::string& text) {
  const std::string s = trim(text);
  const auto open = s.find('(');
  if (open == std::string::npos) {
    if (s.empty()) raise_config("CatalogSyntax", "empty catalog entry");
    return {s, {}};
  }
  if (s.back() != ')') raise_config("CatalogSyntax", "unbalanced parentheses in '" + s + "'");
  CatalogEntry e{trim(s.substr(0, open)), {}};
  std::stringstream in(s.substr(open + 1, s.size() - open - 2));
  std::string part;
  while (std::getline(in, part, ',')) e.args.push_back(trim(part));
  if (e.args.size() == 1 && e.args[0].empty()) e.args.clear();
  return e;
}

inline double to_number(const std::string& s, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(x)) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    raise_config("CatalogSyntax", "expected a number in " + ctx + ", got '" + s + "'");
  }
}

inline void expect_args(const CatalogEntry& e, std::size_t lo, std::size_t hi) {
  if (e.args.size() < lo || e.args.size() > hi)
    raise_config("CatalogSyntax", "wrong number of arguments for '" + e.name + "'");
}

// "uniform", "cosine(a, k)", "vonmises(kappa[, center])".
inline GridDensity parse_measure(const std::string& text, int dim, int n) {
  const CatalogEntry e = parse_entry(text);
  if (e.name == "uniform") {
    expect_args(e, 0, 0);
    return GridDensity::uniform(dim, n);
  }
  if (e.name == "cosine") {
    expect_args(e, 2, 2);
    const double a = to_number(e.args[0], text);
    const double k = to_number(e.args[1], text);
    if (std::abs(a) >= 1.0 || k != std::floor(k) || k < 1) raise_config("BadMeasure", "cosine(a, k) needs |a| < 1, k >= 1");
    return GridDensity::cosine(dim, n, a, static_cast<int>(k));
  }
  if (e.name == "vonmises") {
    expect_args(e, 1, 2);
    return GridDensity::von_mises(dim, n, to_number(e.args[0], text), e.args.size() > 1 ? to_number(e.args[1], text) : 0.0);
  }
  raise_config("UnknownMeasure", "no measure family '" + e.name + "'");
}

// "name" or "name*scale" for a named trigonometric potential.
inline TrigPotential parse_potential(const std::string& text, int dim) {
  const std::string s = trim(text);
  const auto star = s.find('*');
  if (star == std::string::npos) return TrigPotential::named(dim, s);
  return TrigPotential::named(dim, trim(s.substr(0, star))).scaled(to_number(trim(s.substr(star + 1)), s));
}

// "gradient_potential(id[, scale])", "interaction(sin|cos, strength)", "entropy_drift(strength)", "zero".
inline MeasureVectorField parse_field(const std::string& text, int dim) {
  const CatalogEntry e = parse_entry(text);
  if (e.name == "zero") return MeasureVectorField::zero(dim);
  if (e.name == "gradient_potential") {
    expect_args(e, 1, 2);
    TrigPotential p = TrigPotential::named(dim, e.args[0]);
    if (e.args.size() > 1) p = p.scaled(to_number(e.args[1], text));
    return MeasureVectorField::gradient_potential(p);
  }
  if (e.name == "interaction") {
    expect_args(e, 2, 2);
    Kernel k;
    if (e.args[0] == "sin") k = Kernel::sine;
    else if (e.args[0] == "cos") k = Kernel::cosine;
    else raise_config("CatalogSyntax", "interaction kernel must be sin or cos");
    return MeasureVectorField::interaction(dim, k, to_number(e.args[1], text));
  }
  if (e.name == "entropy_drift") {
    expect_args(e, 0, 1);
    return MeasureVectorField::entropy_drift(dim, e.args.empty() ? 1.0 : to_number(e.args[0], text));
  }
  raise_config("UnknownField", "no field '" + e.name + "' in the catalog");
}

// Sum of catalog fields.
inline MeasureVectorField parse_field_sum(const std::vector<std::string>& entries, int dim) {
  MeasureVectorField out = MeasureVectorField::zero(dim);
  for (const auto& s : entries) out += parse_field(s, dim);
  return out;
}

// Right-invariant fields on D(S^1): measure fields plus "vertical(c0[, ccos, csin])".
inline RightInvariantField parse_right_invariant(const std::vector<std::string>& entries) {
  RightInvariantField out = [](const DiscreteDiffeo& phi) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(phi.size()); };
  for (const auto& s : entries) {
    const CatalogEntry e = parse_entry(s);
    if (e.name == "vertical") {
      expect_args(e, 1, 3);
      VerticalCoefficient c{to_number(e.args[0], s), e.args.size() > 1 ? to_number(e.args[1], s) : 0.0,
                            e.args.size() > 2 ? to_number(e.args[2], s) : 0.0};
      out = out + right_invariant(c);
    } else {
      out = out + right_invariant(parse_field(s, 1));
    }
  }
  return out;
}

inline int manifold_dim(const std::string& id) {
  if (id == "circle") return 1;
  if (id == "torus2") return 2;
  raise_config("UnknownManifold", "measure scenarios run on 'circle' or 'torus2', not '" + id + "'");
}

}  // namespace otto::cli
