#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldshift/decoupling.hpp"
#include "ldshift/errors.hpp"
#include "ldshift/gamma.hpp"
#include "ldshift/measures.hpp"
#include "ldshift/observable.hpp"
#include "ldshift/renewal.hpp"
#include "ldshift/words.hpp"

namespace ldshift {

/// Error in a configuration file; line is 0 when no single line is at fault.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : InvalidArgument(line > 0 ? "config line " + std::to_string(line) + ": " + what : "config: " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct ConfigValue {
  std::string text;
  std::size_t line = 0;
};

using ConfigSection = std::map<std::string, ConfigValue>;

struct SweepConfig {
  double alpha_min = -1.0;
  double alpha_max = 1.0;
  double alpha_step = 0.1;
  std::optional<double> s_min, s_max;
  double s_step = 0.01;
  std::size_t t = 8;
  std::size_t t_max = 8;
  std::vector<std::size_t> t_list;
  std::size_t n = 2;
  std::size_t tau = 0;
  std::size_t v_max = 2;
  std::optional<std::size_t> window;
  std::string witness;  // fixed decoupling insert, empty = argmax
  std::string kind = "sld";
  std::uint64_t seed = 1;
  std::uint64_t samples = 100000;
  double interval_lo = 0.0;
  double interval_hi = 1.0;
  std::uint64_t budget = kDefaultEnumerationBudget;
};

struct Tolerances {
  double identity = 1e-12;   // gc and Level-3 identities
  double transient = 1e-10;  // transient fluctuation relation
  double convexity = 1e-9;   // midpoint convexity of finite-t pressures
};

struct RunConfig {
  std::optional<Measure> measure;
  std::optional<Measure> hat_measure;
  std::optional<Measure> q_measure;
  std::optional<Involution> involution;
  std::optional<Observable> observable;
  std::optional<renewal::RenewalPair> hmc;
  SweepConfig sweep;
  Tolerances tol;
  std::string out;

  std::vector<double> alphas() const { return make_grid(sweep.alpha_min, sweep.alpha_max, sweep.alpha_step); }
};

namespace config_detail {

inline std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double to_double(const ConfigValue& v, const std::string& what) {
  const std::string s = trim(v.text);
  try {
    std::size_t pos = 0;
    const double x = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(v.line, what + ": '" + s + "' is not a number");
  }
}

inline std::uint64_t to_uint(const ConfigValue& v, const std::string& what) {
  const std::string s = trim(v.text);
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw ConfigError(v.line, what + ": '" + s + "' is not a non-negative integer");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError(v.line, what + ": '" + s + "' is out of range");
  }
}

inline std::vector<double> to_doubles(const ConfigValue& v, const std::string& what) {
  std::vector<double> out;
  for (const auto& part : split(v.text, ',')) out.push_back(to_double({part, v.line}, what));
  return out;
}

inline Eigen::MatrixXd to_matrix(const ConfigValue& v, const std::string& what) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : split(v.text, ';')) rows.push_back(to_doubles({r, v.line}, what));
  const std::size_t n = rows.size();
  Eigen::MatrixXd M(n, rows.front().size());
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != rows.front().size()) throw ConfigError(v.line, what + ": ragged matrix rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return M;
}

inline Eigen::VectorXd to_vector(const ConfigValue& v, const std::string& what) {
  const std::vector<double> x = to_doubles(v, what);
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

// One growth term: linear(a), quadratic(c), const(c), power(c, p),
// log1p(c, scale), linlog(a, b, scale), exp(rate) or exp(c, rate).
inline std::vector<GrowthTerm> parse_term(const std::string& text, std::size_t line) {
  using K = GrowthTerm::Kind;
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')') throw ConfigError(line, "gamma term '" + text + "' malformed");
  const std::string name = trim(text.substr(0, open));
  const std::vector<double> a = to_doubles({text.substr(open + 1, text.size() - open - 2), line}, "gamma term");
  auto want = [&](std::size_t n) {
    if (a.size() != n)
      throw ConfigError(line, "gamma term '" + name + "' takes " + std::to_string(n) + " argument(s)");
  };
  if (name == "linear") return want(1), std::vector<GrowthTerm>{{K::Power, a[0], 1.0}};
  if (name == "quadratic") return want(1), std::vector<GrowthTerm>{{K::Power, a[0], 2.0}};
  if (name == "const") return want(1), std::vector<GrowthTerm>{{K::Power, a[0], 0.0}};
  if (name == "power") return want(2), std::vector<GrowthTerm>{{K::Power, a[0], a[1]}};
  if (name == "log1p") return want(2), std::vector<GrowthTerm>{{K::Log1p, a[0], a[1]}};
  if (name == "linlog") return want(3), std::vector<GrowthTerm>{{K::Power, a[0], 1.0}, {K::Log1p, a[1], a[2]}};
  if (name == "exp") {
    if (a.size() == 1) return {{K::Exp, 1.0, a[0]}};
    want(2);
    return {{K::Exp, a[0], a[1]}};
  }
  throw ConfigError(line, "unknown gamma term '" + name + "'");
}

inline GammaSpec parse_gamma(const ConfigValue& v, const ConfigValue* head) {
  std::vector<GrowthTerm> terms;
  for (const auto& part : split(v.text, '+')) {
    const auto t = parse_term(part, v.line);
    terms.insert(terms.end(), t.begin(), t.end());
  }
  std::vector<double> h;
  if (head) h = to_doubles(*head, "gamma head");
  GammaSpec g = GammaSpec::from_terms(std::move(terms), std::move(h), trim(v.text));
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(v.line, e.what());
  }
  return g;
}

inline const ConfigValue& require(const ConfigSection& s, const std::string& section, const std::string& key) {
  const auto it = s.find(key);
  if (it == s.end()) throw ConfigError(0, "[" + section + "] needs '" + key + "'");
  return it->second;
}

inline const ConfigValue* find(const ConfigSection& s, const std::string& key) {
  const auto it = s.find(key);
  return it == s.end() ? nullptr : &it->second;
}

inline Alphabet section_alphabet(const ConfigSection& s, std::size_t default_size) {
  if (const auto* a = find(s, "alphabet")) {
    try {
      return Alphabet(split(a->text, ','));
    } catch (const InvalidArgument& e) {
      throw ConfigError(a->line, e.what());
    }
  }
  return Alphabet::letters(default_size);
}

// Rethrows library validation errors with the line of the offending key.
template <class Fn>
auto at_line(std::size_t line, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(line, e.what());
  }
}

inline Measure build_measure(const std::string& name, const ConfigSection& s) {
  const ConfigValue& kind = require(s, name, "kind");
  const std::string k = trim(kind.text);
  if (k == "uniform") {
    const std::size_t n = find(s, "size") ? to_uint(*find(s, "size"), "size") : 2;
    return at_line(kind.line, [&] { return make_uniform(section_alphabet(s, n)); });
  }
  if (k == "bernoulli") {
    const ConfigValue& p = require(s, name, "p");
    std::vector<double> probs = to_doubles(p, "p");
    return at_line(p.line, [&] {
      double sum = 0.0;
      for (double x : probs) sum += x;
      if (std::abs(sum - 1.0) > 1e-12) throw InvalidArgument("probabilities sum to " + format_double(sum));
      return make_bernoulli(section_alphabet(s, probs.size()), probs);
    });
  }
  if (k == "markov") {
    const ConfigValue& P = require(s, name, "P");
    const Eigen::MatrixXd M = to_matrix(P, "P");
    std::optional<Eigen::VectorXd> pi;
    std::size_t line = P.line;
    if (const auto* v = find(s, "pi")) {
      pi = to_vector(*v, "pi");
      line = v->line;
    }
    return at_line(line, [&] { return make_markov(section_alphabet(s, static_cast<std::size_t>(M.rows())), M, pi); });
  }
  if (k == "matrix_product") {
    const ConfigValue& a = require(s, name, "alphabet");
    const Alphabet alphabet = section_alphabet(s, 0);
    std::vector<Eigen::MatrixXd> M;
    for (const auto& label : alphabet.labels()) M.push_back(to_matrix(require(s, name, "M." + label), "M." + label));
    std::optional<Eigen::VectorXd> v, w;
    std::optional<double> lambda;
    if (const auto* x = find(s, "v")) v = to_vector(*x, "v");
    if (const auto* x = find(s, "w")) w = to_vector(*x, "w");
    if (const auto* x = find(s, "lambda")) lambda = to_double(*x, "lambda");
    return at_line(a.line, [&] { return make_matrix_product(alphabet, M, v, w, lambda); });
  }
  if (k == "hidden_renewal") {
    const ConfigValue& g = require(s, name, "gamma");
    const GammaSpec gamma = parse_gamma(g, find(s, "gamma_head"));
    const double tol = find(s, "rel_tol") ? to_double(*find(s, "rel_tol"), "rel_tol") : 1e-14;
    const std::size_t cap = find(s, "state_cap") ? to_uint(*find(s, "state_cap"), "state_cap") : 1000000;
    return at_line(g.line, [&] { return make_hidden_renewal(gamma, tol, cap); });
  }
  throw ConfigError(kind.line, "unknown measure kind '" + k +
                                   "' (uniform, bernoulli, markov, matrix_product, hidden_renewal, theta_lift)");
}

inline Involution build_involution(const ConfigSection& s, const Alphabet& alphabet) {
  const ConfigValue* kind = find(s, "kind");
  const std::string k = kind ? trim(kind->text) : "reversal";
  std::vector<Symbol> map = Involution::identity_map(alphabet.size());
  if (const auto* m = find(s, "map")) {
    const auto labels = split(m->text, ',');
    if (labels.size() != alphabet.size()) throw ConfigError(m->line, "map needs one image per letter");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto idx = alphabet.index_of(labels[i]);
      if (!idx) throw ConfigError(m->line, "unknown letter '" + labels[i] + "'");
      map[i] = *idx;
    }
  }
  const std::size_t line = kind ? kind->line : 0;
  return at_line(line, [&] {
    if (k == "reversal") return Involution::reversal(map);
    if (k == "letterwise") return Involution::letterwise(map);
    throw InvalidArgument("unknown involution kind '" + k + "' (reversal, letterwise)");
  });
}

inline Observable build_observable(const ConfigSection& s, const Alphabet& alphabet) {
  const ConfigValue& kind = require(s, "observable", "kind");
  const std::string k = trim(kind.text);
  if (k == "indicator") {
    const ConfigValue& sym = require(s, "observable", "symbol");
    const auto idx = alphabet.index_of(trim(sym.text));
    if (!idx) throw ConfigError(sym.line, "unknown letter '" + trim(sym.text) + "'");
    return Observable::indicator(alphabet.size(), *idx);
  }
  if (k == "constant") {
    const ConfigValue& v = require(s, "observable", "value");
    return Observable::constant(alphabet.size(), to_double(v, "value"));
  }
  if (k == "table") {
    const ConfigValue& tab = require(s, "observable", "table");
    const std::size_t r = find(s, "r") ? to_uint(*find(s, "r"), "r") : 1;
    const std::size_t d = find(s, "d") ? to_uint(*find(s, "d"), "d") : 1;
    std::vector<double> values = to_doubles(tab, "table");
    return at_line(tab.line, [&] { return Observable(alphabet.size(), r, d, std::move(values)); });
  }
  throw ConfigError(kind.line, "unknown observable kind '" + k + "' (indicator, constant, table)");
}

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::set<std::string> measure_keys = {
      "kind", "alphabet", "size", "p", "P", "pi", "v", "w", "lambda", "gamma", "gamma_head", "rel_tol", "state_cap",
      "base"};
  static const std::map<std::string, std::set<std::string>> keys = {
      {"measure", measure_keys},
      {"hat_measure", measure_keys},
      {"q_measure", measure_keys},
      {"involution", {"kind", "map"}},
      {"observable", {"kind", "symbol", "value", "r", "d", "table"}},
      {"hmc", {"preset", "gamma", "gamma_head", "gamma_hat", "gamma_hat_head", "rel_tol", "max_terms"}},
      {"sweep",
       {"alpha_min", "alpha_max", "alpha_step", "s_min", "s_max", "s_step", "t", "t_max", "t_list", "n", "tau",
        "v_max", "window", "witness", "kind", "seed", "samples", "interval", "budget"}},
      {"output", {"out"}},
      {"tolerances", {"identity", "transient", "convexity"}},
  };
  return keys;
}

}  // namespace config_detail

/// Raw INI structure: sections of `key = value` lines, `#` comments.
inline std::map<std::string, ConfigSection> parse_ini(const std::string& text) {
  using namespace config_detail;
  std::map<std::string, ConfigSection> out;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!known_keys().count(section)) throw ConfigError(line, "unknown section [" + section + "]");
      if (out.count(section)) throw ConfigError(line, "duplicate section [" + section + "]");
      out[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    if (section.empty()) throw ConfigError(line, "key outside any section");
    const std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    const auto& allowed = known_keys().at(section);
    bool ok = allowed.count(key) > 0;
    if (!ok && section.find("measure") != std::string::npos && key.rfind("M.", 0) == 0) ok = true;
    if (!ok) throw ConfigError(line, "unknown key '" + key + "' in [" + section + "]");
    if (out[section].count(key)) throw ConfigError(line, "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(line, "empty value for '" + key + "'");
    out[section][key] = {value, line};
  }
  return out;
}

/// Parses and fully validates a configuration. Measures, the involution, the
/// observable and the renewal pair are built here, so any invalid parameter
/// surfaces with its line number before a subcommand runs.
inline RunConfig parse_config(const std::string& text) {
  using namespace config_detail;
  const auto ini = parse_ini(text);
  RunConfig c;
  auto section = [&](const std::string& name) -> const ConfigSection* {
    const auto it = ini.find(name);
    return it == ini.end() ? nullptr : &it->second;
  };

  const auto build = [&](const std::string& name) -> std::optional<Measure> {
    const ConfigSection* s = section(name);
    if (!s) return std::nullopt;
    const ConfigValue& kind = require(*s, name, "kind");
    if (trim(kind.text) == "theta_lift") return std::nullopt;  // resolved below
    if (find(*s, "base")) throw ConfigError(find(*s, "base")->line, "'base' only applies to theta_lift");
    return build_measure(name, *s);
  };
  c.measure = build("measure");
  c.hat_measure = build("hat_measure");
  c.q_measure = build("q_measure");

  const Alphabet* alphabet = c.measure ? &c.measure->alphabet() : nullptr;
  if (const ConfigSection* s = section("involution")) {
    if (!alphabet) throw ConfigError(0, "[involution] needs a [measure]");
    c.involution = build_involution(*s, *alphabet);
  }
  for (const std::string name : {"measure", "hat_measure", "q_measure"}) {
    const ConfigSection* s = section(name);
    if (!s || trim(require(*s, name, "kind").text) != "theta_lift") continue;
    const ConfigValue* base = find(*s, "base");
    const std::string b = base ? trim(base->text) : "measure";
    const std::size_t line = require(*s, name, "kind").line;
    if (b == name) throw ConfigError(line, "theta_lift cannot lift itself");
    const std::optional<Measure>* src = b == "measure" ? &c.measure : b == "q_measure" ? &c.q_measure : nullptr;
    if (!src || !*src) throw ConfigError(line, "theta_lift base '" + b + "' is not a concrete measure section");
    if (!c.involution) throw ConfigError(line, "theta_lift needs an [involution] section");
    Measure lifted = at_line(line, [&] { return theta_lift(**src, *c.involution); });
    (name == "measure" ? c.measure : name == "hat_measure" ? c.hat_measure : c.q_measure) = lifted;
  }
  for (const auto* m : {&c.hat_measure, &c.q_measure})
    if (*m && c.measure && (*m)->alphabet_size() != c.measure->alphabet_size())
      throw ConfigError(0, "measure sections use different alphabet sizes");

  if (const ConfigSection* s = section("observable")) {
    if (!alphabet) throw ConfigError(0, "[observable] needs a [measure]");
    c.observable = build_observable(*s, *alphabet);
  }

  if (const ConfigSection* s = section("hmc")) {
    if (const auto* p = find(*s, "preset")) {
      if (find(*s, "gamma") || find(*s, "gamma_hat")) throw ConfigError(p->line, "preset excludes gamma/gamma_hat");
      const auto k = to_uint(*p, "preset");
      c.hmc = at_line(p->line, [&] { return renewal::preset(static_cast<int>(k)); });
    } else {
      renewal::RenewalPair pair;
      pair.gamma = parse_gamma(require(*s, "hmc", "gamma"), find(*s, "gamma_head"));
      pair.gamma_hat = parse_gamma(require(*s, "hmc", "gamma_hat"), find(*s, "gamma_hat_head"));
      pair.name = "custom";
      c.hmc = pair;
    }
    if (const auto* v = find(*s, "rel_tol")) c.hmc->rel_tol = to_double(*v, "rel_tol");
    if (const auto* v = find(*s, "max_terms")) c.hmc->max_terms = to_uint(*v, "max_terms");
    at_line(0, [&] { c.hmc->validate(); return 0; });
  }

  if (const ConfigSection* s = section("sweep")) {
    SweepConfig& w = c.sweep;
    auto dbl = [&](const char* k, double& dst) { if (const auto* v = find(*s, k)) dst = to_double(*v, k); };
    auto opt = [&](const char* k, std::optional<double>& dst) { if (const auto* v = find(*s, k)) dst = to_double(*v, k); };
    auto sz = [&](const char* k, std::size_t& dst) { if (const auto* v = find(*s, k)) dst = to_uint(*v, k); };
    auto u64 = [&](const char* k, std::uint64_t& dst) { if (const auto* v = find(*s, k)) dst = to_uint(*v, k); };
    dbl("alpha_min", w.alpha_min);
    dbl("alpha_max", w.alpha_max);
    dbl("alpha_step", w.alpha_step);
    opt("s_min", w.s_min);
    opt("s_max", w.s_max);
    dbl("s_step", w.s_step);
    sz("t", w.t);
    sz("t_max", w.t_max);
    sz("n", w.n);
    sz("tau", w.tau);
    sz("v_max", w.v_max);
    u64("seed", w.seed);
    u64("samples", w.samples);
    u64("budget", w.budget);
    if (const auto* v = find(*s, "window")) w.window = to_uint(*v, "window");
    if (const auto* v = find(*s, "witness")) w.witness = trim(v->text);
    if (const auto* v = find(*s, "kind")) {
      w.kind = trim(v->text);
      at_line(v->line, [&] { return parse_decoupling_kind(w.kind); });
    }
    if (const auto* v = find(*s, "t_list"))
      for (const auto& part : split(v->text, ',')) w.t_list.push_back(to_uint({part, v->line}, "t_list"));
    if (const auto* v = find(*s, "interval")) {
      const auto ab = to_doubles(*v, "interval");
      if (ab.size() != 2) throw ConfigError(v->line, "interval needs two numbers");
      w.interval_lo = ab[0];
      w.interval_hi = ab[1];
    }
  }
  if (const ConfigSection* s = section("tolerances")) {
    if (const auto* v = find(*s, "identity")) c.tol.identity = to_double(*v, "identity");
    if (const auto* v = find(*s, "transient")) c.tol.transient = to_double(*v, "transient");
    if (const auto* v = find(*s, "convexity")) c.tol.convexity = to_double(*v, "convexity");
  }
  if (const ConfigSection* s = section("output"))
    if (const auto* v = find(*s, "out")) c.out = trim(v->text);
  return c;
}

/// Invariants that flags can break after parsing; checked before a run.
inline void validate_run_config(const RunConfig& c) {
  const SweepConfig& w = c.sweep;
  if (!(w.alpha_min <= w.alpha_max)) throw ConfigError(0, "alpha_min must be <= alpha_max");
  if (!(w.alpha_step > 0.0)) throw ConfigError(0, "alpha_step must be > 0");
  if (!(w.s_step > 0.0)) throw ConfigError(0, "s_step must be > 0");
  if (w.s_min && w.s_max && !(*w.s_min <= *w.s_max)) throw ConfigError(0, "s_min must be <= s_max");
  if (!(w.interval_lo <= w.interval_hi)) throw ConfigError(0, "interval must satisfy lo <= hi");
  if (w.t == 0) throw ConfigError(0, "t must be >= 1");
  if (w.samples == 0) throw ConfigError(0, "samples must be >= 1");
}

}  // namespace ldshift
