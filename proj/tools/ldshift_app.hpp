#pragma once

// Subcommand dispatch for the ldshift tool. Kept in a header so the tests can
// drive run() without spawning processes.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldshift/config.hpp"
#include "ldshift/coupling_map.hpp"
#include "ldshift/decoupling.hpp"
#include "ldshift/ldp.hpp"
#include "ldshift/level3.hpp"
#include "ldshift/renewal.hpp"

namespace ldshift::app {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"pressure", "rate",  "decoupling", "psi-check", "fr-check",
                                             "level3",   "chernoff", "hmc",    "probe"};
  return s;
}

/// Command-line overrides; unset fields keep the config value.
struct Flags {
  std::optional<std::string> out;
  std::optional<double> alpha_min, alpha_max, alpha_step;
  std::optional<std::size_t> t, t_max, tau, v_max, n;
  std::optional<int> example;
  std::optional<std::uint64_t> seed, samples;
  std::optional<unsigned> threads;
  std::optional<double> tol;
  std::optional<std::string> kind;
};

inline void apply_flags(RunConfig& c, const Flags& f) {
  if (f.out) c.out = *f.out;
  if (f.alpha_min) c.sweep.alpha_min = *f.alpha_min;
  if (f.alpha_max) c.sweep.alpha_max = *f.alpha_max;
  if (f.alpha_step) c.sweep.alpha_step = *f.alpha_step;
  if (f.t) c.sweep.t = *f.t;
  if (f.t_max) c.sweep.t_max = *f.t_max;
  if (f.tau) c.sweep.tau = *f.tau;
  if (f.v_max) c.sweep.v_max = *f.v_max;
  if (f.n) c.sweep.n = *f.n;
  if (f.seed) c.sweep.seed = *f.seed;
  if (f.samples) c.sweep.samples = *f.samples;
  if (f.kind) c.sweep.kind = *f.kind;
  if (f.tol) c.tol.identity = c.tol.transient = c.tol.convexity = *f.tol;
  if (f.example) c.hmc = renewal::preset(*f.example);
}

// JSON cannot carry inf/nan as numbers; extended reals go out as strings.
inline json jnum(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

class Csv {
 public:
  explicit Csv(std::string header) { buf_ << header << '\n'; }

  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      if (!first) buf_ << ',';
      buf_ << format_double(v);
      first = false;
    }
    buf_ << '\n';
  }
  void raw(const std::string& line) { buf_ << line << '\n'; }
  std::string str() const { return buf_.str(); }

 private:
  std::ostringstream buf_;
};

struct Outcome {
  json report = json::object();
  std::optional<Csv> csv;
  int code = 0;
  std::string reason;

  void fail(const std::string& why) {
    if (code == 0) {
      code = 2;
      reason = why;
    }
  }
};

namespace detail {

inline const Measure& need_measure(const RunConfig& c) {
  if (!c.measure) throw ConfigError(0, "this subcommand needs a [measure] section");
  return *c.measure;
}

// Reference measure of an entropy-production pair: [hat_measure], else the
// Theta-lift of [measure] under [involution].
inline std::optional<Measure> hat_of(const RunConfig& c) {
  if (c.hat_measure) return c.hat_measure;
  if (c.involution) return theta_lift(need_measure(c), *c.involution);
  return std::nullopt;
}

inline unsigned threads(const Flags& f) { return f.threads ? std::max(1u, *f.threads) : default_threads(); }

inline double max_midpoint_violation(const PressureCurve& q) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < q.values.size(); ++i) {
    const double a = q.values[i - 1], b = q.values[i], c = q.values[i + 1];
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) continue;
    const double h1 = q.alphas[i] - q.alphas[i - 1], h2 = q.alphas[i + 1] - q.alphas[i];
    worst = std::max(worst, b - (h2 * a + h1 * c) / (h1 + h2));
  }
  return worst;
}

// The scalar pressure curve a pressure/rate run works on.
inline PressureCurve pressure_curve(const RunConfig& c, unsigned th, std::string& label) {
  const Measure& m = need_measure(c);
  const std::size_t t = c.sweep.t;
  const std::uint64_t budget = c.sweep.budget;
  if (c.observable) {
    if (c.observable->d() != 1) throw ConfigError(0, "pressure curves need a scalar observable (d = 1)");
    const Observable f = *c.observable;
    label = "observable";
    return sample_curve([m, f, t, budget](double a) { return finite_pressure(m, f, {a}, t, true, budget); },
                        c.alphas(), t, th);
  }
  const auto hat = hat_of(c);
  if (!hat) throw ConfigError(0, "pressure needs an [observable], a [hat_measure] or an [involution]");
  const Measure h = *hat;
  label = "entropy_production";
  return sample_curve([m, h, t, budget](double a) { return entropy_pressure(m, h, a, t, budget); }, c.alphas(), t,
                      th);
}

inline void check_pressure(const RunConfig& c, const PressureCurve& q, const std::string& label, Outcome& o) {
  const double conv = max_midpoint_violation(q);
  o.report["max_convexity_violation"] = jnum(conv);
  if (conv > c.tol.convexity) o.fail("finite-t pressure not midpoint convex (violation " + format_double(conv) + ")");
  if (label == "entropy_production")
    for (std::size_t i = 0; i < q.alphas.size(); ++i)
      if (q.alphas[i] == 0.0 && q.values[i] != 0.0) o.fail("entropy-production pressure q(0) != 0");
}

inline Outcome pressure(const RunConfig& c, const Flags& f) {
  Outcome o;
  std::string label;
  const PressureCurve q = pressure_curve(c, threads(f), label);
  o.csv.emplace("alpha,q");
  for (std::size_t i = 0; i < q.alphas.size(); ++i) o.csv->row({q.alphas[i], q.values[i]});
  o.report["kind"] = label;
  o.report["t"] = c.sweep.t;
  o.report["points"] = q.alphas.size();
  check_pressure(c, q, label, o);
  return o;
}

inline Outcome rate(const RunConfig& c, const Flags& f) {
  Outcome o;
  std::string label;
  const PressureCurve q = pressure_curve(c, threads(f), label);
  check_pressure(c, q, label, o);
  std::vector<std::size_t> fin;
  for (std::size_t i = 0; i < q.values.size(); ++i)
    if (std::isfinite(q.values[i])) fin.push_back(i);
  if (fin.size() < 3) throw ConfigError(0, "rate needs at least 3 finite pressure points");
  const auto slope = [&](std::size_t i, std::size_t j) { return (q.values[j] - q.values[i]) / (q.alphas[j] - q.alphas[i]); };
  const double s_lo = c.sweep.s_min.value_or(slope(fin[0], fin[1]));
  const double s_hi = c.sweep.s_max.value_or(slope(fin[fin.size() - 2], fin.back()));
  const RateFunction I = legendre_transform(q, make_grid(s_lo, s_hi, c.sweep.s_step));
  o.csv.emplace("s,I");
  double min_i = kInf;
  for (std::size_t i = 0; i < I.s.size(); ++i) {
    o.csv->row({I.s[i], I.I[i]});
    min_i = std::min(min_i, I.I[i]);
  }
  o.report["kind"] = label;
  o.report["t"] = c.sweep.t;
  o.report["points"] = I.s.size();
  o.report["min_I"] = jnum(min_i);
  if (min_i < -c.tol.convexity) o.fail("rate function negative (min " + format_double(min_i) + ")");
  return o;
}

inline Outcome decoupling(const RunConfig& c, const Flags& f) {
  Outcome o;
  const Measure& m = need_measure(c);
  DecouplingSpec spec;
  spec.kind = parse_decoupling_kind(c.sweep.kind);
  spec.tau = c.sweep.tau;
  spec.v_max = c.sweep.v_max;
  spec.window = c.sweep.window;
  spec.budget = c.sweep.budget;
  spec.threads = threads(f);
  if (!c.sweep.witness.empty()) spec.fixed_witness = parse_word(m.alphabet(), c.sweep.witness);
  std::optional<Measure> hat;
  if (spec.kind == DecouplingKind::SSD) {
    hat = hat_of(c);
    if (!hat) throw ConfigError(0, "ssd needs a [hat_measure] or an [involution]");
  }
  o.csv.emplace("t,tau,c_star,violations");
  json per_t = json::array();
  json violations = json::array();
  std::size_t total = 0;
  for (std::size_t t = 1; t <= c.sweep.t; ++t) {
    const DecouplingReport r = spec.kind == DecouplingKind::SLD  ? verify_sld(m, t, spec)
                               : spec.kind == DecouplingKind::UD ? verify_ud(m, t, spec)
                                                                 : verify_ssd(m, *hat, t, spec);
    o.csv->row({static_cast<double>(t), static_cast<double>(r.tau), r.c_star, static_cast<double>(r.violations.size())});
    per_t.push_back({{"t", t},
                     {"tau", r.tau},
                     {"c_star", jnum(r.c_star)},
                     {"witness_count", r.witnesses.size()},
                     {"violations", r.violations.size()},
                     {"elapsed_ms", r.elapsed_ms}});
    for (const auto& [u, v] : r.violations)
      if (violations.size() < 50)
        violations.push_back({{"t", t}, {"u", to_string(m.alphabet(), u)}, {"v", to_string(m.alphabet(), v)}});
    total += r.violations.size();
  }
  o.report["kind"] = c.sweep.kind;
  o.report["tau"] = c.sweep.tau;
  o.report["v_max"] = c.sweep.v_max;
  o.report["per_t"] = per_t;
  o.report["violations"] = violations;
  if (total > 0) o.fail(std::to_string(total) + " (u, v) pairs violate " + c.sweep.kind);
  return o;
}

inline Outcome psi_check(const RunConfig& c, const Flags& f) {
  Outcome o;
  const Measure& m = need_measure(c);
  const BlockLayout l = block_counts(c.sweep.n, c.sweep.t, c.sweep.tau);
  json& r = o.report;
  r["n"] = l.n;
  r["t"] = l.t;
  r["N"] = l.N;
  r["t_prime"] = l.t_prime;
  r["delta"] = {l.delta_min, l.delta_max};
  if (l.degenerate()) {
    r["degenerate"] = true;
    return o;
  }
  const unsigned th = threads(f);
  const PsiDiagnostics d = psi_certificate({&m}, l, c.sweep.budget, th);
  r["g_min"] = jnum(d.g_min);
  r["g_analytic"] = jnum(d.g_analytic);
  r["multiplicity"] = d.multiplicity;
  double sigma = std::numeric_limits<double>::quiet_NaN(), birk = sigma;
  if (const auto hat = hat_of(c)) sigma = compat_defect({&m, &*hat}, l, DefectMode::Sigma, nullptr, c.sweep.budget, th).defect;
  if (c.observable) birk = compat_defect({&m}, l, DefectMode::Birkhoff, &*c.observable, c.sweep.budget, th).defect;
  r["sigma_defect"] = jnum(sigma);
  r["birkhoff_defect"] = jnum(birk);
  if (d.g_min > d.g_analytic + 1e-12) o.fail("g_min exceeds the analytic bound");
  if (std::isfinite(sigma) && sigma > 2.0 * d.g_analytic / static_cast<double>(l.t) + 1e-12)
    o.fail("sigma defect exceeds 2 g_analytic / t");
  return o;
}

inline Outcome fr_check(const RunConfig& c, const Flags&) {
  Outcome o;
  const Measure& m = need_measure(c);
  const Involution theta = c.involution.value_or(Involution::reversal(m.alphabet_size()));
  const FluctuationReport r = fluctuation_identities(m, theta, c.alphas(), c.sweep.t, c.sweep.budget);
  o.csv.emplace("alpha,gc_defect");
  const auto al = c.alphas();
  for (std::size_t i = 0; i < al.size(); ++i) o.csv->row({al[i], r.gc_per_alpha[i]});
  o.report["t"] = c.sweep.t;
  o.report["gc_defect"] = jnum(r.gc_defect);
  o.report["transient_defect"] = jnum(r.transient_defect);
  o.report["atoms"] = r.atoms.size();
  if (r.gc_defect > c.tol.identity) o.fail("Gallavotti-Cohen identity defect " + format_double(r.gc_defect));
  if (!(r.transient_defect <= c.tol.transient))
    o.fail("transient fluctuation identity defect " + format_double(r.transient_defect));
  return o;
}

inline Outcome level3(const RunConfig& c, const Flags&) {
  Outcome o;
  const Measure& P = need_measure(c);
  const Measure Q = c.q_measure.value_or(P);
  const std::size_t t_max = c.sweep.t_max;
  o.csv.emplace("t,h_rate,varsigma_rate,ent_rate");
  double fr = 0.0, hd = 0.0;
  for (std::size_t t = 1; t <= t_max; ++t) {
    const EntropyReport e = entropy_rates(Q, P, t, c.sweep.budget);
    o.csv->row({static_cast<double>(t), e.h_rate, e.varsigma_rate, e.ent_rate});
    if (e.witness && !o.report.contains("ent_witness")) o.report["ent_witness"] = to_string(P.alphabet(), *e.witness);
    if (c.involution) {
      const Level3Check l = level3_fr_check(Q, P, *c.involution, t, c.sweep.budget);
      if (l.infinite) {
        o.fail("Level-3 identity undefined at t=" + std::to_string(t) + ": " + *l.infinite);
        continue;
      }
      fr = std::max(fr, l.fr_defect);
      hd = std::max(hd, l.h_defect);
    }
  }
  if (c.involution) {
    o.report["fr_defect"] = jnum(fr);
    o.report["h_defect"] = jnum(hd);
    if (fr > c.tol.identity) o.fail("Level-3 fluctuation identity defect " + format_double(fr));
    if (hd > c.tol.identity) o.fail("h_t(Q) != h_t(Theta Q), defect " + format_double(hd));
  }
  if (t_max >= 2) {
    const SubadditivityReport ks = ks_subadditivity_check(Q, t_max, c.sweep.budget);
    o.report["subadditivity_excess"] = jnum(ks.max_excess);
    if (ks.max_excess > 1e-9) o.fail("block entropy not subadditive");
  }
  o.report["t_max"] = t_max;
  return o;
}

inline Outcome chernoff(const RunConfig& c, const Flags& f) {
  Outcome o;
  const Measure& m = need_measure(c);
  const auto hat = hat_of(c);
  if (!hat) throw ConfigError(0, "chernoff needs a [hat_measure] or an [involution]");
  const PressureCurve e = chernoff_curve(m, *hat, c.sweep.t, make_grid(0.0, 1.0, c.sweep.alpha_step), threads(f));
  o.csv.emplace("alpha,e");
  for (std::size_t i = 0; i < e.alphas.size(); ++i) o.csv->row({e.alphas[i], e.values[i]});
  const ChernoffResult r = chernoff_exponent(e);
  o.report["t"] = c.sweep.t;
  o.report["alpha"] = jnum(r.alpha);
  o.report["exponent"] = jnum(r.exponent);
  o.report["symmetric"] = r.symmetric;
  return o;
}

inline Outcome hmc(const RunConfig& c, const Flags& f) {
  Outcome o;
  if (!c.hmc) throw ConfigError(0, "hmc needs --example K or an [hmc] section");
  const auto start = std::chrono::steady_clock::now();
  const renewal::QCurve q = renewal::q_curve(*c.hmc, c.alphas(), false, true, threads(f));
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  o.csv.emplace("alpha,rho,kappa,q");
  json cases = json::array();
  for (const auto& p : q.points) {
    o.csv->row({p.r.alpha, p.r.rho, p.r.kappa, p.r.q});
    cases.push_back(renewal::to_string(p.r.rho_case));
  }
  json tr = json::array();
  for (const auto& t : q.transitions)
    tr.push_back({{"alpha", t.alpha}, {"left", renewal::to_string(t.left)}, {"right", renewal::to_string(t.right)}});
  o.report["preset"] = c.hmc->name;
  o.report["points"] = q.points.size();
  o.report["cases"] = cases;
  o.report["transitions"] = tr;
  o.report["elapsed_ms"] = ms;
  return o;
}

inline Outcome probe(const RunConfig& c, const Flags& f) {
  Outcome o;
  const Measure& m = need_measure(c);
  if (!c.observable) throw ConfigError(0, "probe needs an [observable]");
  const Observable& obs = *c.observable;
  if (obs.d() != 1) throw ConfigError(0, "probe needs a scalar observable");
  std::vector<std::size_t> ts = c.sweep.t_list.empty() ? std::vector<std::size_t>{c.sweep.t} : c.sweep.t_list;
  const std::size_t t_max = *std::max_element(ts.begin(), ts.end());
  // Reference rate from the finite-t pressure at the largest probed t (the
  // transfer path makes that exact for Uniform/Bernoulli/Markov).
  std::size_t t_ref = t_max;
  if (!has_transfer_fast_path(m))
    while (t_ref > 1 && std::pow(static_cast<double>(m.alphabet_size()), static_cast<double>(t_ref)) >
                            static_cast<double>(c.sweep.budget))
      --t_ref;
  const PressureCurve q = sample_curve([&](double a) { return finite_pressure(m, obs, {a}, t_ref, true, c.sweep.budget); },
                                       make_grid(-20.0, 20.0, 0.01), t_ref, threads(f));
  const double a = c.sweep.interval_lo, b = c.sweep.interval_hi;
  std::vector<double> s = make_grid(a, b, c.sweep.s_step);
  if (s.empty() || s.back() < b) s.push_back(b);
  const double ref = -rate_inf_on(legendre_transform(q, s), a, b);
  const ProbeReport r = empirical_ldp_probe(m, obs, a, b, ts, c.sweep.samples, c.sweep.seed, ref, threads(f));
  o.csv.emplace("t,emp_rate,ref_rate,ci_low,ci_high");
  json hits = json::array();
  for (const auto& row : r.rows) {
    o.csv->row({static_cast<double>(row.t), row.emp_rate, row.ref_rate, row.ci_low, row.ci_high});
    hits.push_back(row.hits);
  }
  o.report["interval"] = {a, b};
  o.report["samples"] = c.sweep.samples;
  o.report["seed"] = c.sweep.seed;
  o.report["reference_t"] = t_ref;
  o.report["hits"] = hits;
  o.report["all_zero"] = r.all_zero;
  return o;
}

}  // namespace detail

/// Runs one subcommand. CSV goes to config.out when set, else to `out`
/// before the footer; the JSON footer (one line) always goes to `out`.
inline int run(const std::string& sub, const std::optional<std::string>& config_text, const Flags& flags,
               std::ostream& out) {
  json footer;
  footer["command"] = sub;
  Outcome o;
  std::string out_path;
  try {
    RunConfig c = config_text ? parse_config(*config_text) : RunConfig{};
    apply_flags(c, flags);
    validate_run_config(c);
    out_path = c.out;
    if (sub == "pressure") o = detail::pressure(c, flags);
    else if (sub == "rate") o = detail::rate(c, flags);
    else if (sub == "decoupling") o = detail::decoupling(c, flags);
    else if (sub == "psi-check") o = detail::psi_check(c, flags);
    else if (sub == "fr-check") o = detail::fr_check(c, flags);
    else if (sub == "level3") o = detail::level3(c, flags);
    else if (sub == "chernoff") o = detail::chernoff(c, flags);
    else if (sub == "hmc") o = detail::hmc(c, flags);
    else if (sub == "probe") o = detail::probe(c, flags);
    else throw ConfigError(0, "unknown subcommand '" + sub + "'");
  } catch (const CheckFailure& e) {
    o.code = 2;
    o.reason = e.what();
  } catch (const AbsoluteContinuityError& e) {
    o.code = 2;
    o.reason = e.what();
    o.report["witness"] = e.witness();
  } catch (const ConvergenceError& e) {
    o.code = 3;
    o.reason = e.what();
    o.report["gap"] = jnum(e.gap());
  } catch (const std::exception& e) {
    o.code = 1;
    o.reason = e.what();
    o.csv.reset();
  }
  if (o.csv) {
    if (out_path.empty()) {
      out << o.csv->str();
    } else {
      std::ofstream file(out_path, std::ios::binary);
      file << o.csv->str();
      if (!file) {
        o.code = 1;
        o.reason = "cannot write '" + out_path + "'";
      }
    }
  }
  for (auto& [k, v] : o.report.items()) footer[k] = v;
  static const char* status[] = {"ok", "config_error", "check_failure", "non_convergence"};
  footer["status"] = status[o.code];
  footer["exit_code"] = o.code;
  footer["reason"] = o.code == 0 ? "" : o.reason;
  out << footer.dump() << '\n';
  return o.code;
}

}  // namespace ldshift::app
