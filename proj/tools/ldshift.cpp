#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ldshift_app.hpp"

namespace {

void add_common(CLI::App* sub, std::string& config, ldshift::app::Flags& f) {
  sub->add_option("--config", config, "INI configuration file");
  sub->add_option("--out", f.out, "CSV output path (default: stdout)");
  sub->add_option("--alpha-min", f.alpha_min);
  sub->add_option("--alpha-max", f.alpha_max);
  sub->add_option("--alpha-step", f.alpha_step);
  sub->add_option("--t", f.t, "word length");
  sub->add_option("--t-max", f.t_max);
  sub->add_option("--tau", f.tau, "insert length");
  sub->add_option("--v-max", f.v_max);
  sub->add_option("--n", f.n, "block length for psi-check");
  sub->add_option("--example", f.example, "renewal preset 1..6")->check(CLI::Range(1, 6));
  sub->add_option("--seed", f.seed);
  sub->add_option("--samples", f.samples);
  sub->add_option("--threads", f.threads, "worker threads (default: all cores)");
  sub->add_option("--tol", f.tol, "override every contract tolerance");
  sub->add_option("--kind", f.kind, "decoupling kind: sld, ud or ssd");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-time large-deviation quantities for shift-invariant measures"};
  app.require_subcommand(1);
  std::string config;
  ldshift::app::Flags flags;
  for (const auto& name : ldshift::app::subcommands()) add_common(app.add_subcommand(name), config, flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  std::optional<std::string> text;
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) {
      std::cerr << "cannot read config '" << config << "'\n";
      return 1;
    }
    std::ostringstream s;
    s << in.rdbuf();
    text = s.str();
  }
  return ldshift::app::run(app.get_subcommands().front()->get_name(), text, flags, std::cout);
}
