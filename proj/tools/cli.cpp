#include "cli.hpp"

#include "dosebound/config.hpp"
#include "dosebound/oracle.hpp"
#include "dosebound/pipeline.hpp"
#include "dosebound/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

namespace dosebound::cli {

namespace fs = std::filesystem;

double parse_param(const std::string& text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(static_cast<char>(std::tolower(c)));
  }
  auto strip = [](std::string v) {
    if (v.size() >= 2 && v.front() == '(' && v.back() == ')') v = v.substr(1, v.size() - 2);
    return v;
  };
  auto number = [&](const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse parameter '" + text + "'");
    }
    if (used != v.size() || !std::isfinite(d)) throw ConfigError("cannot parse parameter '" + text + "'");
    return d;
  };
  if (s.rfind("log", 0) == 0) return std::log(number(strip(s.substr(3))));
  if (s.rfind("sqrt", 0) == 0) return std::sqrt(number(strip(s.substr(4))));
  return number(s);
}

namespace {

struct Io {
  std::ostream& out;
  std::ostream& err;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    v.push_back(parse_param(item));
  }
  if (v.empty()) throw ConfigError("empty list '" + text + "'");
  return v;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

std::optional<int> env_threads() {
  const char* v = std::getenv("DOSEBOUND_THREADS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    const int n = std::stoi(v);
    if (n < 1) throw ConfigError("DOSEBOUND_THREADS must be >= 1");
    return n;
  } catch (const std::logic_error&) {
    throw ConfigError(std::string("DOSEBOUND_THREADS is not an integer: ") + v);
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::optional<int> reps;
  std::optional<long long> n;
  std::string config;
  std::string out;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::string dump_data;
  bool gnuplot = false;
  bool quiet = false;
};

void write_simulation_plot(const ExperimentReport& r, const fs::path& dir) {
  std::ofstream csv(dir / "summary_curves.csv");
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);
  csv << "t,truth,nuc_mean,nuc_lo,nuc_hi";
  if (r.bounds) csv << ",rosenbaum_lower,rosenbaum_upper,marginal_lower,marginal_upper";
  csv << '\n';
  for (std::size_t k = 0; k < r.grid.size(); ++k) {
    csv << r.grid[k] << ',' << r.truth[k] << ',' << r.nuc.mean[k] << ',' << r.nuc.mean[k] - 1.96 * r.nuc.sd[k] << ','
        << r.nuc.mean[k] + 1.96 * r.nuc.sd[k];
    if (r.bounds) {
      csv << ',' << r.rosenbaum_lower.mean[k] << ',' << r.rosenbaum_upper.mean[k] << ',' << r.marginal_lower.mean[k]
          << ',' << r.marginal_upper.mean[k];
    }
    csv << '\n';
  }
  std::ofstream gp(dir / "plot.gp");
  gp << "set datafile separator ','\n"
        "set key autotitle columnhead left top\n"
        "set xlabel 't'\nset ylabel 'E[Y(t)]'\n"
        "set terminal pngcairo size 900,600\nset output 'curves.png'\n"
        "plot 'summary_curves.csv' using 1:4:5 with filledcurves fs transparent solid 0.2 title 'NUC +-1.96 sd', \\\n"
        "     '' using 1:2 with lines lw 2 title 'truth', \\\n"
        "     '' using 1:3 with linespoints title 'NUC mean'";
  if (r.bounds) {
    gp << ", \\\n     '' using 1:6 with lines dt 2 title 'Rosenbaum lower', \\\n"
          "     '' using 1:7 with lines dt 2 title 'Rosenbaum upper', \\\n"
          "     '' using 1:8 with lines dt 3 title 'marginal lower', \\\n"
          "     '' using 1:9 with lines dt 3 title 'marginal upper'";
  }
  gp << '\n';
}

int cmd_simulate(const SimulateArgs& a, Io io) {
  SimulationConfig cfg = load_simulation_config(a.config);
  if (a.reps) cfg.reps = *a.reps;
  if (a.n) cfg.n = static_cast<Index>(*a.n);
  if (a.seed) cfg.run.seed = *a.seed;
  if (auto e = env_threads()) cfg.threads = *e;
  if (a.threads) cfg.threads = *a.threads;
  if (cfg.reps < 10) throw ConfigError("--reps must be >= 10");
  if (cfg.n < 100) throw ConfigError("--n must be >= 100");
  if (cfg.threads < 1) throw ConfigError("--threads must be >= 1");
  const fs::path dir(a.out);
  ensure_dir(dir);

  if (!a.dump_data.empty()) {
    // Replication 0 exactly as the experiment sees it, plus the NUC config
    // that reproduces its curve through `analyze`.
    const std::uint64_t seed = rep_seed(cfg.run.seed, 0);
    const fs::path dump(a.dump_data);
    ensure_dir(dump);
    write_dataset_csv(sample_dgp({cfg.n, seed}), dump / "data_rep0.csv");
    RunConfig rc = cfg.run;
    rc.seed = seed;
    rc.domain = dgp_domain();
    rc.model = Model::rosenbaum;
    rc.side = Side::lower;
    rc.sensitivity = SensitivitySpec{"constant", {1.0}};
    auto j = to_json(rc);
    j["nuisances"] = cfg.analytic_nuisances ? "analytic" : "builtin";
    write_json(j, dump / "config_rep0.json");
  }

  const int total = cfg.reps;
  int done = 0;
  const auto report = run_experiment(cfg, [&](int) {
    ++done;
    if (!a.quiet && (done % 10 == 0 || done == total)) io.err << "replication " << done << "/" << total << '\n';
  });
  write_json(report_to_json(report), dir / "report.json");
  if (!a.quiet) io.err << "finished in " << std::fixed << std::setprecision(1) << report.seconds << " s\n";
  write_curves_csv(report, dir / "curves.csv");
  write_summary(report, dir / "summary.txt");
  if (a.gnuplot) write_simulation_plot(report, dir);
  std::ifstream summary(dir / "summary.txt");
  io.out << summary.rdbuf();
  return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string data;
  std::string config;
  std::string model;
  std::string side;
  std::string grid;
  std::string out;
  std::string nuisances;
  bool pseudo = false;
  bool gnuplot = false;
};

void write_analysis_plot(const fs::path& dir) {
  std::ofstream gp(dir / "plot.gp");
  gp << "set datafile separator ','\n"
        "set key autotitle columnhead left top\n"
        "set xlabel 't'\nset ylabel 'bound'\n"
        "set terminal pngcairo size 900,600\nset output 'curve.png'\n"
        "plot 'curve.csv' using 1:4:5 with filledcurves fs transparent solid 0.2 title 'CI', \\\n"
        "     '' using 1:2 with linespoints lw 2 title 'estimate'\n";
}

int cmd_analyze(const AnalyzeArgs& a, Io io) {
  nlohmann::json j;
  {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open config " + a.config);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + a.config + " is not valid JSON: " + e.what());
    }
  }
  RunConfig cfg = parse_run_config(j);
  if (!a.model.empty()) cfg.model = parse_model(a.model);
  if (!a.side.empty()) cfg.side = parse_side(a.side);
  if (!a.grid.empty()) cfg.grid = parse_list(a.grid);
  std::string nuisances = "builtin";
  if (j.contains("nuisances")) nuisances = j.at("nuisances").get<std::string>();
  if (!a.nuisances.empty()) nuisances = a.nuisances;
  if (nuisances != "builtin" && nuisances != "analytic") throw ConfigError("nuisances must be builtin or analytic");
  cfg.validate();

  const ExposureDomain* dom = cfg.domain ? &*cfg.domain : nullptr;
  const Dataset ds = read_dataset_csv(a.data, dom);
  for (double t : cfg.grid) {
    if (!ds.domain().contains(t)) {
      throw ConfigError("grid point " + std::to_string(t) + " lies outside the exposure domain");
    }
  }
  const BundleFactory factory = nuisances == "analytic" ? analytic_factory() : builtin_factory();
  const auto res = estimate_bound_curve(ds, cfg, factory);

  const fs::path dir(a.out);
  ensure_dir(dir);
  write_curve_csv(res.curve, dir / "curve.csv");
  auto cj = curve_to_json(res.curve);
  cj["config"] = to_json(cfg);
  cj["basis_condition"] = res.basis_condition;
  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t s = 0; s < res.pseudo.size(); ++s) {
    const auto& d = res.pseudo[s].diagnostics;
    diag.push_back({{"triple", s},
                    {"rows", d.rows},
                    {"max_density_ratio", d.max_ratio},
                    {"mean_density_ratio", d.mean_ratio},
                    {"max_snap_distance", d.max_snap_distance},
                    {"mean_panels", d.mean_panels},
                    {"q_condition", res.per_triple[s].Q_hat.jacobiSvd().singularValues().maxCoeff() /
                                        res.per_triple[s].Q_hat.jacobiSvd().singularValues().minCoeff()}});
  }
  cj["diagnostics"] = diag;
  write_json(cj, dir / "curve.json");
  if (a.pseudo) write_pseudo_csv(res.pseudo, dir / "pseudo.csv");
  if (a.gnuplot) write_analysis_plot(dir);

  for (const auto& d : diag) {
    io.err << "triple " << d["triple"] << ": max density ratio " << d["max_density_ratio"].get<double>()
           << ", max snap distance " << d["max_snap_distance"].get<double>() << ", Q condition "
           << d["q_condition"].get<double>() << '\n';
  }
  io.err << "basis Gram condition " << res.basis_condition << '\n';
  io.out << std::setprecision(6) << std::fixed << "t,estimate,se,ci_lo,ci_hi\n";
  for (std::size_t k = 0; k < res.curve.grid.size(); ++k) {
    const Index i = static_cast<Index>(k);
    io.out << res.curve.grid[k] << ',' << res.curve.values[i] << ',' << res.curve.se[i] << ',' << res.curve.ci_lo[i]
           << ',' << res.curve.ci_hi[i] << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct OracleArgs {
  int instances = 1000;
  int max_support = 12;
  std::string param_range = "1,10";
  std::uint64_t seed = 0;
  int lp_checks = 50;
};

int cmd_oracle_check(const OracleArgs& a, Io io) {
  if (a.instances < 1) throw ConfigError("--instances must be >= 1");
  if (a.max_support < 1) throw ConfigError("--max-support must be >= 1");
  const auto range = parse_list(a.param_range);
  if (range.size() != 2 || !(range[0] >= 1.0 && range[0] <= range[1])) {
    throw ConfigError("--param-range must be lo,hi with 1 <= lo <= hi");
  }
  OracleSuiteOptions opts;
  opts.instances = a.instances;
  opts.max_support = a.max_support;
  opts.param_lo = range[0];
  opts.param_hi = range[1];
  opts.seed = a.seed;
  opts.lp_spot_checks = std::max(0, a.lp_checks);
  const auto rep = run_oracle_suite(opts);
  io.out << "instances               " << rep.instances << '\n'
         << "equivalence violations  " << rep.equivalence_violations << '\n'
         << "ordering violations     " << rep.ordering_violations << '\n'
         << "lp violations           " << rep.lp_violations << '\n'
         << "max abs error           " << std::scientific << std::setprecision(3) << rep.max_abs_error << '\n'
         << "seconds                 " << std::fixed << std::setprecision(3) << rep.seconds << '\n'
         << (rep.passed() ? "PASS" : "FAIL") << '\n';
  if (!rep.passed()) {
    if (rep.counterexample) io.err << "counterexample: " << *rep.counterexample << '\n';
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SensfnArgs {
  std::string family;
  std::vector<std::string> params;
  std::vector<double> eval;
  int grid = 0;
  std::string domain;
};

int cmd_sensfn(const SensfnArgs& a, Io io) {
  const Family fam = parse_family(a.family);
  if (fam == Family::generator) throw ConfigError("the generator family is only available through the library");
  std::vector<double> params;
  for (const auto& p : a.params) {
    for (double v : parse_list(p)) params.push_back(v);
  }
  ExposureDomain dom{0.0, 1.0};
  if (!a.domain.empty()) {
    const auto d = parse_list(a.domain);
    if (d.size() != 2) throw ConfigError("--domain must be lo,hi");
    dom = ExposureDomain::make(d[0], d[1]);
  } else if (fam == Family::exp_log_ratio || fam == Family::beta_odds) {
    dom = ExposureDomain{0.01, 0.99};
  }
  const auto sf = make_family(fam, params, dom);
  if (a.eval.empty() == (a.grid == 0)) throw ConfigError("give exactly one of --eval t t' or --grid N");
  io.out << std::fixed << std::setprecision(7);
  if (!a.eval.empty()) {
    if (a.eval.size() != 2) throw ConfigError("--eval takes two exposures");
    for (double t : a.eval) {
      if (!dom.contains(t)) throw ConfigError("exposure " + std::to_string(t) + " outside the domain");
    }
    io.out << sf(a.eval[0], a.eval[1]) << '\n';
    return 0;
  }
  if (a.grid < 2) throw ConfigError("--grid needs at least 2 points");
  io.out << "t,t_prime,gamma\n";
  for (int i = 0; i < a.grid; ++i) {
    const double t = dom.lo + dom.width() * i / (a.grid - 1);
    for (int k = 0; k < a.grid; ++k) {
      const double tp = dom.lo + dom.width() * k / (a.grid - 1);
      io.out << t << ',' << tp << ',' << sf(t, tp) << '\n';
    }
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Io io{out, err};
  CLI::App app{"Sensitivity bounds for continuous-exposure dose-response curves"};
  app.name("dosebound");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Monte Carlo experiment on the benchmark process");
  s->add_option("--config", sim.config, "JSON config")->required();
  s->add_option("--out", sim.out, "output directory")->required();
  s->add_option("--reps", sim.reps, "replications (>= 10)");
  s->add_option("--n", sim.n, "sample size per replication");
  s->add_option("--seed", sim.seed, "overrides the config seed");
  s->add_option("--threads", sim.threads, "worker cap (also DOSEBOUND_THREADS)");
  s->add_option("--dump-data", sim.dump_data, "directory for replication 0's dataset and NUC config");
  s->add_flag("--gnuplot", sim.gnuplot, "also write plot.gp");
  s->add_flag("--quiet", sim.quiet, "no progress lines");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Bound curve for a CSV dataset");
  z->add_option("--data", an.data, "CSV with header x1,...,xp,t,y")->required();
  z->add_option("--config", an.config, "JSON config")->required();
  z->add_option("--out", an.out, "output directory")->required();
  z->add_option("--model", an.model, "rosenbaum | marginal");
  z->add_option("--side", an.side, "lower | upper");
  z->add_option("--grid", an.grid, "comma-separated evaluation points");
  z->add_option("--nuisances", an.nuisances, "builtin | analytic");
  z->add_flag("--pseudo", an.pseudo, "also write pseudo.csv");
  z->add_flag("--gnuplot", an.gnuplot, "also write plot.gp");

  OracleArgs oa;
  auto* o = app.add_subcommand("oracle-check", "Randomized closed-form vs brute-force verification");
  o->add_option("--instances", oa.instances, "random instances");
  o->add_option("--max-support", oa.max_support, "largest support size");
  o->add_option("--param-range", oa.param_range, "lo,hi for the sensitivity value");
  o->add_option("--seed", oa.seed, "instance stream seed");
  o->add_option("--lp-checks", oa.lp_checks, "instances also solved as dense LPs");

  SensfnArgs sa;
  auto* f = app.add_subcommand("sensfn", "Evaluate a sensitivity function");
  f->add_option("--family", sa.family, "family name")->required();
  f->add_option("--params", sa.params, "parameters, e.g. log5 or 2.5")->required();
  f->add_option("--eval", sa.eval, "t t'")->expected(2);
  f->add_option("--grid", sa.grid, "N x N grid over the domain");
  f->add_option("--domain", sa.domain, "lo,hi");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*s) return cmd_simulate(sim, io);
    if (*z) return cmd_analyze(an, io);
    if (*o) return cmd_oracle_check(oa, io);
    if (*f) return cmd_sensfn(sa, io);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return 2;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace dosebound::cli
