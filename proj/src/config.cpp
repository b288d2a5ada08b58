#include "dosebound/config.hpp"

#include <array>
#include <fstream>

namespace dosebound {

using nlohmann::json;

void LearnerSpec::validate() const {
  if (bins < 4) throw ConfigError("learner.bins must be >= 4");
  if (x_degree < 0 || t_degree < 0) throw ConfigError("learner degrees must be >= 0");
  if (!(ridge >= 0.0)) throw ConfigError("learner.ridge must be >= 0");
  if (tau_points < 20) throw ConfigError("learner.tau_points must be >= 20");
  if (!(tau_lo > 0.0 && tau_lo < tau_hi && tau_hi < 1.0)) throw ConfigError("tau grid must lie inside (0, 1)");
  if (max_iter < 1) throw ConfigError("learner.max_iter must be >= 1");
  if (cdf_points < 8) throw ConfigError("learner.cdf_points must be >= 8");
}

std::vector<double> LearnerSpec::tau_grid() const {
  std::vector<double> g(static_cast<std::size_t>(tau_points));
  for (int k = 0; k < tau_points; ++k) g[static_cast<std::size_t>(k)] = tau_lo + (tau_hi - tau_lo) * k / (tau_points - 1);
  return g;
}

double RunConfig::floor_for(const ExposureDomain& d) const {
  return density_floor > 0.0 ? density_floor : 0.05 / d.width();
}

void RunConfig::validate() const {
  if (quadrature_nodes < 8) throw ConfigError("quadrature_nodes must be >= 8");
  if (density_floor < 0.0) throw ConfigError("density_floor must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (folds < 3) throw ConfigError("folds must be >= 3");
  if (allocation != "equal" && allocation != "half") throw ConfigError("allocation must be 'equal' or 'half'");
  if (allocation == "half" && cross_fit) throw ConfigError("the half allocation is a single split; disable cross_fit");
  if (basis.J < 1) throw ConfigError("basis.J must be >= 1");
  if (grid.empty()) throw ConfigError("grid must not be empty");
  learner.validate();
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  if (j.contains("model")) cfg.model = parse_model(j.at("model").get<std::string>());
  if (j.contains("side")) cfg.side = parse_side(j.at("side").get<std::string>());
  if (j.contains("sensitivity")) {
    const auto& s = j.at("sensitivity");
    read(s, "family", cfg.sensitivity.family);
    read(s, "params", cfg.sensitivity.params);
  }
  if (j.contains("basis")) {
    read(j.at("basis"), "kind", cfg.basis.kind);
    read(j.at("basis"), "J", cfg.basis.J);
  }
  read(j, "quadrature_nodes", cfg.quadrature_nodes);
  read(j, "density_floor", cfg.density_floor);
  read(j, "seed", cfg.seed);
  read(j, "alpha", cfg.alpha);
  read(j, "folds", cfg.folds);
  read(j, "cross_fit", cfg.cross_fit);
  read(j, "nested_split", cfg.nested_split);
  read(j, "allocation", cfg.allocation);
  read(j, "grid", cfg.grid);
  if (j.contains("domain")) {
    const auto& d = j.at("domain");
    cfg.domain = ExposureDomain::make(d.at("lo").get<double>(), d.at("hi").get<double>());
  }
  if (j.contains("learner")) {
    const auto& l = j.at("learner");
    auto& ls = cfg.learner;
    read(l, "bins", ls.bins);
    read(l, "x_degree", ls.x_degree);
    read(l, "t_degree", ls.t_degree);
    read(l, "ridge", ls.ridge);
    read(l, "tau_points", ls.tau_points);
    read(l, "tau_lo", ls.tau_lo);
    read(l, "tau_hi", ls.tau_hi);
    read(l, "max_iter", ls.max_iter);
    read(l, "cdf_points", ls.cdf_points);
  }
  parse_family(cfg.sensitivity.family);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  json j;
  j["model"] = to_string(cfg.model);
  j["side"] = to_string(cfg.side);
  j["sensitivity"] = {{"family", cfg.sensitivity.family}, {"params", cfg.sensitivity.params}};
  j["basis"] = {{"kind", cfg.basis.kind}, {"J", cfg.basis.J}};
  j["quadrature_nodes"] = cfg.quadrature_nodes;
  j["density_floor"] = cfg.density_floor;
  j["seed"] = cfg.seed;
  j["alpha"] = cfg.alpha;
  j["folds"] = cfg.folds;
  j["cross_fit"] = cfg.cross_fit;
  j["nested_split"] = cfg.nested_split;
  j["allocation"] = cfg.allocation;
  j["grid"] = cfg.grid;
  if (cfg.domain) j["domain"] = {{"lo", cfg.domain->lo}, {"hi", cfg.domain->hi}};
  const auto& l = cfg.learner;
  j["learner"] = {{"bins", l.bins},         {"x_degree", l.x_degree},     {"t_degree", l.t_degree},
                  {"ridge", l.ridge},       {"tau_points", l.tau_points}, {"tau_lo", l.tau_lo},
                  {"tau_hi", l.tau_hi},     {"max_iter", l.max_iter},     {"cdf_points", l.cdf_points}};
  return j;
}

FoldPlan plan_for(const RunConfig& cfg, Index n) {
  if (cfg.allocation == "half") {
    const std::array<double, 3> shares{1.0, 1.0, 2.0};
    return make_weighted_plan(n, shares, cfg.seed);
  }
  return make_fold_plan(n, cfg.folds, cfg.seed, cfg.cross_fit);
}

}  // namespace dosebound
