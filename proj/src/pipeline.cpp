#include "dosebound/pipeline.hpp"

namespace dosebound {

PipelineResult estimate_bound_curve(const Dataset& ds, const RunConfig& cfg, const BundleFactory& factory) {
  cfg.validate();
  const bool upper = cfg.side == Side::upper;
  const Dataset work = upper ? negate_outcomes(ds) : ds;
  const auto plan = plan_for(cfg, work.size());
  const auto basis = make_basis(cfg.basis, work.domain());

  PipelineResult res;
  res.pseudo = build_all(work, plan, cfg, factory, upper);
  res.basis_condition = basis.gram_condition();
  res.curve = fit_bound_curve(res.pseudo, basis, cfg.grid, cfg.alpha, &res.per_triple);
  if (upper) {
    res.curve = negate_curve(res.curve);
    for (auto& c : res.per_triple) c = negate_curve(c);
    for (auto& set : res.pseudo) {
      for (auto& s : set.samples) s.y_hat = -s.y_hat;
    }
  }
  return res;
}

}  // namespace dosebound
