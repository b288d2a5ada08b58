#ifndef DOSEBOUND_PIPELINE_HPP_
#define DOSEBOUND_PIPELINE_HPP_

// Fold plan -> nuisances -> pseudo-outcomes -> sieve regression.

#include "dosebound/config.hpp"
#include "dosebound/nuisance.hpp"
#include "dosebound/pseudo_outcome.hpp"
#include "dosebound/sieve.hpp"

#include <vector>

namespace dosebound {

struct PipelineResult {
  BoundCurve curve;
  std::vector<BoundCurve> per_triple;
  std::vector<PseudoOutcomeSet> pseudo;  // on the original outcome scale
  double basis_condition = 0.0;
};

/// Lower bounds are estimated directly. Upper bounds run the lower-bound
/// pipeline on negated outcomes and negate the result.
PipelineResult estimate_bound_curve(const Dataset& ds, const RunConfig& cfg,
                                    const BundleFactory& factory = builtin_factory());

}  // namespace dosebound

#endif  // DOSEBOUND_PIPELINE_HPP_
