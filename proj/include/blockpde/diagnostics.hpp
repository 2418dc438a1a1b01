#pragma once

#include <string>

#include "blockpde/rollout.hpp"

namespace blockpde {

// Relative errors are flagged, never NaN-propagated, when the reference
// norm is degenerate.
struct FlaggedValue {
  double value = 0.0;
  bool degenerate = false;
};

double weighted_norm(const QuadratureGrid& grid, const Vec& field);

// ||p - t||_{w,2} / ||t||_{w,2} on common nodes
FlaggedValue weighted_rel_error(const Vec& pred, const Vec& ref,
                                const QuadratureGrid& grid);

// e(x_q) = (p_q - t_q) / ||t||_{w,2}
Vec pointwise_profile(const Vec& pred, const Vec& ref,
                      const QuadratureGrid& grid, FlaggedValue* flag = nullptr);

// E(t_n) = 1/2 ||u(t_n)||_{w,2}^2 on reconstructed fields
struct EnergySeries {
  Vec t;
  Vec E;
};
EnergySeries energy_series(const RolloutRecord& rec, const Baseplate& bp,
                           const LiftingField& lift);

struct EnergyRelError {
  Vec t;
  std::vector<FlaggedValue> relE;
};
EnergyRelError energy_rel_error(const RolloutRecord& pred,
                                const RolloutRecord& ref, const Baseplate& bp,
                                const LiftingField& lift);

// signed generator change across each logged substep
struct DriftEntry {
  std::string block;
  BlockKind kind;
  int step;
  int substep;
  double delta;
};
std::vector<DriftEntry> substep_drift_report(const RolloutRecord& rec,
                                             const BlockSet& blocks);

// per-time rollout comparison with summary statistics
struct ErrorReport {
  Vec times;
  std::vector<FlaggedValue> rel;
  std::vector<FlaggedValue> relE;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  double final_rel = 0.0;
};
ErrorReport build_error_report(const RolloutRecord& pred,
                               const RolloutRecord& ref, const Baseplate& bp,
                               const LiftingField& lift);
void error_report_to_csv(const ErrorReport& rep, const std::string& path);
std::string error_report_summary_json(const ErrorReport& rep);

// estimated orders from errors at dt, dt/2, dt/4
struct ConvergenceOrder {
  double first = 0.0;
  double second = 0.0;
  double mean = 0.0;
  bool degenerate = false;
};
ConvergenceOrder convergence_order(double e1, double e2, double e3);

// Perturbation study: every evolution block is shifted by eps*v and the
// final-time error against an unperturbed fine-step reference is recorded
// per (dt, eps). Slopes separate the mismatch term (linear in eps) from the
// splitting term (quadratic in dt).
struct Theorem1Row {
  double dt;
  double eps;
  double final_rel_error;
};
struct Theorem1Table {
  std::vector<Theorem1Row> rows;
  double slope_eps = 0.0;        // fitted at the smallest dt
  ConvergenceOrder order_dt;     // from the eps = 0 rows
};
Theorem1Table theorem1_decomposition(const Baseplate& bp, const BlockSet& blocks,
                                     const std::vector<std::string>& order,
                                     const Vec& a0, double T,
                                     const std::vector<double>& dt_list,
                                     const std::vector<double>& eps_list,
                                     const Vec& direction,
                                     const LiftingField& lift);
void theorem1_to_csv(const Theorem1Table& t, const std::string& path);

}  // namespace blockpde
