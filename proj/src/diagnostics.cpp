#include "blockpde/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blockpde/errors.hpp"

namespace blockpde {

namespace {
constexpr double kDegenerateNorm = 1e-14;
constexpr double kDegenerateEnergy = 1e-30;
}  // namespace

double weighted_norm(const QuadratureGrid& grid, const Vec& field) {
  double s = 0.0;
  for (int q = 0; q < grid.Q(); ++q) s += grid.w[q] * field[q] * field[q];
  return std::sqrt(s);
}

FlaggedValue weighted_rel_error(const Vec& pred, const Vec& ref,
                                const QuadratureGrid& grid) {
  require(pred.size() == ref.size() &&
              static_cast<int>(pred.size()) == grid.Q(),
          "weighted_rel_error: node count mismatch");
  const double den = weighted_norm(grid, ref);
  if (den < kDegenerateNorm) return {0.0, true};
  double num = 0.0;
  for (int q = 0; q < grid.Q(); ++q)
    num += grid.w[q] * (pred[q] - ref[q]) * (pred[q] - ref[q]);
  return {std::sqrt(num) / den, false};
}

Vec pointwise_profile(const Vec& pred, const Vec& ref,
                      const QuadratureGrid& grid, FlaggedValue* flag) {
  require(pred.size() == ref.size() &&
              static_cast<int>(pred.size()) == grid.Q(),
          "pointwise_profile: node count mismatch");
  const double den = weighted_norm(grid, ref);
  if (den < kDegenerateNorm) {
    if (flag) *flag = {0.0, true};
    return Vec(pred.size(), 0.0);
  }
  if (flag) *flag = {den, false};
  Vec e(pred.size());
  for (size_t q = 0; q < pred.size(); ++q) e[q] = (pred[q] - ref[q]) / den;
  return e;
}

EnergySeries energy_series(const RolloutRecord& rec, const Baseplate& bp,
                           const LiftingField& lift) {
  EnergySeries out;
  out.t = rec.times;
  out.E.resize(rec.states.size());
  for (size_t i = 0; i < rec.states.size(); ++i) {
    const Vec u = bp.reconstruct(rec.states[i], lift, rec.times[i]);
    const double n = weighted_norm(bp.grid, u);
    out.E[i] = 0.5 * n * n;
  }
  return out;
}

EnergyRelError energy_rel_error(const RolloutRecord& pred,
                                const RolloutRecord& ref, const Baseplate& bp,
                                const LiftingField& lift) {
  require(pred.times.size() == ref.times.size(),
          "energy_rel_error: records do not share times");
  for (size_t i = 0; i < pred.times.size(); ++i)
    require(pred.times[i] == ref.times[i],
            "energy_rel_error: records do not share times");
  const EnergySeries ep = energy_series(pred, bp, lift);
  const EnergySeries er = energy_series(ref, bp, lift);
  EnergyRelError out;
  out.t = pred.times;
  out.relE.resize(ep.E.size());
  for (size_t i = 0; i < ep.E.size(); ++i) {
    if (std::abs(er.E[i]) < kDegenerateEnergy)
      out.relE[i] = {0.0, true};
    else
      out.relE[i] = {std::abs(ep.E[i] - er.E[i]) / std::abs(er.E[i]), false};
  }
  return out;
}

std::vector<DriftEntry> substep_drift_report(const RolloutRecord& rec,
                                             const BlockSet& blocks) {
  std::vector<DriftEntry> out;
  out.reserve(rec.structure_log.size());
  for (const auto& log : rec.structure_log) {
    const Block& b = blocks.blocks[log.block_index];
    out.push_back({b.name, b.kind, log.step, log.substep,
                   log.value_after - log.value_before});
  }
  return out;
}

ErrorReport build_error_report(const RolloutRecord& pred,
                               const RolloutRecord& ref, const Baseplate& bp,
                               const LiftingField& lift) {
  require(pred.times.size() == ref.times.size(),
          "build_error_report: records do not share times");
  ErrorReport rep;
  rep.times = pred.times;
  rep.rel.resize(pred.times.size());
  double sum = 0.0;
  int counted = 0;
  for (size_t i = 0; i < pred.times.size(); ++i) {
    const Vec up = bp.reconstruct(pred.states[i], lift, pred.times[i]);
    const Vec ur = bp.reconstruct(ref.states[i], lift, ref.times[i]);
    rep.rel[i] = weighted_rel_error(up, ur, bp.grid);
    if (!rep.rel[i].degenerate) {
      rep.max_rel = std::max(rep.max_rel, rep.rel[i].value);
      sum += rep.rel[i].value;
      counted++;
    }
  }
  rep.mean_rel = counted ? sum / counted : 0.0;
  rep.final_rel = rep.rel.back().value;
  const EnergyRelError e = energy_rel_error(pred, ref, bp, lift);
  rep.relE = e.relE;
  return rep;
}

void error_report_to_csv(const ErrorReport& rep, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "error_report_to_csv: cannot open " + path);
  f << "t,rel,rel_degenerate,relE,relE_degenerate\n";
  char buf[128];
  for (size_t i = 0; i < rep.times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%.17g,%d\n", rep.times[i],
                  rep.rel[i].value, rep.rel[i].degenerate ? 1 : 0,
                  rep.relE[i].value, rep.relE[i].degenerate ? 1 : 0);
    f << buf;
  }
}

std::string error_report_summary_json(const ErrorReport& rep) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"max_rel\":%.17g,\"mean_rel\":%.17g,\"final_rel\":%.17g}",
                rep.max_rel, rep.mean_rel, rep.final_rel);
  return buf;
}

ConvergenceOrder convergence_order(double e1, double e2, double e3) {
  require(e1 >= 0.0 && e2 >= 0.0 && e3 >= 0.0,
          "convergence_order: errors must be non-negative");
  ConvergenceOrder out;
  if (e2 <= 0.0 || e3 <= 0.0) {
    out.degenerate = true;
    return out;
  }
  out.first = std::log2(e1 / e2);
  out.second = std::log2(e2 / e3);
  out.mean = 0.5 * (out.first + out.second);
  return out;
}

Theorem1Table theorem1_decomposition(const Baseplate& bp, const BlockSet& blocks,
                                     const std::vector<std::string>& order,
                                     const Vec& a0, double T,
                                     const std::vector<double>& dt_list,
                                     const std::vector<double>& eps_list,
                                     const Vec& direction,
                                     const LiftingField& lift) {
  require(!dt_list.empty(), "theorem1_decomposition: empty dt list");
  require(static_cast<int>(direction.size()) == bp.K,
          "theorem1_decomposition: direction size mismatch");

  const auto schedule = build_strang_schedule(blocks, bp, order);

  auto run_final = [&](const BlockSet& bs, double dt) {
    const int n = static_cast<int>(std::llround(T / dt));
    require(std::abs(n * dt - T) < 1e-12 * std::max(1.0, T),
            "theorem1_decomposition: T is not a multiple of dt");
    const auto rec =
        rollout(bp, schedule, bs, a0, dt, n, lift, {1 << 30, false});
    return bp.reconstruct(rec.final_state(), lift, T);
  };

  const double dt_min = *std::min_element(dt_list.begin(), dt_list.end());
  const Vec u_ref = run_final(blocks, dt_min / 64.0);

  Theorem1Table table;
  std::vector<double> eps_all{0.0};
  eps_all.insert(eps_all.end(), eps_list.begin(), eps_list.end());

  for (double dt : dt_list) {
    for (double eps : eps_all) {
      BlockSet perturbed = blocks;
      if (eps != 0.0) {
        Vec shift(bp.K);
        for (int k = 0; k < bp.K; ++k) shift[k] = eps * direction[k];
        for (auto& b : perturbed.blocks)
          if (b.kind != BlockKind::auxiliary) b.shift = shift;
      }
      const Vec u = run_final(perturbed, dt);
      const auto rel = weighted_rel_error(u, u_ref, bp.grid);
      table.rows.push_back({dt, eps, rel.value});
    }
  }

  // least-squares slope of log err vs log eps at the smallest dt
  if (eps_list.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : table.rows) {
      if (r.dt != dt_min || r.eps == 0.0 || r.final_rel_error <= 0.0) continue;
      const double x = std::log(r.eps), y = std::log(r.final_rel_error);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      n++;
    }
    if (n >= 2) table.slope_eps = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }

  if (dt_list.size() >= 3) {
    std::vector<double> errs;
    for (double dt : dt_list)
      for (const auto& r : table.rows)
        if (r.dt == dt && r.eps == 0.0) errs.push_back(r.final_rel_error);
    std::sort(errs.begin(), errs.end(), std::greater<double>());
    table.order_dt = convergence_order(errs[0], errs[1], errs[2]);
  }
  return table;
}

void theorem1_to_csv(const Theorem1Table& t, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "theorem1_to_csv: cannot open " + path);
  f << "dt,eps,final_rel_error\n";
  char buf[128];
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", r.dt, r.eps,
                  r.final_rel_error);
    f << buf;
  }
  std::snprintf(buf, sizeof(buf), "# slope_eps,%.17g\n# order_dt_mean,%.17g\n",
                t.slope_eps, t.order_dt.mean);
  f << buf;
}

}  // namespace blockpde
