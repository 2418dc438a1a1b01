#include "blockpde/rollout.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blockpde/errors.hpp"

namespace blockpde {

std::string integrator_name(Integrator i) {
  switch (i) {
    case Integrator::exact_diagonal: return "exact_diagonal";
    case Integrator::crank_nicolson: return "crank_nicolson";
    case Integrator::heun: return "heun";
    case Integrator::implicit_midpoint: return "implicit_midpoint";
    case Integrator::pointwise_exact: return "pointwise_exact";
  }
  return "?";
}

Integrator integrator_from_name(const std::string& s) {
  if (s == "exact_diagonal") return Integrator::exact_diagonal;
  if (s == "crank_nicolson") return Integrator::crank_nicolson;
  if (s == "heun") return Integrator::heun;
  if (s == "implicit_midpoint") return Integrator::implicit_midpoint;
  if (s == "pointwise_exact") return Integrator::pointwise_exact;
  throw ParseError("unknown integrator: " + s);
}

void StrangSchedule::validate(int n_blocks) const {
  require(!steps.empty(), "schedule: empty");
  const size_t m = steps.size();
  require(m % 2 == 1, "schedule: palindromic plans have odd length");
  for (size_t i = 0; i < m; ++i) {
    require(steps[i].block_index >= 0 && steps[i].block_index < n_blocks,
            "schedule: block index out of range");
    const Substep& a = steps[i];
    const Substep& b = steps[m - 1 - i];
    require(a.block_index == b.block_index,
            "schedule: block indices do not read the same reversed");
    require(a.subdivisions == b.subdivisions && a.integrator == b.integrator,
            "schedule: mirrored substeps must match");
    const bool pivot = (i == m / 2);
    require(a.full == pivot,
            pivot ? "schedule: interior pivot must be a full step"
                  : "schedule: flanking substeps must be half steps");
  }
}

std::string StrangSchedule::serialize(const BlockSet& bs) const {
  std::ostringstream os;
  for (size_t i = 0; i < steps.size(); ++i) {
    if (i) os << "|";
    const Substep& s = steps[i];
    os << bs.blocks[s.block_index].name << ":" << (s.full ? "full" : "half")
       << ":" << integrator_name(s.integrator) << ":" << s.subdivisions;
  }
  return os.str();
}

Integrator default_integrator(const Block& b, const Baseplate& bp) {
  if (b.kind == BlockKind::H) return Integrator::implicit_midpoint;
  if (b.field_diagonal(bp)) return Integrator::exact_diagonal;
  if (b.linear && !b.time_dependent) return Integrator::crank_nicolson;
  return Integrator::heun;
}

StrangSchedule build_strang_schedule(const BlockSet& bs, const Baseplate& bp,
                                     const std::vector<std::string>& order) {
  require(!order.empty(), "build_strang_schedule: empty block order");
  std::vector<int> idx;
  for (const auto& name : order) {
    int found = -1;
    for (size_t i = 0; i < bs.blocks.size(); ++i)
      if (bs.blocks[i].name == name) found = static_cast<int>(i);
    require(found >= 0, "build_strang_schedule: unknown block '" + name + "'");
    require(bs.blocks[found].kind != BlockKind::auxiliary,
            "build_strang_schedule: auxiliary blocks cannot be scheduled");
    idx.push_back(found);
  }
  StrangSchedule sch;
  const int n = static_cast<int>(idx.size());
  for (int i = 0; i < n - 1; ++i)
    sch.steps.push_back({idx[i], false,
                         default_integrator(bs.blocks[idx[i]], bp), 1});
  sch.steps.push_back({idx[n - 1], true,
                       default_integrator(bs.blocks[idx[n - 1]], bp), 1});
  for (int i = n - 2; i >= 0; --i)
    sch.steps.push_back({idx[i], false,
                         default_integrator(bs.blocks[idx[i]], bp), 1});
  sch.validate(static_cast<int>(bs.blocks.size()));
  return sch;
}

Vec substep_exact_diagonal(const Block& b, const Baseplate& bp, const Vec& a,
                           double tau) {
  const auto d = b.field_diagonal(bp);
  require(d.has_value(), "substep_exact_diagonal: block field is not diagonal");
  Vec out(a.size());
  for (size_t k = 0; k < a.size(); ++k) {
    const double ed = std::exp((*d)[k] * tau);
    out[k] = ed * a[k];
    if (!b.shift.empty()) {
      const double dk = (*d)[k];
      // integral of exp(d (tau - s)) shift ds
      out[k] += dk == 0.0 ? tau * b.shift[k] : std::expm1(dk * tau) / dk * b.shift[k];
    }
  }
  return out;
}

Vec substep_heun(const std::function<Vec(const Vec&, double)>& field,
                 const Vec& a, double t0, double tau, int subdivisions) {
  require(subdivisions >= 1, "substep_heun: subdivisions must be >= 1");
  const double h = tau / subdivisions;
  Vec cur = a;
  double t = t0;
  for (int s = 0; s < subdivisions; ++s) {
    const Vec k1 = field(cur, t);
    Vec pred(cur.size());
    for (size_t i = 0; i < cur.size(); ++i) pred[i] = cur[i] + h * k1[i];
    const Vec k2 = field(pred, t + h);
    for (size_t i = 0; i < cur.size(); ++i)
      cur[i] += 0.5 * h * (k1[i] + k2[i]);
    if (!all_finite(cur))
      throw NumericError("substep_heun: non-finite state at subdivision " +
                         std::to_string(s));
    t += h;
  }
  return cur;
}

Vec substep_implicit_midpoint(const std::function<Vec(const Vec&, double)>& field,
                              const Vec& a, double t0, double tau, double tol,
                              int max_iters) {
  const double tmid = t0 + 0.5 * tau;
  Vec x = a;
  {
    const Vec f0 = field(a, tmid);
    for (size_t i = 0; i < x.size(); ++i) x[i] = a[i] + tau * f0[i];
  }
  Vec mid(a.size());
  for (int it = 0; it < max_iters; ++it) {
    for (size_t i = 0; i < a.size(); ++i) mid[i] = 0.5 * (a[i] + x[i]);
    const Vec f = field(mid, tmid);
    double diff = 0.0, scale = 1.0;
    Vec next(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
      next[i] = a[i] + tau * f[i];
      diff = std::max(diff, std::abs(next[i] - x[i]));
      scale = std::max(scale, std::abs(next[i]));
    }
    x.swap(next);
    if (!all_finite(x))
      throw NumericError("substep_implicit_midpoint: non-finite iterate");
    if (diff <= tol * scale) return x;
  }
  throw NumericError(
      "substep_implicit_midpoint: no convergence (consider a smaller step)");
}

struct CrankNicolsonCache::Factored {
  double tau = 0.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;   // I - tau/2 A
  Eigen::MatrixXd rhs;                       // I + tau/2 A
  Eigen::VectorXd c;                         // constant field part
};

Vec CrankNicolsonCache::advance(const Block& b, const Baseplate& bp,
                                const LiftingField& lift, int substep_index,
                                const Vec& a, double tau) {
  require(b.linear && !b.time_dependent,
          "crank_nicolson: autonomous linear blocks only");
  if (cache_.size() <= static_cast<size_t>(substep_index))
    cache_.resize(substep_index + 1);
  auto& slot = cache_[substep_index];
  if (!slot || slot->tau != tau) {
    const int K = bp.K;
    slot = std::make_shared<Factored>();
    slot->tau = tau;
    const Vec f0 = b.eval(bp, Vec(K, 0.0), lift, 0.0);
    slot->c = Eigen::Map<const Eigen::VectorXd>(f0.data(), K);
    Eigen::MatrixXd A(K, K);
    Vec e(K, 0.0);
    for (int k = 0; k < K; ++k) {
      e[k] = 1.0;
      const Vec col = b.eval(bp, e, lift, 0.0);
      for (int i = 0; i < K; ++i) A(i, k) = col[i] - f0[i];
      e[k] = 0.0;
    }
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(K, K) - 0.5 * tau * A;
    slot->rhs = Eigen::MatrixXd::Identity(K, K) + 0.5 * tau * A;
    slot->lu.compute(lhs);
  }
  Eigen::Map<const Eigen::VectorXd> av(a.data(), a.size());
  Eigen::VectorXd rhs = slot->rhs * av + tau * slot->c;
  Eigen::VectorXd out = slot->lu.solve(rhs);
  if (!out.allFinite()) throw NumericError("crank_nicolson: singular system");
  return Vec(out.data(), out.data() + out.size());
}

RolloutRecord rollout(const Baseplate& bp, const StrangSchedule& schedule,
                      const BlockSet& blocks, const Vec& a0, double dt,
                      int n_steps, const LiftingField& lift,
                      const RolloutOptions& options) {
  require(dt > 0.0, "rollout: dt must be positive");
  require(n_steps >= 0, "rollout: n_steps must be non-negative");
  require(static_cast<int>(a0.size()) == bp.K, "rollout: state size mismatch");
  schedule.validate(static_cast<int>(blocks.blocks.size()));

  const auto t_start = std::chrono::steady_clock::now();

  RolloutRecord rec;
  rec.dt = dt;
  rec.n_steps = n_steps;
  rec.times.push_back(0.0);
  rec.stored_steps.push_back(0);
  rec.states.push_back(a0);

  CrankNicolsonCache cn;
  Vec a = a0;
  std::vector<double> clock(blocks.blocks.size(), 0.0);

  for (int step = 0; step < n_steps; ++step) {
    const double t_n = step * dt;
    for (auto& c : clock) c = t_n;

    for (size_t si = 0; si < schedule.steps.size(); ++si) {
      const Substep& s = schedule.steps[si];
      const Block& b = blocks.blocks[s.block_index];
      const double tau = s.full ? dt : 0.5 * dt;
      const double t_loc = clock[s.block_index];

      const bool log = options.log_structure && b.generator &&
                       (b.kind == BlockKind::E || b.kind == BlockKind::H);
      double before = 0.0;
      if (log) before = b.generator_value(bp, a, lift, t_loc);

      auto field = [&b, &bp, &lift](const Vec& x, double t) {
        return b.eval(bp, x, lift, t);
      };

      Vec next;
      try {
        switch (s.integrator) {
          case Integrator::exact_diagonal:
            next = substep_exact_diagonal(b, bp, a, tau);
            break;
          case Integrator::crank_nicolson:
            next = cn.advance(b, bp, lift, static_cast<int>(si), a, tau);
            break;
          case Integrator::heun:
            next = substep_heun(field, a, t_loc, tau, s.subdivisions);
            break;
          case Integrator::implicit_midpoint:
            next = substep_implicit_midpoint(field, a, t_loc, tau,
                                             options.midpoint_tol,
                                             options.midpoint_max_iters);
            break;
          case Integrator::pointwise_exact: {
            const Vec f = b.eval(bp, a, lift, t_loc + 0.5 * tau);
            next.resize(a.size());
            for (size_t i = 0; i < a.size(); ++i) next[i] = a[i] + tau * f[i];
            break;
          }
        }
      } catch (const NumericError& e) {
        throw NumericError("rollout: step " + std::to_string(step) +
                           ", substep " + std::to_string(si) + " (" + b.name +
                           "): " + e.what());
      }
      a.swap(next);
      clock[s.block_index] += tau;

      if (log) {
        const double after = b.generator_value(bp, a, lift, clock[s.block_index]);
        rec.structure_log.push_back({step, static_cast<int>(si), s.block_index,
                                     before, after});
      }
    }

    if (options.observer) options.observer(step + 1, a);
    const int n = step + 1;
    if (n % options.store_stride == 0 || n == n_steps) {
      rec.times.push_back(n * dt);
      rec.stored_steps.push_back(n);
      rec.states.push_back(a);
    }
  }

  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return rec;
}

void record_to_csv(const RolloutRecord& rec, const Baseplate& bp,
                   const LiftingField& lift, const std::string& path,
                   bool reconstructed) {
  std::ofstream f(path);
  require(f.good(), "record_to_csv: cannot open " + path);
  const int n_cols = reconstructed ? bp.grid.Q() : bp.K;
  f << "t";
  for (int k = 0; k < n_cols; ++k)
    f << "," << (reconstructed ? "u" : "a") << k;
  f << "\n";
  char buf[32];
  for (size_t i = 0; i < rec.states.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", rec.times[i]);
    f << buf;
    const Vec row = reconstructed
                        ? bp.reconstruct(rec.states[i], lift, rec.times[i])
                        : rec.states[i];
    for (double v : row) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      f << "," << buf;
    }
    f << "\n";
  }
}

}  // namespace blockpde
