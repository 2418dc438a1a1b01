#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "blockpde/blocks.hpp"

namespace blockpde {

enum class Integrator {
  exact_diagonal,
  crank_nicolson,
  heun,
  implicit_midpoint,
  pointwise_exact,
};

std::string integrator_name(Integrator i);
Integrator integrator_from_name(const std::string& s);

struct Substep {
  int block_index = 0;
  bool full = false;  // half step otherwise
  Integrator integrator = Integrator::heun;
  int subdivisions = 1;
};

// Palindromic substep plan: S_1(dt/2) ... S_N(dt) ... S_1(dt/2).
struct StrangSchedule {
  std::vector<Substep> steps;

  void validate(int n_blocks) const;
  std::string serialize(const BlockSet& bs) const;
};

// Integrator assignment policy: H-blocks get implicit midpoint,
// diagonal-linear blocks the exact subflow, other linear blocks
// Crank-Nicolson, nonlinear fields Heun.
Integrator default_integrator(const Block& b, const Baseplate& bp);

// Build the palindrome from an ordered block-name list (last name is the
// full-step pivot).
StrangSchedule build_strang_schedule(const BlockSet& bs, const Baseplate& bp,
                                     const std::vector<std::string>& order);

struct SubstepLog {
  int step;
  int substep;
  int block_index;
  double value_before;
  double value_after;
};

struct RolloutOptions {
  int store_stride = 100;
  bool log_structure = false;
  double midpoint_tol = 1e-12;
  int midpoint_max_iters = 50;
  std::function<void(int, const Vec&)> observer;  // called after each macro step
};

struct RolloutRecord {
  double dt = 0.0;
  int n_steps = 0;
  Vec times;
  std::vector<int> stored_steps;
  std::vector<Vec> states;
  std::vector<SubstepLog> structure_log;
  double wall_seconds = 0.0;  // not serialized

  const Vec& final_state() const { return states.back(); }
};

// Advance n_steps Strang macro-steps from a0. The same engine serves
// learned and reference block sets; only the fields differ.
RolloutRecord rollout(const Baseplate& bp, const StrangSchedule& schedule,
                      const BlockSet& blocks, const Vec& a0, double dt,
                      int n_steps, const LiftingField& lift,
                      const RolloutOptions& options = {});

inline RolloutRecord reference_rollout(const Baseplate& bp,
                                       const StrangSchedule& schedule,
                                       const BlockSet& ref_blocks, const Vec& a0,
                                       double dt, int n_steps,
                                       const LiftingField& lift,
                                       const RolloutOptions& options = {}) {
  return rollout(bp, schedule, ref_blocks, a0, dt, n_steps, lift, options);
}

// CSV export: t, then coefficients (or reconstructed nodal samples).
void record_to_csv(const RolloutRecord& rec, const Baseplate& bp,
                   const LiftingField& lift, const std::string& path,
                   bool reconstructed);

// ---- single-substep integrators (exposed for tests and diagnostics) ----

Vec substep_exact_diagonal(const Block& b, const Baseplate& bp, const Vec& a,
                           double tau);
Vec substep_heun(const std::function<Vec(const Vec&, double)>& field,
                 const Vec& a, double t0, double tau, int subdivisions);
Vec substep_implicit_midpoint(const std::function<Vec(const Vec&, double)>& field,
                              const Vec& a, double t0, double tau, double tol,
                              int max_iters);

// Crank-Nicolson with a per-(block, tau) cached factorization.
class CrankNicolsonCache {
public:
  Vec advance(const Block& b, const Baseplate& bp, const LiftingField& lift,
              int substep_index, const Vec& a, double tau);

private:
  struct Factored;
  std::vector<std::shared_ptr<Factored>> cache_;
};

}  // namespace blockpde
