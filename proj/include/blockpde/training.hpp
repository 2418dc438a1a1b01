#pragma once

#include <cstdint>
#include <string>

#include "blockpde/blocks.hpp"

namespace blockpde {

// Spectral-decay Gaussian prior: sigma_k = amp / (1 + |k|)^alpha with |k|
// the Shen index (1D) or the Euclidean norm of the mode multi-index (2D).
struct PriorConfig {
  double amp = 1.0;
  double alpha = 0.5;
};

// per-packed-slot standard deviations
Vec prior_sigma(const Baseplate& bp, const PriorConfig& pc);

// n i.i.d. samples; sample i depends only on (seed, i), so generation is
// parallel and reproducible.
std::vector<Vec> sample_prior(const Baseplate& bp, const PriorConfig& pc,
                              int n, uint64_t seed);

struct OperatorDataset {
  std::vector<Vec> states;
  std::vector<Vec> targets;
  std::string baseplate_hash;
  std::string baseplate_manifest;
  PriorConfig prior;
  std::string refop_name;
  uint64_t seed = 0;

  int size() const { return static_cast<int>(states.size()); }
};

OperatorDataset make_dataset(const Baseplate& bp, const ReferenceOp& ref,
                             const PriorConfig& pc, int M, uint64_t seed);

// JSON-lines file: one header line with the manifest, then one record per
// sample {"a": [...], "target": [...]}.
void save_dataset(const OperatorDataset& ds, const std::string& path);
// load verifies the baseplate hash and re-verifies targets against the
// named reference op to 1e-12.
OperatorDataset load_dataset(const std::string& path, const Baseplate& bp);

struct TrainConfig {
  int epochs = 200;
  int batch = 128;
  double lr = 1e-3;
  double weight_decay = 0.0;
  StepSchedule schedule{50, 0.3};
  uint64_t seed = 0;
  double holdout = 0.1;

  void validate() const;
};

struct EpochRow {
  int epoch;
  double train_loss;
  double holdout_loss;
  double lr;
};

struct TrainHistory {
  std::vector<EpochRow> rows;
  int best_epoch = -1;
  double best_holdout_loss = 0.0;
  Mismatch holdout_mismatch;  // on held-out states, final parameters
};

// Operator-matching ERM: minimizes mean ||F_theta(a) - target||_2^2 with
// AdamW; parameter gradients flow through the structure operator via
// gen_grad_param_vjp. Returns best-holdout parameters in the block.
TrainHistory train_block(Block& b, const Baseplate& bp,
                         const OperatorDataset& ds, const TrainConfig& tc);

void save_history_csv(const TrainHistory& h, const std::string& path);

// Single-document JSON checkpoint; load refuses baseplate mismatches.
void save_checkpoint(const Block& b, const Baseplate& bp,
                     const PriorConfig& prior, const TrainConfig& tc,
                     const Mismatch& mismatch, const std::string& path);
Block load_checkpoint(const std::string& path, const Baseplate& bp);

}  // namespace blockpde
