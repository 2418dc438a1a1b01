#include "blockpde/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "blockpde/errors.hpp"
#include "blockpde/kernels.hpp"
#include "blockpde/rng.hpp"

namespace blockpde {

using ordered_json = nlohmann::ordered_json;

Vec prior_sigma(const Baseplate& bp, const PriorConfig& pc) {
  require(pc.amp > 0.0, "prior: amp must be positive");
  require(pc.alpha >= 0.0, "prior: alpha must be non-negative");
  Vec sigma(bp.K);
  for (int k = 0; k < bp.K; ++k) {
    const ModeInfo& m = bp.mode_table[k];
    double idx;
    if (bp.family == Family::shen_legendre_1d)
      idx = static_cast<double>(m.k);
    else
      idx = std::sqrt(static_cast<double>(m.j * m.j + m.l * m.l));
    sigma[k] = pc.amp / std::pow(1.0 + idx, pc.alpha);
  }
  return sigma;
}

std::vector<Vec> sample_prior(const Baseplate& bp, const PriorConfig& pc,
                              int n, uint64_t seed) {
  require(n >= 1, "sample_prior: n must be >= 1");
  const Vec sigma = prior_sigma(bp, pc);
  std::vector<Vec> out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    rng::Stream s(rng::derive(seed, static_cast<uint64_t>(i)));
    Vec a(bp.K);
    for (int k = 0; k < bp.K; ++k) a[k] = sigma[k] * s.normal();
    out[i] = std::move(a);
  }
  return out;
}

OperatorDataset make_dataset(const Baseplate& bp, const ReferenceOp& ref,
                             const PriorConfig& pc, int M, uint64_t seed) {
  require(M >= 1, "make_dataset: M must be >= 1");
  OperatorDataset ds;
  ds.states = sample_prior(bp, pc, M, seed);
  ds.targets.resize(M);
  ds.baseplate_hash = bp.hash();
  ds.baseplate_manifest = bp.manifest_json();
  ds.prior = pc;
  ds.refop_name = ref.name;
  ds.seed = seed;

  std::string failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < M; ++i) {
    try {
      ds.targets[i] = ref(bp, ds.states[i]);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty())
        failure = "make_dataset: sample " + std::to_string(i) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw NumericError(failure);
  return ds;
}

void save_dataset(const OperatorDataset& ds, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "save_dataset: cannot open " + path);
  ordered_json header;
  header["format_version"] = 1;
  header["baseplate"] = ordered_json::parse(ds.baseplate_manifest);
  header["prior"] = {{"amp", ds.prior.amp}, {"alpha", ds.prior.alpha}};
  header["refop"] = ds.refop_name;
  header["seed"] = ds.seed;
  header["M"] = ds.size();
  f << header.dump() << "\n";
  for (int i = 0; i < ds.size(); ++i) {
    ordered_json rec;
    rec["a"] = ds.states[i];
    rec["target"] = ds.targets[i];
    f << rec.dump() << "\n";
  }
}

OperatorDataset load_dataset(const std::string& path, const Baseplate& bp) {
  std::ifstream f(path);
  if (!f.good()) throw ParseError("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError("load_dataset: empty file");
  ordered_json header;
  try {
    header = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw ParseError(std::string("load_dataset: bad header: ") + e.what());
  }
  OperatorDataset ds;
  ds.baseplate_manifest = header.at("baseplate").dump();
  ds.baseplate_hash = header.at("baseplate").at("grid_hash").get<std::string>();
  if (ds.baseplate_hash != bp.hash())
    throw IncompatibleBaseplate("dataset was built on a different baseplate");
  ds.prior.amp = header.at("prior").at("amp").get<double>();
  ds.prior.alpha = header.at("prior").at("alpha").get<double>();
  ds.refop_name = header.at("refop").get<std::string>();
  ds.seed = header.at("seed").get<uint64_t>();
  const int M = header.at("M").get<int>();

  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw ParseError(std::string("load_dataset: bad record: ") + e.what());
    }
    ds.states.push_back(rec.at("a").get<Vec>());
    ds.targets.push_back(rec.at("target").get<Vec>());
  }
  if (ds.size() != M) throw ParseError("load_dataset: record count mismatch");

  // invariant re-check: stored targets must reproduce from the named op
  const ReferenceOp ref = ref_registry(ds.refop_name);
  for (int i = 0; i < ds.size(); ++i) {
    const Vec want = ref(bp, ds.states[i]);
    for (int k = 0; k < bp.K; ++k)
      if (std::abs(want[k] - ds.targets[i][k]) >
          1e-12 * std::max(1.0, std::abs(want[k])))
        throw ParseError("load_dataset: target mismatch at sample " +
                         std::to_string(i));
  }
  return ds;
}

void TrainConfig::validate() const {
  require(epochs >= 1, "train: epochs must be positive");
  require(batch >= 1, "train: batch must be positive");
  require(lr > 0.0, "train: learning rate must be positive");
  require(weight_decay >= 0.0, "train: weight decay must be non-negative");
  require(holdout > 0.0 && holdout < 1.0, "train: holdout fraction in (0,1)");
}

namespace {

// deterministic chunked loss/gradient accumulation over a list of sample
// indices: chunks run in parallel, merge order is fixed
struct BatchAccum {
  Vec grad;
  double loss = 0.0;
};

constexpr int kChunk = 32;

double chain_sign(BlockKind k) { return k == BlockKind::E ? -1.0 : 1.0; }

void accumulate_batch(const Block& b, const Baseplate& bp,
                      const OperatorDataset& ds, const std::vector<int>& idx,
                      int lo, int hi, bool with_grad, size_t psize,
                      BatchAccum& out) {
  const int n = hi - lo;
  const int nchunks = (n + kChunk - 1) / kChunk;
  std::vector<BatchAccum> parts(nchunks);
  const double B = static_cast<double>(n);
  const LiftingField lift0 = LiftingField::zero();

  const bool batched_mlp =
      std::holds_alternative<MlpGenerator>(b.generator->payload);

#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < nchunks; ++c) {
    BatchAccum& acc = parts[c];
    acc.grad.assign(with_grad ? psize : 0, 0.0);
    const int clo = lo + c * kChunk;
    const int chi = std::min(hi, lo + (c + 1) * kChunk);
    const int cb = chi - clo;

    if (batched_mlp) {
      // layer-batched passes: forward + input gradients for the whole chunk,
      // then one tangent-over-reverse sweep accumulating the chunk gradient
      const Mlp& net = std::get<MlpGenerator>(b.generator->payload).net;
      MlpBatchWorkspace bws;
      Mat X(cb, bp.K), G, V(cb, bp.K);
      for (int ii = clo; ii < chi; ++ii)
        std::copy(ds.states[idx[ii]].begin(), ds.states[idx[ii]].end(),
                  X.row(ii - clo));
      Vec fvals;
      mlp_input_gradient_batch(net, bws, X, fvals, G);
      Vec grow(bp.K), f, r(bp.K), v;
      for (int ii = clo; ii < chi; ++ii) {
        const int i = idx[ii];
        std::copy(G.row(ii - clo), G.row(ii - clo) + bp.K, grow.begin());
        f = b.structure.apply(bp, grow);
        const double sgn = chain_sign(b.kind) * b.scale;
        double l = 0.0;
        for (int k = 0; k < bp.K; ++k) {
          f[k] *= sgn;
          if (!b.shift.empty()) f[k] += b.shift[k];
          r[k] = f[k] - ds.targets[i][k];
          l += r[k] * r[k];
        }
        acc.loss += l;
        if (with_grad) {
          v = b.structure.apply_transpose(bp, r);
          const double s = chain_sign(b.kind) * 2.0 * b.scale / B;
          for (int k = 0; k < bp.K; ++k) V(ii - clo, k) = s * v[k];
        }
      }
      if (with_grad) {
        GenWorkspace ws;
        vjp_begin(*b.generator, ws);
        mlp_dir_grad_param_batch(net, bws, X, V, 1.0, ws.mlp_grads);
        vjp_flush(*b.generator, ws, acc.grad);
      }
      continue;
    }

    GenWorkspace ws;
    Vec f, r(bp.K), v;
    if (with_grad) vjp_begin(*b.generator, ws);
    for (int ii = clo; ii < chi; ++ii) {
      const int i = idx[ii];
      b.eval(bp, ds.states[i], lift0, 0.0, ws, f);
      double l = 0.0;
      for (int k = 0; k < bp.K; ++k) {
        r[k] = f[k] - ds.targets[i][k];
        l += r[k] * r[k];
      }
      acc.loss += l;
      if (with_grad) {
        v = b.structure.apply_transpose(bp, r);
        const double s = chain_sign(b.kind) * 2.0 * b.scale / B;
        for (auto& x : v) x *= s;
        vjp_accumulate(*b.generator, bp, ds.states[i], lift0, 0.0, v, 1.0, ws);
      }
    }
    if (with_grad) vjp_flush(*b.generator, ws, acc.grad);
  }

  out.grad.assign(with_grad ? psize : 0, 0.0);
  out.loss = 0.0;
  for (int c = 0; c < nchunks; ++c) {
    out.loss += parts[c].loss;
    for (size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += parts[c].grad[k];
  }
}

}  // namespace

TrainHistory train_block(Block& b, const Baseplate& bp,
                         const OperatorDataset& ds, const TrainConfig& tc) {
  tc.validate();
  require(static_cast<bool>(b.generator) && b.generator->trainable(),
          "train_block: block generator is not trainable");
  if (ds.baseplate_hash != bp.hash())
    throw IncompatibleBaseplate("train_block: dataset baseplate mismatch");

  const int M = ds.size();
  const int n_hold = std::max(1, static_cast<int>(std::floor(M * tc.holdout)));
  const int n_train = M - n_hold;
  require(n_train >= 1, "train_block: no training samples left");

  // split before training: seeded permutation, holdout = tail
  std::vector<int> perm(M);
  for (int i = 0; i < M; ++i) perm[i] = i;
  {
    rng::Stream s(rng::derive(tc.seed, 0xD5));
    s.shuffle(perm.data(), perm.size());
  }
  std::vector<int> train_idx(perm.begin(), perm.begin() + n_train);
  std::vector<int> hold_idx(perm.begin() + n_train, perm.end());

  const size_t psize = b.generator->param_size();
  Vec params = b.generator->flatten_params();
  AdamW opt;
  opt.base_lr = tc.lr;
  opt.weight_decay = tc.weight_decay;
  opt.schedule = tc.schedule;
  opt.init(psize);

  TrainHistory hist;
  Vec best_params = params;
  hist.best_holdout_loss = std::numeric_limits<double>::infinity();

  BatchAccum acc;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    opt.on_epoch(epoch);
    {
      rng::Stream s(rng::derive(tc.seed, 1000 + static_cast<uint64_t>(epoch)));
      s.shuffle(train_idx.data(), train_idx.size());
    }
    double running = 0.0;
    long count = 0;
    for (int lo = 0; lo < n_train; lo += tc.batch) {
      const int hi = std::min(n_train, lo + tc.batch);
      accumulate_batch(b, bp, ds, train_idx, lo, hi, true, psize, acc);
      running += acc.loss;
      count += hi - lo;
      if (!std::isfinite(acc.loss))
        throw TrainingError("train_block: loss diverged", epoch);
      opt.step(params.data(), acc.grad.data(), psize);
      b.generator->unflatten_params(params);
    }
    const double train_loss = running / static_cast<double>(count);

    accumulate_batch(b, bp, ds, hold_idx, 0, n_hold, false, psize, acc);
    const double hold_loss = acc.loss / static_cast<double>(n_hold);
    if (!std::isfinite(hold_loss))
      throw TrainingError("train_block: holdout loss diverged", epoch);

    hist.rows.push_back({epoch, train_loss, hold_loss, opt.lr});
    if (hold_loss < hist.best_holdout_loss) {
      hist.best_holdout_loss = hold_loss;
      hist.best_epoch = epoch;
      best_params = params;
    }
  }

  b.generator->unflatten_params(best_params);

  // holdout mismatch with the returned parameters
  {
    GenWorkspace ws;
    Vec f;
    Mismatch mm;
    for (int i : hold_idx) {
      b.eval(bp, ds.states[i], LiftingField::zero(), 0.0, ws, f);
      double s = 0.0;
      for (int k = 0; k < bp.K; ++k)
        s += (f[k] - ds.targets[i][k]) * (f[k] - ds.targets[i][k]);
      const double n = std::sqrt(s);
      mm.max = std::max(mm.max, n);
      mm.mean += n;
    }
    mm.mean /= static_cast<double>(n_hold);
    hist.holdout_mismatch = mm;
  }
  return hist;
}

void save_history_csv(const TrainHistory& h, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "save_history_csv: cannot open " + path);
  f << "epoch,train_loss,holdout_loss,lr\n";
  char buf[160];
  for (const auto& r : h.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.epoch,
                  r.train_loss, r.holdout_loss, r.lr);
    f << buf;
  }
}

namespace {

ordered_json generator_to_json(const ScalarGenerator& g) {
  ordered_json j;
  j["variant"] = g.variant_name();
  if (const auto* m = std::get_if<MlpGenerator>(&g.payload)) {
    std::vector<int> widths{m->net.in_dim()};
    for (const auto& W : m->net.W) widths.push_back(W.rows);
    j["widths"] = widths;
    j["activation"] = "gelu";
    j["params"] = mlp_flatten(m->net);
  } else if (const auto* q = std::get_if<QuadLowRank>(&g.payload)) {
    j["kdiag"] = q->kdiag;
    j["rank"] = q->U.cols;
    j["U"] = q->U.d;
  } else if (const auto* q = std::get_if<QuadDiagSoftplus>(&g.payload)) {
    j["c_raw"] = q->c_raw;
    j["sign"] = q->sign;
  } else if (const auto* d = std::get_if<DensityGenerator>(&g.payload)) {
    std::vector<int> widths{d->rho.in_dim()};
    for (const auto& W : d->rho.W) widths.push_back(W.rows);
    j["widths"] = widths;
    j["activation"] = "gelu";
    j["params"] = mlp_flatten(d->rho);
    j["include_lift"] = d->include_lift;
  } else {
    throw std::invalid_argument("analytic densities are not checkpointable");
  }
  return j;
}

ScalarGenerator generator_from_json(const ordered_json& j) {
  const std::string variant = j.at("variant").get<std::string>();
  ScalarGenerator g;
  if (variant == "mlp" || variant == "density") {
    const auto widths = j.at("widths").get<std::vector<int>>();
    Mlp net = mlp_init(widths, Activation::gelu, 0);
    mlp_unflatten(net, j.at("params").get<Vec>());
    if (variant == "mlp")
      g.payload = MlpGenerator{std::move(net)};
    else
      g.payload = DensityGenerator{std::move(net), j.at("include_lift").get<bool>()};
  } else if (variant == "quadratic_lowrank") {
    QuadLowRank q;
    q.kdiag = j.at("kdiag").get<Vec>();
    const int rank = j.at("rank").get<int>();
    q.U = Mat(static_cast<int>(q.kdiag.size()), rank);
    q.U.d = j.at("U").get<Vec>();
    g.payload = std::move(q);
  } else if (variant == "quadratic_diagonal_softplus") {
    QuadDiagSoftplus q;
    q.c_raw = j.at("c_raw").get<Vec>();
    q.sign = j.at("sign").get<double>();
    g.payload = std::move(q);
  } else {
    throw ParseError("checkpoint: unknown generator variant " + variant);
  }
  return g;
}

}  // namespace

void save_checkpoint(const Block& b, const Baseplate& bp,
                     const PriorConfig& prior, const TrainConfig& tc,
                     const Mismatch& mismatch, const std::string& path) {
  require(static_cast<bool>(b.generator), "save_checkpoint: block has no generator");
  ordered_json j;
  j["format_version"] = 1;
  j["block"] = {{"name", b.name},
                {"kind", block_kind_name(b.kind)},
                {"structure", struct_kind_name(b.structure.kind)},
                {"scale", b.scale}};
  j["baseplate"] = ordered_json::parse(bp.manifest_json());
  j["generator"] = generator_to_json(*b.generator);
  j["prior"] = {{"amp", prior.amp}, {"alpha", prior.alpha}};
  j["train"] = {{"epochs", tc.epochs},
                {"batch", tc.batch},
                {"lr", tc.lr},
                {"weight_decay", tc.weight_decay},
                {"sched_step", tc.schedule.step_size},
                {"sched_decay", tc.schedule.decay},
                {"seed", tc.seed},
                {"holdout", tc.holdout}};
  j["mismatch"] = {{"max", mismatch.max}, {"mean", mismatch.mean}};
  std::ofstream f(path);
  require(f.good(), "save_checkpoint: cannot open " + path);
  f << j.dump(2) << "\n";
}

Block load_checkpoint(const std::string& path, const Baseplate& bp) {
  std::ifstream f(path);
  if (!f.good()) throw ParseError("load_checkpoint: cannot open " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const std::exception& e) {
    throw ParseError(std::string("load_checkpoint: malformed JSON: ") + e.what());
  }
  const int version = j.at("format_version").get<int>();
  if (version != 1)
    throw ParseError("load_checkpoint: unsupported format_version " +
                     std::to_string(version));
  const std::string hash = j.at("baseplate").at("grid_hash").get<std::string>();
  if (hash != bp.hash())
    throw IncompatibleBaseplate(
        "load_checkpoint: checkpoint baseplate does not match (" + hash +
        " vs " + bp.hash() + ")");

  Block b;
  b.name = j.at("block").at("name").get<std::string>();
  b.kind = block_kind_from_name(j.at("block").at("kind").get<std::string>());
  b.structure.kind =
      struct_kind_from_name(j.at("block").at("structure").get<std::string>());
  b.scale = j.at("block").at("scale").get<double>();
  b.generator = std::make_shared<ScalarGenerator>(generator_from_json(j.at("generator")));
  b.linear = std::holds_alternative<QuadDiagSoftplus>(b.generator->payload) ||
             std::holds_alternative<QuadLowRank>(b.generator->payload);
  return b;
}

}  // namespace blockpde
