#pragma once

#include <string>

#include "ndpp/likelihood.hpp"

namespace ndpp {

struct BasketDataset {
  Index m = 0;
  BasketList baskets;                  // per-line item indices, first-appearance order
  std::vector<double> mu;              // occurrence count per item, length m
  std::vector<std::string> item_vocab; // index -> external token; may be empty

  void recompute_mu();
};

struct TrainConfig {
  Index k = 0;                 // 0 = use the largest observed basket size
  bool tied = true;
  bool symmetric = false;      // ablation: C fixed to zero
  double alpha = 0.0;
  double beta = 0.0;
  Index batch_size = 200;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double eps_minor = 1e-5;
  Index val_size = 300;
  Index test_size = 2000;
  double conv_rel_tol = 1e-4;
  Index conv_patience = 3;
  Index max_epochs = 50;
  std::uint64_t seed = 0;
  Index max_basket = 100;
  int threads = 1;
};

struct TraceRow {
  Index step = 0;   // cumulative optimizer steps at epoch end
  Index epoch = 0;
  double wall_ms = 0.0;
  double train_neg_loglik = 0.0;
  double val_loglik = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  void write_csv(const std::string& path) const;
};

// Whitespace-token basket file: one basket per line, duplicates within a line
// removed, lines with more than max_basket distinct items dropped before any
// index is assigned. Throws Errc::empty_dataset if nothing usable remains.
BasketDataset load_baskets(const std::string& path, Index max_basket = 100);

// v ~ uniform(0,1), d ~ N(0,1) (zero when symmetric); untied b ~ uniform(0,1).
NdppParams init_params(Index m, const TrainConfig& cfg, std::uint64_t seed);

struct SplitResult {
  BasketDataset train, val, test;
};

// Deterministic shuffle-split; each part keeps m/vocab and recomputes mu.
// Throws Errc::split_too_large when val+test >= dataset size.
SplitResult split(const BasketDataset& data, const TrainConfig& cfg, std::uint64_t seed);

// Generic Adam over a list of parameter matrices (minimization convention).
class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {}
  void init(const std::vector<Mat*>& params);
  // One update with step size lr; grads must align with init()'s params.
  void step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads, double lr);

  struct Snapshot {
    std::vector<Mat> m, v;
    long t = 0;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  double b1_, b2_, eps_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

// Full loop: internal split by cfg.seed, Adam over minibatches, per-epoch
// validation, convergence on relative validation change, best-validation
// parameters returned. Throws Errc::diverged after 5 consecutive flagged
// epochs.
std::pair<NdppParams, TrainTrace> train(const BasketDataset& data, const TrainConfig& cfg);

// key=value per line, '#' comments. Unknown keys raise Errc::format_error.
TrainConfig parse_config_file(const std::string& path);


}  // namespace ndpp
