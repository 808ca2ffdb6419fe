#include "ndpp/training.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace ndpp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void BasketDataset::recompute_mu() {
  mu.assign(m, 0.0);
  for (const Basket& y : baskets)
    for (Index i : y) mu[i] += 1.0;
}

BasketDataset load_baskets(const std::string& path, Index max_basket) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open basket file: " + path);
  BasketDataset ds;
  std::unordered_map<std::string, Index> vocab;
  std::string line;
  std::vector<std::string> toks;
  while (std::getline(in, line)) {
    toks.clear();
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      if (std::find(toks.begin(), toks.end(), tok) == toks.end()) toks.push_back(tok);
    }
    if (toks.empty()) continue;
    if (toks.size() > max_basket) continue;  // drop before assigning indices
    Basket y;
    y.reserve(toks.size());
    for (const std::string& t : toks) {
      auto it = vocab.find(t);
      Index id;
      if (it == vocab.end()) {
        id = ds.item_vocab.size();
        vocab.emplace(t, id);
        ds.item_vocab.push_back(t);
      } else {
        id = it->second;
      }
      y.push_back(id);
    }
    ds.baskets.push_back(std::move(y));
  }
  if (in.bad()) throw Error(Errc::io_error, "read failure: " + path);
  if (ds.baskets.empty()) throw Error(Errc::empty_dataset, "no usable baskets in " + path);
  ds.m = ds.item_vocab.size();
  ds.recompute_mu();
  return ds;
}

NdppParams init_params(Index m, const TrainConfig& cfg, std::uint64_t seed) {
  if (cfg.k == 0) throw Error(Errc::dimension_error, "init_params: k not resolved");
  NdppParams p;
  p.m = m;
  p.k = cfg.k;
  p.tied = cfg.tied;
  p.alpha = cfg.alpha;
  p.beta = cfg.beta;
  Rng rng(mix_seed(seed, 0xA11CE));
  p.v = Mat(m, p.k);
  for (double& x : p.v.a) x = rng.uniform01();
  if (!p.tied) {
    p.b = Mat(m, p.k);
    for (double& x : p.b.a) x = rng.uniform01();
  }
  p.d = Mat(p.k, p.k);
  if (!cfg.symmetric)
    for (double& x : p.d.a) x = rng.gaussian();
  return p;
}

SplitResult split(const BasketDataset& data, const TrainConfig& cfg, std::uint64_t seed) {
  Index n = data.baskets.size();
  if (cfg.val_size + cfg.test_size >= n)
    throw Error(Errc::split_too_large, "val_size + test_size >= dataset size");
  IndexVec order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5B117));
  rng.shuffle(order);

  SplitResult s;
  auto part = [&](Index lo, Index hi) {
    BasketDataset d;
    d.m = data.m;
    d.item_vocab = data.item_vocab;
    d.baskets.reserve(hi - lo);
    for (Index i = lo; i < hi; ++i) d.baskets.push_back(data.baskets[order[i]]);
    d.recompute_mu();
    return d;
  };
  s.val = part(0, cfg.val_size);
  s.test = part(cfg.val_size, cfg.val_size + cfg.test_size);
  s.train = part(cfg.val_size + cfg.test_size, n);
  return s;
}

void Adam::init(const std::vector<Mat*>& params) {
  m_.clear();
  v_.clear();
  for (const Mat* p : params) {
    m_.emplace_back(p->rows, p->cols);
    v_.emplace_back(p->rows, p->cols);
  }
  t_ = 0;
}

void Adam::step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads,
                double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (Index f = 0; f < params.size(); ++f) {
    Mat& p = *params[f];
    const Mat& g = *grads[f];
    Mat& m = m_[f];
    Mat& v = v_[f];
    for (Index i = 0; i < p.a.size(); ++i) {
      m.a[i] = b1_ * m.a[i] + (1.0 - b1_) * g.a[i];
      v.a[i] = b2_ * v.a[i] + (1.0 - b2_) * g.a[i] * g.a[i];
      double mhat = m.a[i] / bc1;
      double vhat = v.a[i] / bc2;
      p.a[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

Adam::Snapshot Adam::snapshot() const { return Snapshot{m_, v_, t_}; }

void Adam::restore(const Snapshot& s) {
  m_ = s.m;
  v_ = s.v;
  t_ = s.t;
}

void TrainTrace::write_csv(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(Errc::io_error, "cannot open trace file: " + path);
  std::fputs("step,epoch,wall_ms,train_nll,val_ll\n", f);
  for (const TraceRow& r : rows)
    std::fprintf(f, "%zu,%zu,%.6f,%.17g,%.17g\n", r.step, r.epoch, r.wall_ms,
                 r.train_neg_loglik, r.val_loglik);
  std::fclose(f);
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open config file: " + path);
  TrainConfig cfg;
  std::string line;
  auto trim = [](std::string s) {
    Index b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  };
  auto as_bool = [&](const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error(Errc::format_error, "config: bad boolean '" + v + "'");
  };
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::format_error, "config line " + std::to_string(lineno) + ": no '='");
    std::string key = trim(body.substr(0, eq));
    std::string val = trim(body.substr(eq + 1));
    try {
      if (key == "k") cfg.k = std::stoull(val);
      else if (key == "tied") cfg.tied = as_bool(val);
      else if (key == "symmetric") cfg.symmetric = as_bool(val);
      else if (key == "alpha") cfg.alpha = std::stod(val);
      else if (key == "beta") cfg.beta = std::stod(val);
      else if (key == "batch_size") cfg.batch_size = std::stoull(val);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
      else if (key == "adam_beta1") cfg.adam_beta1 = std::stod(val);
      else if (key == "adam_beta2") cfg.adam_beta2 = std::stod(val);
      else if (key == "adam_eps") cfg.adam_eps = std::stod(val);
      else if (key == "eps_minor") cfg.eps_minor = std::stod(val);
      else if (key == "val_size") cfg.val_size = std::stoull(val);
      else if (key == "test_size") cfg.test_size = std::stoull(val);
      else if (key == "conv_rel_tol") cfg.conv_rel_tol = std::stod(val);
      else if (key == "conv_patience") cfg.conv_patience = std::stoull(val);
      else if (key == "max_epochs") cfg.max_epochs = std::stoull(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "max_basket") cfg.max_basket = std::stoull(val);
      else if (key == "threads") cfg.threads = std::stoi(val);
      else
        throw Error(Errc::format_error, "config: unknown key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw Error(Errc::format_error,
                  "config line " + std::to_string(lineno) + ": bad value '" + val + "'");
    }
  }
  return cfg;
}

std::pair<NdppParams, TrainTrace> train(const BasketDataset& data, const TrainConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  TrainConfig c = cfg;
  if (c.k == 0) {
    Index kp = 0;
    for (const Basket& y : data.baskets) kp = std::max(kp, y.size());
    c.k = kp;
  }

  SplitResult parts = split(data, c, c.seed);
  const BasketDataset& tr = parts.train;
  const BasketDataset& val = parts.val;

  NdppParams p = init_params(data.m, c, c.seed);
  std::vector<Mat*> factors;
  factors.push_back(&p.v);
  if (!p.tied) factors.push_back(&p.b);
  if (!c.symmetric) factors.push_back(&p.d);

  Adam adam(c.adam_beta1, c.adam_beta2, c.adam_eps);
  adam.init(factors);

  NdppParams best = p;
  double best_val = kNegInf;
  TrainTrace trace;
  Index global_step = 0;
  double prev_val = kNegInf;
  Index patience = 0;
  Index flagged_epochs = 0;

  Index n = tr.baskets.size();
  for (Index epoch = 0; epoch < c.max_epochs; ++epoch) {
    IndexVec order(n);
    for (Index i = 0; i < n; ++i) order[i] = i;
    Rng erng(mix_seed(c.seed, 0xE50C + epoch));
    erng.shuffle(order);

    double epoch_obj_sum = 0.0;
    Index epoch_steps = 0;
    bool epoch_flagged = false;

    for (Index lo = 0; lo < n; lo += c.batch_size) {
      Index hi = std::min(n, lo + c.batch_size);
      BasketList batch;
      batch.reserve(hi - lo);
      for (Index i = lo; i < hi; ++i) batch.push_back(tr.baskets[order[i]]);

      ++global_step;
      ++epoch_steps;
      auto [rep, grads] = objective_and_grad(p, batch, tr.mu, c.eps_minor, c.threads);
      if (!rep.feasible) {
        // No usable gradient at the current point: the step is rejected and
        // parameters stay bitwise identical.
        epoch_flagged = true;
        epoch_obj_sum = kNegInf;
        continue;
      }

      // Maximization: Adam minimizes, so feed the negated gradient.
      Mat ngv = -1.0 * grads.gv;
      Mat ngb = -1.0 * grads.gb;
      Mat ngd = -1.0 * grads.gd;
      std::vector<const Mat*> gptrs;
      gptrs.push_back(&ngv);
      if (!p.tied) gptrs.push_back(&ngb);
      if (!c.symmetric) gptrs.push_back(&ngd);

      NdppParams saved = p;
      Adam::Snapshot asnap = adam.snapshot();
      adam.step(factors, gptrs, c.learning_rate);
      LikelihoodReport probe = objective_only(p, batch, tr.mu, c.eps_minor, c.threads);
      if (!probe.feasible) {
        // Flagged step: restore bitwise, retry once at half the step size.
        p = saved;
        adam.restore(asnap);
        adam.step(factors, gptrs, 0.5 * c.learning_rate);
        probe = objective_only(p, batch, tr.mu, c.eps_minor, c.threads);
        if (!probe.feasible) {
          p = saved;
          adam.restore(asnap);
          epoch_flagged = true;
          epoch_obj_sum = kNegInf;
          continue;
        }
      }
      epoch_obj_sum += rep.objective;
    }

    double val_ll = mean_loglik(p, val.baskets, c.eps_minor, c.threads);
    double train_obj =
        epoch_steps > 0 ? epoch_obj_sum / static_cast<double>(epoch_steps) : 0.0;
    double wall =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    trace.rows.push_back(TraceRow{global_step, epoch, wall, -train_obj, val_ll});

    if (val_ll > best_val) {
      best_val = val_ll;
      best = p;
    }

    flagged_epochs = epoch_flagged ? flagged_epochs + 1 : 0;
    if (flagged_epochs >= 5)
      throw Error(Errc::diverged, "train: 5 consecutive flagged epochs");

    if (std::isfinite(val_ll) && std::isfinite(prev_val)) {
      double rel = std::fabs(val_ll - prev_val) / std::max(std::fabs(prev_val), 1e-300);
      patience = (rel < c.conv_rel_tol) ? patience + 1 : 0;
      if (patience >= c.conv_patience) {
        prev_val = val_ll;
        break;
      }
    }
    prev_val = val_ll;
  }

  return {std::move(best), std::move(trace)};
}

}  // namespace ndpp
