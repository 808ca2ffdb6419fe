// Command-line front end: train / map / predict / eval / bench / synth.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ndpp/eval.hpp"
#include "ndpp/inference.hpp"
#include "ndpp/kernel.hpp"
#include "ndpp/likelihood.hpp"
#include "ndpp/training.hpp"

using json = nlohmann::ordered_json;
using namespace ndpp;

namespace {

std::string iso_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Written with status "running" before the work, rewritten as "ok"/"error"
// after. Carries timestamps, so it is never part of byte-identity checks.
struct RunManifest {
  std::string path;
  json doc;

  void start(const std::string& command, const json& params,
             const std::vector<std::string>& inputs,
             const std::vector<std::string>& outputs) {
    if (path.empty()) return;
    doc = json{{"command", command},
               {"params", params},
               {"inputs", inputs},
               {"outputs", outputs},
               {"started_at", iso_now()},
               {"finished_at", nullptr},
               {"status", "running"}};
    write();
  }
  void finish(const std::string& status, const std::string& message = "") {
    if (path.empty()) return;
    doc["finished_at"] = iso_now();
    doc["status"] = status;
    if (!message.empty()) doc["message"] = message;
    write();
  }
  void write() const {
    std::ofstream out(path);
    if (!out) throw Error(Errc::io_error, "cannot write manifest: " + path);
    out << doc.dump(2) << "\n";
  }
};

int thread_default() {
  if (const char* env = std::getenv("NDPP_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

json map_result_json(const MapResult& r, Index k, const std::string& model,
                     std::uint64_t seed) {
  // wall_ms deliberately excluded: the file must be byte-stable across runs.
  return json{{"algorithm", r.algorithm},
              {"model", model},
              {"k", k},
              {"seed", seed},
              {"items", r.items},
              {"log_det", r.log_det}};
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write: " + path);
  out << doc.dump(2) << "\n";
}

struct TrainArgs {
  std::string data, config, out, trace, vocab_out, manifest;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : parse_config_file(a.config);
  if (a.seed_set) cfg.seed = a.seed;
  cfg.threads = a.threads;

  RunManifest man;
  man.path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  json params = {{"data", a.data},     {"config", a.config}, {"out", a.out},
                 {"trace", a.trace},   {"seed", cfg.seed},   {"k", cfg.k},
                 {"tied", cfg.tied},   {"alpha", cfg.alpha}, {"beta", cfg.beta},
                 {"threads", cfg.threads}};
  std::vector<std::string> outs = {a.out};
  if (!a.trace.empty()) outs.push_back(a.trace);
  if (!a.vocab_out.empty()) outs.push_back(a.vocab_out);
  man.start("train", params, {a.data, a.config}, outs);

  try {
    BasketDataset data = load_baskets(a.data, cfg.max_basket);
    auto [model, trace] = train(data, cfg);
    save_model(model, a.out);
    if (!a.trace.empty()) trace.write_csv(a.trace);
    if (!a.vocab_out.empty()) {
      std::ofstream vout(a.vocab_out);
      if (!vout) throw Error(Errc::io_error, "cannot write vocab: " + a.vocab_out);
      for (const std::string& t : data.item_vocab) vout << t << "\n";
    }
    double final_val = trace.rows.empty() ? 0.0 : trace.rows.back().val_loglik;
    std::printf("trained m=%zu k=%zu epochs=%zu final_val_loglik=%s model=%s\n",
                model.m, model.k, trace.rows.size(), fmt_double(final_val).c_str(),
                a.out.c_str());
    man.finish("ok");
    return 0;
  } catch (const Error& e) {
    std::remove(a.out.c_str());  // no partial model on failure
    man.finish("error", e.what());
    throw;
  }
}

struct MapArgs {
  std::string model, algo = "greedy", out, manifest;
  Index k = 10;
  std::uint64_t seed = 0;
  int threads = 1;
};

int run_map(const MapArgs& a) {
  RunManifest man;
  if (!a.out.empty() || !a.manifest.empty())
    man.path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  json params = {{"model", a.model}, {"algo", a.algo}, {"k", a.k}, {"seed", a.seed}};
  man.start("map", params, {a.model}, a.out.empty() ? std::vector<std::string>{}
                                                    : std::vector<std::string>{a.out});
  try {
    NdppParams p = load_model(a.model);
    InferenceKernel kern = to_inference_kernel(p);
    MapResult r;
    if (a.algo == "greedy") r = greedy_map(kern, a.k);
    else if (a.algo == "sgreedy") r = stochastic_greedy(kern, a.k, a.seed);
    else if (a.algo == "mcmc") r = mcmc_map(kern, a.k, a.seed);
    else if (a.algo == "local") r = local_search(kern, a.k, a.seed);
    else if (a.algo == "exact") r = exact_map(kern, a.k);
    else throw Error(Errc::format_error, "unknown algorithm: " + a.algo);

    std::printf("algorithm=%s k=%zu log_det=%s wall_ms=%.3f\nitems:", r.algorithm.c_str(),
                a.k, fmt_double(r.log_det).c_str(), r.wall_ms);
    for (Index i : r.items) std::printf(" %zu", i);
    std::printf("\n");
    if (!a.out.empty()) write_json(a.out, map_result_json(r, a.k, a.model, a.seed));
    man.finish("ok");
    return 0;
  } catch (const DegenerateGainError& e) {
    if (!a.out.empty()) {
      json doc = map_result_json(e.partial, a.k, a.model, a.seed);
      doc["error"] = e.what();
      doc["partial"] = true;
      write_json(a.out, doc);
    }
    man.finish("error", e.what());
    throw;
  } catch (const Error& e) {
    man.finish("error", e.what());
    throw;
  }
}

struct PredictArgs {
  std::string model, basket, vocab, out, manifest;
  Index top = 10;
  int threads = 1;
};

int run_predict(const PredictArgs& a) {
  RunManifest man;
  if (!a.out.empty() || !a.manifest.empty())
    man.path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  json params = {{"model", a.model}, {"basket", a.basket}, {"top", a.top}};
  man.start("predict", params, {a.model},
            a.out.empty() ? std::vector<std::string>{} : std::vector<std::string>{a.out});
  try {
    NdppParams p = load_model(a.model);
    std::vector<std::string> vocab;
    if (!a.vocab.empty()) {
      std::ifstream vin(a.vocab);
      if (!vin) throw Error(Errc::io_error, "cannot open vocab: " + a.vocab);
      std::string line;
      while (std::getline(vin, line))
        if (!line.empty()) vocab.push_back(line);
      if (vocab.size() != p.m)
        throw Error(Errc::format_error, "vocab size does not match model catalog");
    }
    auto to_index = [&](const std::string& tok) -> std::optional<Index> {
      if (!vocab.empty()) {
        for (Index i = 0; i < vocab.size(); ++i)
          if (vocab[i] == tok) return i;
        return std::nullopt;
      }
      try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(tok, &pos);
        if (pos != tok.size() || v >= p.m) return std::nullopt;
        return static_cast<Index>(v);
      } catch (const std::exception&) {
        return std::nullopt;
      }
    };

    IndexVec basket;
    std::vector<std::string> unknown;
    for (const std::string& tok : split_csv_list(a.basket)) {
      auto idx = to_index(tok);
      if (!idx) {
        unknown.push_back(tok);
        continue;
      }
      if (std::find(basket.begin(), basket.end(), *idx) == basket.end())
        basket.push_back(*idx);
    }
    if (!unknown.empty()) {
      std::string msg = "items not in vocabulary:";
      for (const std::string& t : unknown) msg += " " + t;
      throw Error(Errc::unknown_item, msg);
    }

    InferenceKernel kern = to_inference_kernel(p);
    std::vector<double> delta = condition_singletons(kern, basket);
    std::vector<char> in_basket(p.m, 0);
    for (Index i : basket) in_basket[i] = 1;
    std::vector<Index> order;
    for (Index i = 0; i < p.m; ++i)
      if (!in_basket[i]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
      if (delta[x] != delta[y]) return delta[x] > delta[y];
      return x < y;
    });
    Index top = std::min<Index>(a.top, order.size());

    std::string text = "rank,item,score\n";
    for (Index r = 0; r < top; ++r) {
      Index i = order[r];
      std::string name = vocab.empty() ? std::to_string(i) : vocab[i];
      text += std::to_string(r + 1) + "," + name + "," + fmt_double(delta[i]) + "\n";
    }
    std::fputs(text.c_str(), stdout);
    if (!a.out.empty()) {
      std::ofstream fout(a.out);
      if (!fout) throw Error(Errc::io_error, "cannot write: " + a.out);
      fout << text;
    }
    man.finish("ok");
    return 0;
  } catch (const Error& e) {
    man.finish("error", e.what());
    throw;
  }
}

struct EvalArgs {
  std::string model, data, config, split = "test", metrics = "mpr,auc,ll", out, manifest;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

int run_eval(const EvalArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : parse_config_file(a.config);
  if (a.seed_set) cfg.seed = a.seed;
  RunManifest man;
  if (!a.out.empty() || !a.manifest.empty())
    man.path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  json params = {{"model", a.model},   {"data", a.data}, {"split", a.split},
                 {"metrics", a.metrics}, {"seed", cfg.seed}};
  man.start("eval", params, {a.model, a.data},
            a.out.empty() ? std::vector<std::string>{} : std::vector<std::string>{a.out});
  try {
    NdppParams p = load_model(a.model);
    BasketDataset all = load_baskets(a.data, cfg.max_basket);
    if (all.m > p.m)
      throw Error(Errc::dimension_error, "dataset has more items than the model");
    all.m = p.m;  // model defines the catalog
    all.recompute_mu();

    BasketDataset chosen;
    if (a.split == "all") {
      chosen = all;
    } else {
      SplitResult s = split(all, cfg, cfg.seed);
      if (a.split == "train") chosen = std::move(s.train);
      else if (a.split == "val") chosen = std::move(s.val);
      else if (a.split == "test") chosen = std::move(s.test);
      else throw Error(Errc::format_error, "unknown split: " + a.split);
    }

    std::vector<std::string> wanted = split_csv_list(a.metrics);
    EvalReport rep;
    std::string text = "metric,value,ci_lo,ci_hi\n";
    for (const std::string& metric : wanted) {
      if (metric == "mpr") {
        BasketDataset usable = chosen;
        usable.baskets.clear();
        for (const Basket& y : chosen.baskets)
          if (y.size() >= 2) usable.baskets.push_back(y);
        Index dropped = chosen.baskets.size() - usable.baskets.size();
        if (dropped > 0)
          std::fprintf(stderr, "mpr: skipped %zu baskets with < 2 items\n", dropped);
        if (usable.baskets.empty())
          throw Error(Errc::basket_too_small, "mpr: no baskets with >= 2 items");
        usable.recompute_mu();
        rep.mpr = mpr(p, usable, cfg.seed);
        text += "mpr," + fmt_double(rep.mpr.value) + "," + fmt_double(rep.mpr.lo) + "," +
                fmt_double(rep.mpr.hi) + "\n";
      } else if (metric == "auc") {
        rep.auc = auc_discrimination(p, chosen, cfg.seed, cfg.eps_minor);
        text += "auc," + fmt_double(rep.auc.value) + "," + fmt_double(rep.auc.lo) + "," +
                fmt_double(rep.auc.hi) + "\n";
      } else if (metric == "ll") {
        rep.test_loglik = mean_loglik(p, chosen.baskets, cfg.eps_minor, a.threads);
        text += "test_loglik," + fmt_double(rep.test_loglik) + ",,\n";
      } else {
        throw Error(Errc::format_error, "unknown metric: " + metric);
      }
    }
    std::fputs(text.c_str(), stdout);
    if (!a.out.empty()) {
      std::ofstream fout(a.out);
      if (!fout) throw Error(Errc::io_error, "cannot write: " + a.out);
      fout << text;
    }
    man.finish("ok");
    return 0;
  } catch (const Error& e) {
    man.finish("error", e.what());
    throw;
  }
}

struct BenchArgs {
  std::string model, out, manifest;
  Index k = 10;
  Index trials = 5;
  std::uint64_t seed = 0;
  int threads = 1;
};

int run_bench(const BenchArgs& a) {
  RunManifest man;
  if (!a.out.empty() || !a.manifest.empty())
    man.path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  json params = {{"model", a.model}, {"k", a.k}, {"trials", a.trials}, {"seed", a.seed}};
  man.start("bench", params, {a.model},
            a.out.empty() ? std::vector<std::string>{} : std::vector<std::string>{a.out});
  try {
    NdppParams p = load_model(a.model);
    InferenceKernel kern = to_inference_kernel(p);

    // Reference: exact when enumerable, otherwise local search.
    double combos = 1.0;
    bool exact_ok = true;
    for (Index i = 0; i < a.k; ++i) {
      combos *= static_cast<double>(kern.m - i) / static_cast<double>(i + 1);
      if (combos > 2e6) {
        exact_ok = false;
        break;
      }
    }
    MapResult ref = exact_ok ? exact_map(kern, a.k) : local_search(kern, a.k, a.seed);

    struct Row {
      std::string name;
      std::vector<double> errs;
      std::vector<double> walls;
    };
    std::vector<Row> rows;
    auto run_algo = [&](const std::string& name) {
      Row row;
      row.name = name;
      for (Index t = 0; t < a.trials; ++t) {
        std::uint64_t s = mix_seed(a.seed, 0xBE7C + t);
        MapResult r;
        if (name == "greedy") r = greedy_map(kern, a.k);
        else if (name == "sgreedy") r = stochastic_greedy(kern, a.k, s);
        else if (name == "mcmc") r = mcmc_map(kern, a.k, s);
        else r = local_search(kern, a.k, s);
        row.errs.push_back(relative_logdet_error(r.log_det, ref.log_det));
        row.walls.push_back(r.wall_ms);
      }
      rows.push_back(std::move(row));
    };
    run_algo("greedy");
    run_algo("sgreedy");
    run_algo("mcmc");
    run_algo("local");

    std::string text = "algorithm,trials,mean_rel_error,ci_lo,ci_hi,mean_wall_ms,reference\n";
    for (const Row& row : rows) {
      CiValue ci = bootstrap_mean_ci(row.errs, 1000, mix_seed(a.seed, 0xC1C1));
      double wall = 0.0;
      for (double w : row.walls) wall += w;
      wall /= static_cast<double>(row.walls.size());
      text += row.name + "," + std::to_string(a.trials) + "," + fmt_double(ci.value) + "," +
              fmt_double(ci.lo) + "," + fmt_double(ci.hi) + "," + fmt_double(wall) + "," +
              ref.algorithm + "\n";
    }
    std::fputs(text.c_str(), stdout);
    if (!a.out.empty()) {
      std::ofstream fout(a.out);
      if (!fout) throw Error(Errc::io_error, "cannot write: " + a.out);
      fout << text;
    }
    man.finish("ok");
    return 0;
  } catch (const Error& e) {
    man.finish("error", e.what());
    throw;
  }
}

struct SynthArgs {
  std::string singular = "3,2,1", out, manifest;
  Index m = 5, k = 3, count = 10;
  // Rejection acceptance is on the order of 1e-4 for the default nonsymmetric
  // 5x5 setup, so the per-kernel budget must be generous.
  Index tries = 500000;
  std::uint64_t seed = 0;
  bool symmetric = false;
  int threads = 1;
};

int run_synth(const SynthArgs& a) {
  RunManifest man;
  if (!a.out.empty() || !a.manifest.empty())
    man.path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  json params = {{"m", a.m},       {"k", a.k},           {"count", a.count},
                 {"seed", a.seed}, {"singular", a.singular}, {"symmetric", a.symmetric},
                 {"tries", a.tries}};
  man.start("synth", params, {},
            a.out.empty() ? std::vector<std::string>{} : std::vector<std::string>{a.out});
  try {
    std::vector<double> singular;
    for (const std::string& tok : split_csv_list(a.singular))
      singular.push_back(std::stod(tok));

    std::string text =
        "kernel_id,p0_ok,sigma_min,sigma_max,kappa,log_kappa_ratio,thm2_bound,"
        "cor1_multiplier,cor1_additive,greedy_logdet,exact_logdet,greedy_ratio\n";
    for (Index id = 0; id < a.count; ++id) {
      InferenceKernel kern = sample_synthetic_p0(a.m, a.k, singular,
                                                 mix_seed(a.seed, id), a.tries, a.symmetric);
      bool p0_ok = check_p0(materialize(kern));  // recheck on the emitted kernel
      ApproxBoundReport r = approx_bound_study(kern, a.k);
      text += std::to_string(id) + "," + (p0_ok ? "1" : "0") + "," +
              fmt_double(r.sigma_min) + "," + fmt_double(r.sigma_max) + "," +
              fmt_double(r.kappa) + "," + fmt_double(r.log_kappa_ratio) + "," +
              fmt_double(r.thm2_bound) + "," + fmt_double(r.cor1_multiplier) + "," +
              fmt_double(r.cor1_additive) + "," + fmt_double(r.greedy_logdet) + "," +
              fmt_double(r.exact_logdet) + "," + fmt_double(r.greedy_ratio) + "\n";
    }
    std::fputs(text.c_str(), stdout);
    if (!a.out.empty()) {
      std::ofstream fout(a.out);
      if (!fout) throw Error(Errc::io_error, "cannot write: " + a.out);
      fout << text;
    }
    man.finish("ok");
    return 0;
  } catch (const Error& e) {
    man.finish("error", e.what());
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonsymmetric low-rank DPP learning and MAP inference"};
  app.require_subcommand(1);
  int threads = thread_default();
  app.add_option("--threads", threads, "worker threads (default: NDPP_THREADS or 1)");

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "learn kernel factors from basket data");
  tr->fallthrough();  // lets --threads appear after the subcommand too
  tr->add_option("--data", ta.data, "basket file, one whitespace-separated basket per line")
      ->required();
  tr->add_option("--config", ta.config, "key=value training config");
  tr->add_option("--out", ta.out, "output model path")->required();
  tr->add_option("--trace", ta.trace, "per-epoch trace CSV");
  tr->add_option("--vocab-out", ta.vocab_out, "write token list (one per line)");
  tr->add_option("--manifest", ta.manifest, "manifest path (default <out>.manifest.json)");
  auto* topt = tr->add_option("--seed", ta.seed, "override config seed");
  tr->callback([&]() { ta.seed_set = topt->count() > 0; });

  MapArgs ma;
  CLI::App* mp = app.add_subcommand("map", "MAP set selection from a trained model");
  mp->fallthrough();
  mp->add_option("--model", ma.model, "model file")->required();
  mp->add_option("--k", ma.k, "target set size (default 10)");
  mp->add_option("--algo", ma.algo, "greedy|sgreedy|mcmc|local|exact");
  mp->add_option("--seed", ma.seed, "seed for randomized algorithms");
  mp->add_option("--out", ma.out, "result JSON path");
  mp->add_option("--manifest", ma.manifest, "manifest path");

  PredictArgs pa;
  CLI::App* pr = app.add_subcommand("predict", "next-item scores conditioned on a basket");
  pr->fallthrough();
  pr->add_option("--model", pa.model, "model file")->required();
  pr->add_option("--basket", pa.basket, "comma-separated item list (may be empty)");
  pr->add_option("--top", pa.top, "number of items to print (default 10)");
  pr->add_option("--vocab", pa.vocab, "token list mapping indices to names");
  pr->add_option("--out", pa.out, "also write the CSV here");
  pr->add_option("--manifest", pa.manifest, "manifest path");

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "ranking/discrimination metrics on a split");
  ev->fallthrough();
  ev->add_option("--model", ea.model, "model file")->required();
  ev->add_option("--data", ea.data, "basket file")->required();
  ev->add_option("--config", ea.config, "config used for the train split");
  ev->add_option("--split", ea.split, "train|val|test|all (default test)");
  ev->add_option("--metrics", ea.metrics, "subset of mpr,auc,ll");
  ev->add_option("--out", ea.out, "report CSV path");
  ev->add_option("--manifest", ea.manifest, "manifest path");
  auto* eopt = ev->add_option("--seed", ea.seed, "override config seed");
  ev->callback([&]() { ea.seed_set = eopt->count() > 0; });

  BenchArgs ba;
  CLI::App* be = app.add_subcommand("bench", "compare MAP algorithms against a reference");
  be->fallthrough();
  be->add_option("--model", ba.model, "model file")->required();
  be->add_option("--k", ba.k, "target set size (default 10)");
  be->add_option("--trials", ba.trials, "seeded trials per algorithm (default 5)");
  be->add_option("--seed", ba.seed, "base seed");
  be->add_option("--out", ba.out, "bench CSV path");
  be->add_option("--manifest", ba.manifest, "manifest path");

  SynthArgs sa;
  CLI::App* sy = app.add_subcommand("synth", "synthetic P0 kernels and approximation bounds");
  sy->fallthrough();
  sy->add_option("--m", sa.m, "catalog size (default 5)");
  sy->add_option("--k", sa.k, "rank / MAP cardinality (default 3)");
  sy->add_option("--count", sa.count, "number of kernels (default 10)");
  sy->add_option("--seed", sa.seed, "base seed");
  sy->add_option("--singular", sa.singular, "comma-separated singular values (default 3,2,1)");
  sy->add_option("--tries", sa.tries, "rejection budget per kernel (default 500000)");
  sy->add_flag("--symmetric", sa.symmetric, "tie the two orthonormal factors");
  sy->add_option("--out", sa.out, "study CSV path");
  sy->add_option("--manifest", sa.manifest, "manifest path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // help/version exit 0, any parse failure exits 2
  }

  ta.threads = ma.threads = pa.threads = ea.threads = ba.threads = sa.threads = threads;
  try {
    if (tr->parsed()) return run_train(ta);
    if (mp->parsed()) return run_map(ma);
    if (pr->parsed()) return run_predict(pa);
    if (ev->parsed()) return run_eval(ea);
    if (be->parsed()) return run_bench(ba);
    if (sy->parsed()) return run_synth(sa);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 2;
}
