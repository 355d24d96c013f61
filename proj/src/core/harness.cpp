// Copyright 2026 The anicl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "core/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace anicl {

namespace {

void write_text(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::kIo, "cannot write " + path);
  os << text;
}

std::string summary_path(const std::string& out_dir) {
  return out_dir + "/summary.json";
}

// Runs jobs on a small worker pool; each job owns its slot, exceptions are
// captured per job.
struct CellOutcome {
  bool ok = false;
  std::string error;
};

std::vector<CellOutcome> run_pool(int workers,
                                  const std::vector<std::function<void()>>& jobs) {
  std::vector<CellOutcome> outcomes(jobs.size());
  if (jobs.empty()) return outcomes;
  workers = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
        outcomes[i].ok = true;
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return outcomes;
}

void throw_if_failed(const std::vector<CellOutcome>& outcomes,
                     const std::string& what) {
  std::string msg;
  int failed = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok) {
      ++failed;
      msg += "\n  cell " + std::to_string(i) + ": " + outcomes[i].error;
    }
  }
  if (failed > 0) {
    throw_error(ErrorCode::kInternal,
                what + ": " + std::to_string(failed) + " cell(s) failed" + msg);
  }
}

int pool_workers(const KvConfig& kv) {
  const long w = kv.get_long("sweep.workers", 0);
  if (w > 0) return static_cast<int>(w);
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

json report_to_json(const EvalReport& r) {
  return json::parse(r.to_json());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  require_arg(a.size() == b.size() && a.size() >= 2, "pearson: bad input");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_correlation(const std::vector<double>& a,
                            const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

std::string harness_run(const KvConfig& kv) {
  TrainConfig cfg = build_train_config(kv);
  kv.check_fully_consumed();
  write_text(cfg.out_dir + "/config.txt", kv.to_string());
  const EvalReport report = run_training(cfg);
  return report.to_json();
}

namespace {

KvConfig with_overrides(const KvConfig& base,
                        const std::vector<std::pair<std::string, std::string>>& kvs) {
  KvConfig out = base;
  for (const auto& [k, v] : kvs) out.set(k, v);
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string harness_sweep(const KvConfig& kv) {
  const std::string kind = kv.get_string("sweep.kind", "generic");
  const std::string out_dir = kv.get_string("out", "out");
  const int workers = pool_workers(kv);
  // Validate the shared training surface once; cells only override axes.
  (void)build_train_config(kv);

  struct Cell {
    std::string name;
    KvConfig cfg_kv;
    json meta;
    EvalReport report;
    std::vector<MetricRow> rows;
  };
  std::vector<Cell> cells;

  if (kind == "lambda") {
    const double lambda1 = kv.get_double("sweep.lambda1", 5.0);
    const std::vector<double> lambda2s =
        kv.get_double_list("sweep.lambda2_values", {25.0});
    const int d = static_cast<int>(kv.get_long("dgp.d", 10));
    for (double l2 : lambda2s) {
      for (const std::string loss : {"aninfonce", "infonce"}) {
        Cell c;
        const int half = d / 2;
        const std::string lam = format_double(lambda1) + "x" +
                                std::to_string(half) + "," + format_double(l2) +
                                "x" + std::to_string(d - half);
        c.name = "lambda2=" + format_double(l2) + "_" + loss;
        c.cfg_kv = with_overrides(
            kv, {{"dgp.lambda", lam},
                 {"loss.kind", loss},
                 {"out", out_dir + "/cells/" + c.name}});
        c.meta = {{"lambda2", l2}, {"loss", loss}};
        cells.push_back(std::move(c));
      }
    }
  } else if (kind == "dim_batch") {
    const auto d_values = kv.get_double_list("sweep.d_values", {5, 10, 20});
    const auto n_values =
        kv.get_double_list("sweep.batch_values", {128, 512, 2048});
    const long fixed_batch = kv.get_long("sweep.fixed_batch", 512);
    const long fixed_d = kv.get_long("sweep.fixed_d", 20);
    const long seeds = kv.get_long("sweep.seeds", 2);
    const std::uint64_t seed0 = kv.get_u64("seed", 0);
    auto add_cell = [&](const std::string& axis, long d, long n, long rep) {
      Cell c;
      c.name = axis + "_d" + std::to_string(d) + "_n" + std::to_string(n) +
               "_seed" + std::to_string(rep);
      c.cfg_kv = with_overrides(
          kv, {{"dgp.d", std::to_string(d)},
               {"train.batch_size", std::to_string(n)},
               {"seed", std::to_string(seed0 + static_cast<std::uint64_t>(rep))},
               {"out", out_dir + "/cells/" + c.name}});
      c.meta = {{"axis", axis}, {"d", d}, {"batch", n}, {"seed_rep", rep}};
      cells.push_back(std::move(c));
    };
    for (long rep = 0; rep < seeds; ++rep) {
      for (double dv : d_values) {
        add_cell("dim", static_cast<long>(dv), fixed_batch, rep);
      }
      for (double nv : n_values) {
        add_cell("batch", fixed_d, static_cast<long>(nv), rep);
      }
    }
  } else if (kind == "generic") {
    const std::string param = kv.get_string("sweep.param", "");
    std::vector<std::string> values;
    {
      const std::string raw = kv.get_string("sweep.values", "");
      std::istringstream is(raw);
      std::string tok;
      while (std::getline(is, tok, ',')) {
        if (!tok.empty()) values.push_back(tok);
      }
    }
    const long seeds = kv.get_long("sweep.seeds", 1);
    const std::uint64_t seed0 = kv.get_u64("seed", 0);
    if (!values.empty()) {
      require_arg(!param.empty(), "sweep.param must name a config key");
    }
    for (const auto& v : values) {
      for (long rep = 0; rep < seeds; ++rep) {
        Cell c;
        c.name = param + "=" + v + "_seed" + std::to_string(rep);
        c.cfg_kv = with_overrides(
            kv,
            {{param, v},
             {"seed", std::to_string(seed0 + static_cast<std::uint64_t>(rep))},
             {"out", out_dir + "/cells/" + c.name}});
        c.meta = {{"param", param}, {"value", v}, {"seed_rep", rep}};
        cells.push_back(std::move(c));
      }
    }
  } else {
    throw_error(ErrorCode::kConfigParse,
                "sweep.kind must be lambda, dim_batch or generic");
  }

  const auto targets = kv.get_double_list("sweep.targets", {0.70, 0.80, 0.90});

  // Validate every cell configuration up front so a typo fails fast.
  std::vector<std::function<void()>> jobs;
  for (auto& cell : cells) {
    TrainConfig cfg = build_train_config(cell.cfg_kv);
    cell.cfg_kv.check_fully_consumed();
    jobs.push_back([&cell, cfg]() {
      Trainer t(cfg);
      t.open_outputs();
      t.train(cfg.steps);
      t.finalize();
      cell.report = t.final_report();
      cell.rows = t.metrics();
    });
  }
  kv.check_fully_consumed();
  const auto outcomes = run_pool(workers, jobs);

  json cells_json = json::array();
  std::ostringstream csv;
  csv << "cell,ok,r2_all,r2_content,r2_style,loss";
  for (double t : targets) csv << ",steps_to_" << t;
  csv << "\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json cj = cells[i].meta;
    cj["name"] = cells[i].name;
    cj["ok"] = outcomes[i].ok;
    if (outcomes[i].ok) {
      cj["r2_all"] = cells[i].report.r2_all;
      cj["r2_content"] = cells[i].report.r2_content;
      cj["r2_style"] = cells[i].report.r2_style;
      cj["loss"] = cells[i].report.loss;
      json reached = json::object();
      csv << cells[i].name << ",1," << cells[i].report.r2_all << ','
          << cells[i].report.r2_content << ',' << cells[i].report.r2_style
          << ',' << cells[i].report.loss;
      for (double target : targets) {
        long step = -1;
        for (const auto& row : cells[i].rows) {
          if (row.r2_all >= target) {
            step = row.step;
            break;
          }
        }
        reached[format_double(target)] = step;
        csv << ',' << step;
      }
      cj["steps_to_target"] = reached;
      csv << "\n";
    } else {
      cj["error"] = outcomes[i].error;
      csv << cells[i].name << ",0,,,,";
      for (std::size_t t = 0; t < targets.size(); ++t) csv << ',';
      csv << "\n";
    }
    cells_json.push_back(cj);
  }
  json summary = {{"kind", kind}, {"cells", cells_json}};
  write_text(summary_path(out_dir), summary.dump(2));
  write_text(out_dir + "/summary.csv", csv.str());
  throw_if_failed(outcomes, "sweep");
  return summary.dump(2);
}

std::string harness_hn_scan(const KvConfig& kv) {
  TrainConfig cfg = build_train_config(kv);
  const auto gammas = kv.get_double_list("hn.gammas", {10, 20, 30, 40, 50,
                                                       60, 70, 80, 90, 100});
  const int n_anchors = static_cast<int>(kv.get_long("hn.anchors", 4096));
  const int m_negs = static_cast<int>(kv.get_long("hn.negatives", 16));
  const std::string encoder_mode = kv.get_string("hn.encoder", "ground_truth");
  const std::string ckpt_path = kv.get_string("hn.checkpoint", "");
  kv.check_fully_consumed();
  // Absent dgp.lambda_neg degenerates to uniform negatives, for which the
  // scan optimum sits at the positive concentration itself.
  require_arg(!gammas.empty(), "hn.gammas must not be empty");

  const MlpNetwork generator = make_generator(cfg.dgp.generator);
  LatentBatch lb = sample_latent_batch(cfg.dgp, n_anchors, m_negs,
                                       RngStream(cfg.seed, 0x48534341ULL));
  ObservationBatch ob = generate_observations(generator, lb);

  Mat emb_a, emb_p, emb_n;
  if (encoder_mode == "ground_truth") {
    emb_a = invert_generator_batch(generator, ob.anchors);
    emb_p = invert_generator_batch(generator, ob.positives);
    emb_n = invert_generator_batch(generator, ob.negatives);
  } else if (encoder_mode == "trained") {
    require_arg(!ckpt_path.empty(), "hn.encoder=trained needs hn.checkpoint");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    emb_a = mlp_forward(ckpt.encoder, ob.anchors);
    emb_p = mlp_forward(ckpt.encoder, ob.positives);
    emb_n = mlp_forward(ckpt.encoder, ob.negatives);
  } else {
    throw_error(ErrorCode::kConfigParse,
                "hn.encoder must be ground_truth or trained");
  }

  std::vector<double> losses;
  double best_gamma = gammas.front();
  double best_loss = std::numeric_limits<double>::infinity();
  for (double gamma : gammas) {
    require_arg(gamma > 0.0, "hn.gammas entries must be > 0");
    const LossValue lv = aninfonce_loss(
        emb_a, emb_p, emb_n, ConcentrationMatrix::isotropic(cfg.dgp.d, gamma));
    losses.push_back(lv.value);
    if (lv.value < best_loss) {
      best_loss = lv.value;
      best_gamma = gamma;
    }
  }

  std::ostringstream csv;
  csv << "gamma,loss\n";
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    csv << gammas[i] << ',' << losses[i] << "\n";
  }
  write_text(cfg.out_dir + "/hn_scan.csv", csv.str());
  json summary = {{"gammas", gammas},
                  {"losses", losses},
                  {"argmin_gamma", best_gamma},
                  {"min_loss", best_loss},
                  {"encoder", encoder_mode},
                  {"anchors", n_anchors},
                  {"negatives_per_anchor", m_negs}};
  write_text(summary_path(cfg.out_dir), summary.dump(2));
  return summary.dump(2);
}

std::string harness_hn_finetune(const KvConfig& kv) {
  TrainConfig cfg = build_train_config(kv);
  const long ft_steps = kv.get_long("ft.steps", 2000);
  const int ft_hard = static_cast<int>(kv.get_long("ft.hard_negatives", 3));
  kv.check_fully_consumed();
  require_arg(cfg.dgp.lam_neg.has_value(),
              "hn-finetune needs dgp.lambda_neg");

  Trainer pretrain(cfg);
  pretrain.train(cfg.steps);
  const EvalReport before = pretrain.evaluate(cfg.final_eval_samples, 0xE7A1ULL);

  Trainer regular(pretrain);
  regular.train(ft_steps);
  const EvalReport after_regular =
      regular.evaluate(cfg.final_eval_samples, 0xE7A1ULL);

  Trainer finetuned(pretrain);
  finetuned.enable_hard_negatives(ft_hard);
  finetuned.train(ft_steps);
  const EvalReport after_finetune =
      finetuned.evaluate(cfg.final_eval_samples, 0xE7A1ULL);

  json summary = {{"before", report_to_json(before)},
                  {"after_regular", report_to_json(after_regular)},
                  {"after_finetune", report_to_json(after_finetune)},
                  {"ft_steps", ft_steps},
                  {"ft_hard_negatives", ft_hard},
                  {"improvement_vs_regular",
                   after_finetune.r2_all - after_regular.r2_all}};
  write_text(summary_path(cfg.out_dir), summary.dump(2));
  return summary.dump(2);
}

std::string harness_ensemble(const KvConfig& kv) {
  // Force the ensemble surface so lambda2 is parsed and validated once.
  KvConfig base = kv;
  base.set("loss.kind", "ensemble");
  TrainConfig ens_cfg = build_train_config(base);
  base.check_fully_consumed();
  const std::string out_dir = ens_cfg.out_dir;

  struct Variant {
    std::string name;
    KvConfig cfg_kv;
    EvalReport report;
    std::vector<MetricRow> rows;
    std::vector<Vec> final_lambdas;
  };
  std::vector<Variant> variants;
  for (const std::string loss : {"infonce", "aninfonce", "ensemble"}) {
    Variant v;
    v.name = loss;
    v.cfg_kv = with_overrides(base, {{"loss.kind", loss},
                                     {"out", out_dir + "/" + loss}});
    variants.push_back(std::move(v));
  }

  std::vector<std::function<void()>> jobs;
  for (auto& v : variants) {
    TrainConfig cfg = build_train_config(v.cfg_kv);
    jobs.push_back([&v, cfg]() {
      Trainer t(cfg);
      t.open_outputs();
      t.train(cfg.steps);
      t.finalize();
      v.report = t.final_report();
      v.rows = t.metrics();
      for (const auto& lam : t.lambdas()) {
        v.final_lambdas.push_back(lam.materialize().diag);
      }
    });
  }
  const auto outcomes = run_pool(pool_workers(kv), jobs);

  json summary;
  summary["r2_all"] = json::object();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (outcomes[i].ok) {
      summary["r2_all"][variants[i].name] = variants[i].report.r2_all;
      summary[variants[i].name] = report_to_json(variants[i].report);
    }
  }

  // Anti-correlation of the two learned scalings over the dimensions where
  // the ground-truth processes differ.
  const Variant& ens = variants[2];
  if (outcomes[2].ok && ens.final_lambdas.size() == 2) {
    const Vec& l1 = ens_cfg.dgp.lam_pos.diag;
    const Vec& l2 = ens_cfg.ensemble_lambda2->diag;
    std::vector<double> a, b;
    for (int i = 0; i < ens_cfg.dgp.d; ++i) {
      if (std::abs(l1(i) - l2(i)) > 0.01 * std::max(l1(i), l2(i))) {
        a.push_back(ens.final_lambdas[0](i));
        b.push_back(ens.final_lambdas[1](i));
      }
    }
    if (a.size() >= 2) {
      summary["lambda_anticorrelation"] = pearson(a, b);
      summary["alternating_dims"] = a.size();
    }
  }
  write_text(summary_path(out_dir), summary.dump(2));
  throw_if_failed(outcomes, "ensemble");
  return summary.dump(2);
}

std::string harness_marginal_shift(const KvConfig& kv) {
  const auto kappas = kv.get_double_list("shift.kappas", {0, 5, 20, 50});
  const int domain_samples =
      static_cast<int>(kv.get_long("shift.domain_samples", 4000));
  KvConfig base = kv;
  base.set("dgp.marginal", "vmf_mixture");
  if (!base.has("dgp.marginal.pole")) base.set("dgp.marginal.pole", "north");
  TrainConfig probe = build_train_config(base);
  base.check_fully_consumed();
  const std::string out_dir = probe.out_dir;
  const double alpha = probe.dgp.marginal.alpha;

  struct Cell {
    double kappa = 0.0;
    KvConfig cfg_kv;
    double domain_accuracy = 0.0;
    double r2_test = 0.0;
  };
  std::vector<Cell> cells;
  for (double kappa : kappas) {
    Cell c;
    c.kappa = kappa;
    c.cfg_kv = with_overrides(
        base, {{"dgp.marginal.kappa", format_double(kappa)},
               {"out", out_dir + "/cells/kappa=" + format_double(kappa)}});
    cells.push_back(std::move(c));
  }

  std::vector<std::function<void()>> jobs;
  for (auto& cell : cells) {
    TrainConfig cfg = build_train_config(cell.cfg_kv);
    jobs.push_back([&cell, cfg, alpha, domain_samples]() {
      Trainer t(cfg);
      t.open_outputs();
      t.train(cfg.steps);
      t.finalize();

      // Test marginal: the same mixture centered at the opposite pole.
      MarginalSpec test_marginal = cfg.dgp.marginal;
      test_marginal.vmf.mean_direction = -test_marginal.vmf.mean_direction;
      (void)alpha;

      RngStream es(cfg.seed, 0x5348494654ULL);
      const Mat test_latents = sample_marginal(
          test_marginal, cfg.dgp.d, cfg.final_eval_samples, es.substream(0));
      const Mat test_obs = mlp_forward(t.generator(), test_latents);
      const Mat test_emb = t.embed(test_obs);
      cell.r2_test = fit_linear_map(test_emb, test_latents, true).mean_r2;

      const Mat train_latents = sample_marginal(
          cfg.dgp.marginal, cfg.dgp.d, domain_samples, es.substream(1));
      const Mat test_latents2 = sample_marginal(
          test_marginal, cfg.dgp.d, domain_samples, es.substream(2));
      const Mat emb_train =
          t.embed(mlp_forward(t.generator(), train_latents));
      const Mat emb_test = t.embed(mlp_forward(t.generator(), test_latents2));
      cell.domain_accuracy =
          domain_classifier_accuracy(emb_train, emb_test, es.substream(3));
    });
  }
  const auto outcomes = run_pool(pool_workers(kv), jobs);
  throw_if_failed(outcomes, "marginal-shift");

  std::vector<double> accs, r2s;
  std::ostringstream csv;
  csv << "kappa,domain_accuracy,r2_test\n";
  json cells_json = json::array();
  for (const auto& cell : cells) {
    accs.push_back(cell.domain_accuracy);
    r2s.push_back(cell.r2_test);
    csv << cell.kappa << ',' << cell.domain_accuracy << ',' << cell.r2_test
        << "\n";
    cells_json.push_back({{"kappa", cell.kappa},
                          {"domain_accuracy", cell.domain_accuracy},
                          {"r2_test", cell.r2_test}});
  }
  json summary = {{"cells", cells_json}, {"alpha", alpha}};
  if (cells.size() >= 2) {
    summary["spearman_accuracy_r2"] = spearman_correlation(accs, r2s);
  }
  write_text(out_dir + "/marginal_shift.csv", csv.str());
  write_text(summary_path(out_dir), summary.dump(2));
  return summary.dump(2);
}

std::string harness_eval(const KvConfig& kv, const std::string& checkpoint_path) {
  TrainConfig cfg = build_train_config(kv);
  kv.check_fully_consumed();
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Trainer t(cfg);
  t.load_model(ckpt);
  const EvalReport report = t.evaluate(cfg.final_eval_samples, 0xF1AA1ULL);
  write_text(summary_path(cfg.out_dir), report.to_json());
  return report.to_json();
}

std::string harness_oracle(const KvConfig& kv) {
  TrainConfig cfg = build_train_config(kv);
  const int m = static_cast<int>(kv.get_long("oracle.m", 16));
  const long n_mc = kv.get_long("oracle.n_mc", 100000);
  const bool allow_degenerate = kv.get_bool("oracle.allow_degenerate", false);
  kv.check_fully_consumed();
  const OracleEstimate est = bayes_optimal_loss(
      cfg.dgp.lam_pos, cfg.dgp.lam_neg, m, cfg.dgp.d, n_mc,
      RngStream(cfg.seed, 0x0AC1EULL), allow_degenerate, cfg.dgp.mcmc);
  json summary = {{"value", est.value},
                  {"std_error", est.std_error},
                  {"n_draws", est.n_draws},
                  {"m_negatives", m},
                  {"d", cfg.dgp.d}};
  write_text(summary_path(cfg.out_dir), summary.dump(2));
  return summary.dump(2);
}

}  // namespace anicl
