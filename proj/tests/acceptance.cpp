// Acceptance gate: one self-contained check per shipped guarantee. Each
// criterion prints exactly one line
//     criterion NN [PASS|FAIL] <what it verifies>
// followed by indented diagnostics, and the process exit code is the number
// of failed criteria. Pass criterion numbers (bare or via --criterion) to run
// a subset, e.g.  ./acceptance 4 5
//
// Numeric tolerances are pinned here on purpose; loosening one is a contract
// change, not a test fix.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cfml/dataset.hpp"
#include "cfml/eval.hpp"
#include "cfml/experiments.hpp"
#include "cfml/exposure.hpp"
#include "cfml/kernels.hpp"
#include "cfml/maxmargin.hpp"
#include "cfml/models.hpp"
#include "cfml/rng.hpp"
#include "oracles.hpp"

using namespace cfml;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- tiny harness -----------------------------------------------------------

struct Ctx {
  bool ok = true;
  std::vector<std::string> notes;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes.push_back("check failed: " + what);
    }
  }
  void info(const std::string& what) { notes.push_back(what); }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var = v.size() > 1 ? var / double(v.size() - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir =
      fs::temp_directory_path() / "cfml_acceptance" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Architecture make_arch(ModelKind kind, int nu, int ni, int d,
                       std::vector<int> hidden = {}) {
  Architecture a;
  a.kind = kind;
  a.num_users = nu;
  a.num_items = ni;
  a.d = d;
  a.hidden = std::move(hidden);
  a.validate();
  return a;
}

InitSpec make_init(InitSpec::Kind kind, double value) {
  InitSpec s;
  s.kind = kind;
  s.value = value;
  return s;
}

// ---- 1: factored tangent kernel limit ----------------------------------------

void criterion_1(Ctx& c) {
  const std::vector<int> widths = {256, 1024, 4096};
  const int m = 200;  // pairs per index regime
  std::vector<double> dev;
  for (const int d : widths) {
    const Architecture arch = make_arch(ModelKind::mcf, 2 * m, 2 * m, d);
    const ModelParams p =
        init_params(arch, make_init(InitSpec::Kind::scaled, 1.0),
                    std::uint64_t(9000 + d));
    double mae_same = 0, mae_su = 0, mae_si = 0, mae_dis = 0;
    for (int t = 0; t < m; ++t) {
      const int u = 2 * t, i = 2 * t, u2 = 2 * t + 1, i2 = 2 * t + 1;
      mae_same += std::abs(empirical_ntk(p, u, i, u, i) - 2.0);
      mae_su += std::abs(empirical_ntk(p, u, i, u, i2) - 1.0);
      mae_si += std::abs(empirical_ntk(p, u, i, u2, i) - 1.0);
      mae_dis += std::abs(empirical_ntk(p, u, i, u2, i2));
    }
    mae_same /= m;
    mae_su /= m;
    mae_si /= m;
    mae_dis /= m;
    dev.push_back((mae_same + mae_su + mae_si + mae_dis) / 4.0);
    c.info("d=" + std::to_string(d) + ": MAE same=" + fmt(mae_same) +
           " share-user=" + fmt(mae_su) + " share-item=" + fmt(mae_si) +
           " disjoint=" + fmt(mae_dis));
    if (d == 4096) {
      c.require(mae_same < 0.05, "same-pair MAE < 0.05 at d=4096");
      c.require(mae_su < 0.05, "share-user MAE < 0.05 at d=4096");
      c.require(mae_si < 0.05, "share-item MAE < 0.05 at d=4096");
      c.require(mae_dis < 0.05, "disjoint MAE < 0.05 at d=4096");
    }
  }
  c.require(dev[0] > dev[1] && dev[1] > dev[2],
            "mean deviation decreases monotonically in width");
}

// ---- 2: rectified tangent kernels vs the sampling oracle ----------------------

void criterion_2(Ctx& c) {
  const long draws = 2000000;
  const int m = 256;  // empirical pairs per regime
  const struct {
    oracle::Regime regime;
    const char* name;
    bool same_u, same_i;
  } regimes[] = {{oracle::same_pair, "same", true, true},
                 {oracle::share_user, "share-user", true, false},
                 {oracle::share_item, "share-item", false, true},
                 {oracle::disjoint, "disjoint", false, false}};

  for (const ModelKind kind : {ModelKind::ncf_add, ModelKind::ncf_concat}) {
    // One freshly initialized model per sample: pairs probed inside a single
    // model share its output row, which makes across-pair standard errors
    // blind to that row's common-mode norm fluctuation (~2% at this width).
    const Architecture arch = make_arch(kind, 2, 2, 4096);
    std::vector<ModelParams> models;
    models.reserve(std::size_t(m));
    const std::uint64_t base = kind == ModelKind::ncf_add ? 30100 : 30200;
    for (int t = 0; t < m; ++t)
      models.push_back(init_params(
          arch, make_init(InitSpec::Kind::scaled, 1.0), base + t));
    const KernelSpec table = kcf_closed_form(kind);
    for (const auto& r : regimes) {
      const oracle::McEstimate mc =
          oracle::mc_ntk(kind, r.regime, draws, 4100u + unsigned(r.regime));
      std::vector<double> vals;
      vals.reserve(std::size_t(m));
      for (int t = 0; t < m; ++t)
        vals.push_back(empirical_ntk(models[std::size_t(t)], 0, 0,
                                     r.same_u ? 0 : 1, r.same_i ? 0 : 1));
      const auto [emp_mean, emp_sd] = mean_sd(vals);
      const double emp_se = emp_sd / std::sqrt(double(m));
      const double tol = 3.0 * std::sqrt(mc.se * mc.se + emp_se * emp_se);
      const std::string label =
          to_string(kind) + " " + r.name;
      c.require(std::abs(emp_mean - mc.mean) <= tol,
                label + ": |empirical - oracle| <= 3 combined std errors");
      const double table_value = table.a + (r.same_i ? table.b : 0.0) +
                                 (r.same_u ? table.c : 0.0);
      c.info(label + ": oracle=" + fmt(mc.mean) + "+-" + fmt(mc.se) +
             " empirical=" + fmt(emp_mean) + "+-" + fmt(emp_se) +
             " | constants-table=" + fmt(table_value) +
             " (difference " + fmt(mc.mean - table_value) +
             ", reported only)");
    }
  }
}

// ---- 3: nuclear-margin solver vs independent reference ------------------------

void criterion_3(Ctx& c) {
  auto program = [](int nu, int ni, std::vector<LabeledPair> cons) {
    MarginProgram prog;
    prog.num_users = nu;
    prog.num_items = ni;
    prog.constraints = std::move(cons);
    prog.validate();
    return prog;
  };
  auto pair = [](int u, int i, int y) {
    LabeledPair p;
    p.user = u;
    p.item = i;
    p.label = y;
    return p;
  };

  struct AnalyticCase {
    const char* name;
    MarginProgram prog;
    double target;
  };
  const std::vector<AnalyticCase> analytic = {
      {"single constraint", program(2, 2, {pair(0, 0, 1)}), 1.0},
      {"2x2 all ones",
       program(2, 2, {pair(0, 0, 1), pair(0, 1, 1), pair(1, 0, 1),
                      pair(1, 1, 1)}),
       2.0},
      {"2x2 alternating signs",
       program(2, 2, {pair(0, 0, 1), pair(0, 1, -1), pair(1, 0, -1),
                      pair(1, 1, 1)}),
       2.0}};
  for (const auto& a : analytic) {
    const MatrixSolution sol = nucsvm_solve(a.prog);
    const MatrixSolution ref = nucsvm_oracle(a.prog);
    c.require(std::abs(sol.nuclear_norm - a.target) <= 1e-4,
              std::string(a.name) + ": solver objective within 1e-4");
    c.require(std::abs(ref.nuclear_norm - a.target) <= 1e-4,
              std::string(a.name) + ": reference objective within 1e-4");
  }

  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const InteractionSet inst =
        gen_synthetic(5, 5, 2, 0.0, std::uint64_t(7000 + t));
    std::vector<LabeledPair> cons;
    for (std::size_t k = 0; k < inst.pairs.size(); ++k)
      if ((k * 7 + std::size_t(t)) % 3 != 0) cons.push_back(inst.pairs[k]);
    const MarginProgram prog = program(5, 5, cons);
    const MatrixSolution sol = nucsvm_solve(prog);
    const MatrixSolution ref = nucsvm_oracle(prog);
    const double rel = std::abs(sol.nuclear_norm - ref.nuclear_norm) /
                       std::max(ref.nuclear_norm, 1e-12);
    worst = std::max(worst, rel);
    c.require(rel <= 1e-3, "random program " + std::to_string(t) +
                               ": relative objective gap " + fmt(rel) +
                               " <= 1e-3");
  }
  c.info("worst relative objective gap over 20 random programs: " +
         fmt(worst));
}

// ---- 4 & 5 share one training run ---------------------------------------------

struct MarginRun {
  std::vector<MarginGapRow> rows;  // one per checkpoint
  double svm_min_margin = 0.0;
  TrainTrace trace;
  double init_l2 = 0.0;
  double final_l2 = 0.0;
};

const MarginRun& margin_run() {
  static std::optional<MarginRun> cached;
  if (cached) return *cached;

  MarginRun run;
  // Rank-1 sign pattern: the max-margin matrix is the rank-1 outer product,
  // every constraint is active, and the min margin is exactly 1/20.  Gradient
  // descent aligns with that direction fast enough for the pinned budget of
  // 1e4 epochs; richer label structures close the gap at the same O(1/log t)
  // rate but with a constant too large for the checkpoint schedule.
  const InteractionSet inst = gen_synthetic(20, 20, 1, 0.0, 4242);
  std::vector<std::size_t> all_idx(inst.pairs.size());
  for (std::size_t k = 0; k < all_idx.size(); ++k) all_idx[k] = k;

  MarginProgram prog;
  prog.num_users = 20;
  prog.num_items = 20;
  prog.constraints = inst.pairs;
  const MatrixSolution sol = nucsvm_solve(prog);
  const Eigen::VectorXd ref = solution_margins(sol, prog);
  run.svm_min_margin = ref.minCoeff();

  const Architecture arch = make_arch(ModelKind::mcf, 20, 20, 32);
  ModelParams params =
      init_params(arch, make_init(InitSpec::Kind::fixed, 0.1), 99);
  run.init_l2 = params.l2_norm();

  const std::set<int> checkpoints = {100, 1000, 10000};
  TrainOptions topt;
  topt.lr = 0.1;
  topt.epochs = 10000;
  topt.loss = LossKind::exp_loss;
  topt.seed = 17;
  topt.on_epoch = [&](int epoch, const ModelParams& p) {
    if (!checkpoints.count(epoch)) return;
    run.rows.push_back(
        margin_compare(epoch, normalized_margins(p, inst, all_idx), ref));
  };
  run.trace = sgd_train(params, inst, all_idx, topt);
  run.final_l2 = params.l2_norm();
  cached = std::move(run);
  return *cached;
}

void criterion_4(Ctx& c) {
  const MarginRun& run = margin_run();
  c.require(run.svm_min_margin > 0, "reference margins separate the instance");
  c.require(run.rows.size() == 3, "all three checkpoints recorded");
  if (run.rows.size() != 3) return;
  for (const auto& r : run.rows)
    c.info("epoch " + std::to_string(r.epoch) + ": l2 gap " + fmt(r.l2_gap) +
           ", min-margin gap " + fmt(r.min_margin_gap));
  c.require(run.rows[0].l2_gap > run.rows[1].l2_gap &&
                run.rows[1].l2_gap > run.rows[2].l2_gap,
            "margin-vector l2 gap strictly decreases across checkpoints");
  c.require(run.rows[0].min_margin_gap < run.rows[1].min_margin_gap &&
                run.rows[1].min_margin_gap < run.rows[2].min_margin_gap,
            "min-margin gap increases toward zero across checkpoints");
  const double rel_final =
      std::abs(run.rows[2].min_margin_gap) / run.svm_min_margin;
  c.require(rel_final <= 0.10,
            "final min-margin gap within 10% of the reference min margin "
            "(got " +
                fmt(rel_final) + ")");
}

void criterion_5(Ctx& c) {
  const MarginRun& run = margin_run();
  const auto& rows = run.trace.rows;
  c.require(!rows.empty(), "trace recorded");
  if (rows.empty()) return;

  c.info("final loss " + fmt(rows.back().loss) + ", parameter norm " +
         fmt(run.init_l2) + " -> " + fmt(run.final_l2));
  c.require(rows.back().loss < 1e-3, "final training loss < 1e-3");
  c.require(run.final_l2 > 2.0 * run.init_l2,
            "parameter norm more than doubles");

  std::size_t sep = rows.size();
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (rows[k].min_margin > 0) {
      sep = k;
      break;
    }
  c.require(sep < rows.size(), "training reaches a separating predictor");
  if (sep >= rows.size()) return;
  c.info("first separating epoch: " + std::to_string(rows[sep].epoch));
  int violations = 0;
  for (std::size_t k = sep; k + 1 < rows.size(); ++k)
    if (rows[k + 1].smoothed_margin < rows[k].smoothed_margin - 1e-6)
      ++violations;
  c.require(violations == 0,
            "smoothed margin non-decreasing after separation (tolerance "
            "1e-6, " +
                std::to_string(violations) + " violations)");
}

// ---- 6: gradient correctness ---------------------------------------------------

void criterion_6(Ctx& c) {
  const int nu = 4, ni = 3;
  const std::vector<Architecture> archs = {
      make_arch(ModelKind::mcf, nu, ni, 3),
      make_arch(ModelKind::ncf_add, nu, ni, 3),
      make_arch(ModelKind::ncf_add, nu, ni, 3, {2}),
      make_arch(ModelKind::ncf_concat, nu, ni, 2),
      make_arch(ModelKind::ncf_concat, nu, ni, 2, {2})};
  std::uint64_t seed = 600;
  double worst = 0.0;
  for (const auto& arch : archs) {
    for (int t = 0; t < 20; ++t) {
      const ModelParams p =
          init_params(arch, make_init(InitSpec::Kind::fixed, 0.5), seed++);
      const int u = t % nu, i = t % ni;
      ModelGrads ga = zero_grads(p);
      accumulate_forward_grad(p, u, i, 1.0, ga);
      const ModelGrads gf = oracle::fd_gradient(p, u, i);
      double num = 0.0, den = 0.0;
      num += (ga.zu - gf.zu).squaredNorm() + (ga.zi - gf.zi).squaredNorm();
      den += gf.zu.squaredNorm() + gf.zi.squaredNorm();
      for (std::size_t mth = 0; mth < ga.w.size(); ++mth) {
        num += (ga.w[mth] - gf.w[mth]).squaredNorm();
        den += gf.w[mth].squaredNorm();
      }
      const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
      worst = std::max(worst, rel);
      c.require(rel < 1e-5, to_string(arch.kind) +
                                (arch.hidden.empty() ? "" : "+hidden") +
                                " instance " + std::to_string(t) +
                                ": gradient relative error " + fmt(rel));
    }
  }
  c.info("worst relative gradient error: " + fmt(worst));
}

// ---- 7: ranking metrics vs brute force ----------------------------------------

void criterion_7(Ctx& c) {
  Rng rng(505);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + int(rng.below(29));
    std::vector<int> items(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) items[std::size_t(k)] = 3 * k + 1;
    rng.shuffle(items);
    Eigen::VectorXd s(n);
    for (int k = 0; k < n; ++k) s(k) = 0.25 * double(int(rng.below(6)));
    const int rel = items[std::size_t(rng.below(std::uint64_t(n)))];

    const int r = rank_of(items, s, rel);
    const RankingMetrics m = ranking_metrics(r, n, 10);
    const int br = oracle::brute_rank(items, s, rel);
    const double b_auc = oracle::brute_auc(items, s, rel);
    const double b_hr = br <= 10 ? 1.0 : 0.0;
    const double b_ndcg =
        br <= 10 ? 1.0 / std::log2(double(br) + 1.0) : 0.0;
    if (r != br || m.auc != b_auc || m.hr != b_hr || m.ndcg != b_ndcg)
      ++mismatches;
  }
  c.require(mismatches == 0,
            "rank/AUC/HR/NDCG exactly equal brute-force values on 500 "
            "rankings (" +
                std::to_string(mismatches) + " mismatches)");

  double worst = 0.0;
  Rng rng2(606);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + int(rng2.below(8));
    Eigen::VectorXd p(n), q(n);
    for (int k = 0; k < n; ++k) {
      p(k) = 0.05 + rng2.uniform();
      q(k) = 0.05 + rng2.uniform();
    }
    p /= p.sum();
    q /= q.sum();
    worst = std::max(
        worst, std::abs(divergence_d1(p, q) - (divergence_d2(p, q) + 1.0)));
  }
  c.require(worst <= 1e-12,
            "divergence identity d1 = d2 + 1 within 1e-12 (worst " +
                fmt(worst) + ")");
}

// ---- 8: inverse-propensity unbiasedness ----------------------------------------

void criterion_8(Ctx& c) {
  const int nu = 40, ni = 40;
  Rng field_rng(881);
  Eigen::MatrixXd loss(nu, ni), design(nu, ni);
  for (int u = 0; u < nu; ++u)
    for (int i = 0; i < ni; ++i) {
      loss(u, i) = field_rng.uniform();
      design(u, i) = 0.05 + 0.9 * field_rng.uniform();
    }
  const Eigen::MatrixXd p_obs = mixture_exposure(design, 0.7);
  const Eigen::MatrixXd w = ipw_weights(p_obs);
  const double truth = loss.mean();

  const int resamples = 1000;
  std::vector<double> est;
  est.reserve(resamples);
  Rng rs(883);
  for (int r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (int u = 0; u < nu; ++u)
      for (int i = 0; i < ni; ++i)
        if (rs.uniform() < p_obs(u, i)) sum += loss(u, i) * w(u, i);
    est.push_back(sum / double(nu * ni));
  }
  const auto [mean, sd] = mean_sd(est);
  const double se = sd / std::sqrt(double(resamples));
  c.info("uniform-exposure expectation " + fmt(truth) +
         ", weighted estimate " + fmt(mean) + " +- " + fmt(se));
  c.require(std::abs(mean - truth) <= 2.0 * se,
            "weighted estimator mean within 2 std errors of the "
            "uniform-exposure expectation");
}

// ---- 9: exposure sweep ----------------------------------------------------------

void criterion_9(Ctx& c) {
  const fs::path dir = scratch_dir("exposure_sweep");
  RunRequest req;
  req.experiment = "exposure-sweep";
  req.out_dir = dir.string();
  run_experiment(req);

  const json manifest = json::parse(slurp(dir / "manifest.json"));
  const json agg = json::parse(slurp(dir / "aggregate.json"));
  std::vector<std::string> seeds;
  for (const auto& s : manifest.at("seeds"))
    seeds.push_back(std::to_string(s.get<std::uint64_t>()));

  const std::vector<std::string> sources = {"mcf", "ncf_concat"};
  for (const auto& src : sources) {
    for (const auto& arch : sources) {
      const bool matching = arch == src;
      // per-seed biased-vs-weighted difference at the uniform end of the grid
      std::vector<double> diffs;
      for (const auto& seed : seeds) {
        const std::string csv =
            slurp(dir / ("rep_" + seed) / ("exposure_" + src + ".csv"));
        std::istringstream lines(csv);
        std::string line;
        std::getline(lines, line);  // header
        while (std::getline(lines, line)) {
          const auto f = split_csv_line(line);
          if (f.size() != 4 || f[0] != "0" || f[1] != arch) continue;
          diffs.push_back(std::stod(f[2]) - std::stod(f[3]));
        }
      }
      const json& node = agg.at(src).at(arch);
      const double b_range = node.at("biased_range").get<double>();
      const double u_range = node.at("unbiased_range").get<double>();
      if (diffs.empty()) {
        c.require(false, "pi=0 rows found for source " + src + " arch " +
                             arch);
        continue;
      }
      const auto [d_mean, d_sd] = mean_sd(diffs);
      const double d_se = d_sd / std::sqrt(double(diffs.size()));
      const std::string label = "source " + src + " / eval " + arch;
      c.info(label + ": pi=0 biased-weighted difference " + fmt(d_mean) +
             " +- " + fmt(d_se) + "; AUC range biased " + fmt(b_range) +
             " vs weighted " + fmt(u_range) +
             (matching ? "" : "  (cross pairing, reported only)"));
      if (matching) {
        // a zero-variance exact match still counts as agreement
        c.require(std::abs(d_mean) <= std::max(2.0 * d_se, 1e-9),
                  label + ": metrics agree at pi=0 within 2 std errors");
        c.require(u_range < b_range,
                  label + ": weighting shrinks the AUC range across the "
                  "exposure grid");
      }
    }
  }
}

// ---- 10: sampled transductive complexity ----------------------------------------

void criterion_10(Ctx& c) {
  const RademacherEstimate est = rademacher_mc(1, 1, 1.0, 1.0, 1.0, 200000, 77);
  c.info("scalar estimate " + fmt(est.mean) + " +- " + fmt(est.std_error) +
         " (target 1), squared-sign mean " + fmt(est.eps_sq_mean) +
         " (target 0.5)");
  c.require(est.p0 == 0.25, "inclusion probability is exactly 1/4");
  c.require(std::abs(est.mean - 1.0) <= 3.0 * est.std_error,
            "estimate within 3 std errors of the closed-form value");
  c.require(std::abs(est.eps_sq_mean - 0.5) <= 0.005,
            "squared-sign mean within 1% of 2*p0");
}

// ---- 11: closed-form kernel machine vs trained model -----------------------------

void criterion_11(Ctx& c) {
  const fs::path dir = scratch_dir("kernel_vs_model");
  RunRequest req;
  req.experiment = "kernel-vs-model";
  req.out_dir = dir.string();
  run_experiment(req);  // default config: 10 repetitions

  // Per-seed |gap| carries an E|noise| floor of ~0.07 from the ~28-row test
  // sets, so the assertion compares the methods' mean test AUCs instead.
  const json agg = json::parse(slurp(dir / "aggregate.json"));
  for (const std::string arch : {"mcf", "ncf_concat"}) {
    const json& node = agg.at(arch);
    const double gap = node.at("auc_gap").get<double>();
    c.info(arch + ": model AUC " +
           fmt(node.at("model_auc").at("mean").get<double>()) +
           ", kernel-machine AUC " +
           fmt(node.at("svm_auc").at("mean").get<double>()) + ", AUC gap " +
           fmt(gap) + ", mean per-seed |gap| " +
           fmt(node.at("abs_gap").at("mean").get<double>()) +
           (arch == "mcf" ? "" : "  (reported only)"));
    if (arch == "mcf")
      c.require(gap < 0.05,
                "factored model within 0.05 AUC of its kernel machine");
  }
}

// ---- 12: byte-identical reruns ---------------------------------------------------

void criterion_12(Ctx& c) {
  int compared = 0;
  for (const auto& id : kExperimentIds) {
    const fs::path a = scratch_dir("rerun_" + id + "_a");
    const fs::path b = scratch_dir("rerun_" + id + "_b");
    RunRequest req;
    req.experiment = id;
    req.seed_override = {1};
    req.smoke = true;
    req.out_dir = a.string();
    const auto files_a = run_experiment(req);
    req.out_dir = b.string();
    const auto files_b = run_experiment(req);
    c.require(files_a == files_b, id + ": identical artifact lists");
    if (files_a != files_b) continue;
    for (const auto& f : files_a) {
      ++compared;
      if (slurp(a / f) != slurp(b / f))
        c.require(false, id + ": " + f + " differs between reruns");
    }
  }
  c.info(std::to_string(compared) + " artifacts compared byte for byte");
}

// ---- driver ---------------------------------------------------------------------

struct Criterion {
  int id;
  const char* desc;
  double budget_s;  // 0: no pinned runtime budget
  std::function<void(Ctx&)> body;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int k = 1; k < argc; ++k) {
    std::string arg = argv[k];
    if (arg.rfind("--criterion=", 0) == 0) arg = arg.substr(12);
    if (arg == "--criterion" && k + 1 < argc) arg = argv[++k];
    try {
      only.insert(std::stoi(arg));
    } catch (...) {
      std::fprintf(stderr, "unrecognized argument: %s\n", argv[k]);
      return 64;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "factored tangent kernel reaches its (0,1,1) limit at width 4096",
       60, criterion_1},
      {2, "rectified tangent kernels match the sampling oracle", 0,
       criterion_2},
      {3, "nuclear-margin solver agrees with the independent reference", 60,
       criterion_3},
      {4, "training margins converge to the nuclear max-margin solution", 600,
       criterion_4},
      {5, "loss decay, norm growth, smoothed-margin monotonicity", 0,
       criterion_5},
      {6, "analytic gradients match central finite differences", 10,
       criterion_6},
      {7, "ranking metrics equal brute-force counts; divergence identity", 0,
       criterion_7},
      {8, "inverse-propensity estimator is unbiased over exposure resamples",
       30, criterion_8},
      {9, "exposure sweep: weighting flattens the metric across the grid",
       1800, criterion_9},
      {10, "sampled transductive complexity matches the scalar closed form",
       0, criterion_10},
      {11, "closed-form kernel machine tracks the trained wide model", 900,
       criterion_11},
      {12, "experiment reruns are byte-identical", 0, criterion_12},
  };

  int failures = 0;
  for (const auto& crit : criteria) {
    if (!only.empty() && !only.count(crit.id)) continue;
    Ctx c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      crit.body(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.notes.push_back(std::string("exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (crit.budget_s > 0 && elapsed > crit.budget_s) {
      c.ok = false;
      c.notes.push_back("runtime " + fmt(elapsed) + " s exceeds the " +
                        fmt(crit.budget_s) + " s budget");
    }
    if (!c.ok) ++failures;
    std::printf("criterion %02d [%s] %s (%.1f s)\n", crit.id,
                c.ok ? "PASS" : "FAIL", crit.desc, elapsed);
    for (const auto& n : c.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
