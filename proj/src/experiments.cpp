#include "cfml/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "cfml/dataset.hpp"
#include "cfml/eval.hpp"
#include "cfml/exposure.hpp"
#include "cfml/io.hpp"
#include "cfml/kernels.hpp"
#include "cfml/maxmargin.hpp"
#include "cfml/models.hpp"

namespace cfml {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

// ---- configuration ------------------------------------------------------------

json dataset_defaults(int sub_users, int sub_items) {
  return json{{"source", "synthetic"},
              {"gen_users", 400},
              {"gen_items", 400},
              {"gen_seed", 20240601},
              {"num_users", sub_users},
              {"num_items", sub_items},
              {"threshold", 4.0},
              {"negatives_per_positive", 4}};
}

json model_defaults(int d, std::vector<int> hidden, const std::string& init,
                    double init_value) {
  return json{{"d", d},
              {"hidden", hidden},
              {"init", init},
              {"init_value", init_value}};
}

json train_defaults(double lr, int epochs, const std::string& loss) {
  return json{{"lr", lr}, {"epochs", epochs}, {"loss", loss}};
}

json default_seeds() { return json::array({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}); }

}  // namespace

const std::vector<std::string> kExperimentIds = {
    "kernel-vs-model", "margin-convergence", "transductive-training",
    "exposure-sweep"};

json default_config(const std::string& experiment) {
  if (experiment == "kernel-vs-model") {
    return json{{"dataset", dataset_defaults(50, 50)},
                {"model", model_defaults(128, {64}, "scaled", 1.0)},
                {"train", train_defaults(0.01, 3000, "log")},
                {"archs", json::array({"mcf", "ncf_concat"})},
                {"svm", json{{"C", 1e4}, {"tol", 1e-6}}},
                {"hr_k", 10},
                {"seeds", default_seeds()}};
  }
  if (experiment == "margin-convergence") {
    return json{{"instance", json{{"num_users", 20},
                                  {"num_items", 20},
                                  {"rank", 3},
                                  {"noise", 0.0}}},
                {"model", model_defaults(32, {}, "fixed", 0.01)},
                {"train", train_defaults(0.1, 10000, "exp")},
                {"checkpoints", json::array({100, 1000, 10000})},
                {"solver_tol", 1e-6},
                {"seeds", default_seeds()}};
  }
  if (experiment == "transductive-training") {
    return json{{"dataset", dataset_defaults(200, 200)},
                {"model", model_defaults(32, {16}, "fixed", 0.01)},
                {"train", train_defaults(0.1, 300, "log")},
                {"archs", json::array({"mcf", "ncf_concat"})},
                {"split", json{{"mode", "leave_last"}, {"beta", 0.25}}},
                {"hr_k", 10},
                {"seeds", default_seeds()}};
  }
  if (experiment == "exposure-sweep") {
    return json{
        {"dataset", dataset_defaults(100, 100)},
        // Small-variance init so the narrow evaluation models actually learn
        // the click signal; lr 0.1 diverges on this data past ~100 epochs, so
        // the sweep trains gentler for longer.
        {"model", model_defaults(32, {8}, "fixed", 0.01)},
        {"train", train_defaults(0.05, 300, "log")},
        {"sources", json::array({"mcf", "ncf_concat"})},
        {"archs", json::array({"mcf", "ncf_concat"})},
        {"pi_grid", json::array({0.0, 0.25, 0.5, 0.75, 1.0})},
        {"mechanism", json{{"d", 32},
                           {"hidden", json::array({8})},
                           {"epochs", 2000},
                           {"lr", 0.001},
                           {"init_value", 1.0},
                           {"mu", 3.0},
                           {"rho", 2.0}}},
        {"hr_k", 10},
        {"seeds", default_seeds()}};
  }
  fail("unknown experiment id: " + experiment);
}

namespace {

void merge_checked(json& base, const json& user, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) fail("unknown config key: " + p);
    json& b = base[it.key()];
    const json& v = it.value();
    if (b.is_object()) {
      if (!v.is_object()) fail("config key " + p + " must be an object");
      merge_checked(b, v, p);
    } else if (b.is_array()) {
      if (!v.is_array()) fail("config key " + p + " must be an array");
      b = v;
    } else if (b.is_string()) {
      if (!v.is_string()) fail("config key " + p + " must be a string");
      b = v;
    } else if (b.is_boolean()) {
      if (!v.is_boolean()) fail("config key " + p + " must be a boolean");
      b = v;
    } else {
      if (!v.is_number()) fail("config key " + p + " must be a number");
      b = v;
    }
  }
}

void check_range(bool ok, const std::string& what) {
  if (!ok) fail("config range error: " + what);
}

void check_model_block(const json& m, const std::string& path) {
  check_range(m.at("d").is_number_integer() && m.at("d").get<int>() >= 1,
              path + ".d must be a positive integer");
  for (const auto& h : m.at("hidden"))
    check_range(h.is_number_integer() && h.get<int>() >= 1,
                path + ".hidden entries must be positive integers");
  const std::string init = m.at("init").get<std::string>();
  check_range(init == "scaled" || init == "fixed",
              path + ".init must be 'scaled' or 'fixed'");
  check_range(m.at("init_value").get<double>() > 0,
              path + ".init_value must be > 0");
}

void check_train_block(const json& t) {
  check_range(t.at("lr").get<double>() > 0, "train.lr must be > 0");
  check_range(t.at("epochs").is_number_integer() &&
                  t.at("epochs").get<int>() >= 1,
              "train.epochs must be a positive integer");
  const std::string loss = t.at("loss").get<std::string>();
  check_range(loss == "exp" || loss == "log",
              "train.loss must be 'exp' or 'log'");
}

void check_dataset_block(const json& d) {
  check_range(d.at("gen_users").get<int>() >= 2 &&
                  d.at("gen_items").get<int>() >= 2,
              "dataset.gen_users/gen_items must be >= 2");
  check_range(d.at("num_users").get<int>() >= 2 &&
                  d.at("num_items").get<int>() >= 2,
              "dataset.num_users/num_items must be >= 2");
  const double thr = d.at("threshold").get<double>();
  check_range(thr >= 1.0 && thr <= 5.0, "dataset.threshold must be in [1,5]");
  check_range(d.at("negatives_per_positive").is_number_integer() &&
                  d.at("negatives_per_positive").get<int>() >= 0,
              "dataset.negatives_per_positive must be a nonnegative integer");
}

void check_archs(const json& archs, const std::string& key) {
  check_range(archs.is_array() && !archs.empty(),
              key + " must be a nonempty array");
  for (const auto& a : archs)
    model_kind_from_string(a.get<std::string>());  // throws on bad name
}

void check_seeds(const json& seeds) {
  check_range(seeds.is_array() && !seeds.empty(),
              "seeds must be a nonempty array");
  for (const auto& s : seeds)
    check_range(s.is_number_integer() && s.get<std::int64_t>() >= 0,
                "seeds must be nonnegative integers");
}

}  // namespace

json validate_config(const std::string& experiment, const json& user_config) {
  if (!user_config.is_object() && !user_config.is_null())
    fail("config root must be a JSON object");
  json cfg = default_config(experiment);
  if (user_config.is_object()) merge_checked(cfg, user_config, "");

  check_seeds(cfg.at("seeds"));
  if (cfg.contains("model")) check_model_block(cfg.at("model"), "model");
  if (cfg.contains("train")) check_train_block(cfg.at("train"));
  if (cfg.contains("dataset")) check_dataset_block(cfg.at("dataset"));
  if (cfg.contains("archs")) check_archs(cfg.at("archs"), "archs");
  if (cfg.contains("hr_k"))
    check_range(cfg.at("hr_k").is_number_integer() &&
                    cfg.at("hr_k").get<int>() >= 1,
                "hr_k must be a positive integer");

  if (experiment == "kernel-vs-model") {
    check_range(cfg.at("svm").at("C").get<double>() > 0, "svm.C must be > 0");
    check_range(cfg.at("svm").at("tol").get<double>() > 0,
                "svm.tol must be > 0");
  } else if (experiment == "margin-convergence") {
    const auto& inst = cfg.at("instance");
    check_range(inst.at("num_users").get<int>() >= 2 &&
                    inst.at("num_items").get<int>() >= 2,
                "instance dims must be >= 2");
    check_range(inst.at("rank").get<int>() >= 1,
                "instance.rank must be >= 1");
    check_range(inst.at("noise").get<double>() >= 0,
                "instance.noise must be >= 0");
    const auto& cps = cfg.at("checkpoints");
    check_range(cps.is_array() && !cps.empty(),
                "checkpoints must be a nonempty array");
    int prev = 0;
    for (const auto& c : cps) {
      check_range(c.is_number_integer() && c.get<int>() > prev,
                  "checkpoints must be strictly increasing positive integers");
      prev = c.get<int>();
    }
    check_range(cfg.at("train").at("epochs").get<int>() >= prev,
                "train.epochs must cover the last checkpoint");
    check_range(cfg.at("solver_tol").get<double>() > 0,
                "solver_tol must be > 0");
    check_range(cfg.at("model").at("hidden").empty(),
                "margin-convergence trains the factorization model; "
                "model.hidden must be empty");
  } else if (experiment == "transductive-training") {
    const std::string mode = cfg.at("split").at("mode").get<std::string>();
    check_range(mode == "leave_last" || mode == "transductive",
                "split.mode must be 'leave_last' or 'transductive'");
    const double beta = cfg.at("split").at("beta").get<double>();
    check_range(beta > 0 && beta < 1, "split.beta must be in (0,1)");
  } else if (experiment == "exposure-sweep") {
    check_archs(cfg.at("sources"), "sources");
    const auto& grid = cfg.at("pi_grid");
    check_range(grid.is_array() && !grid.empty(),
                "pi_grid must be a nonempty array");
    for (const auto& v : grid) {
      const double pi = v.get<double>();
      check_range(pi >= 0.0 && pi <= 1.0, "pi_grid values must be in [0,1]");
    }
    const auto& mech = cfg.at("mechanism");
    check_range(mech.at("d").get<int>() >= 1, "mechanism.d must be >= 1");
    check_range(mech.at("epochs").get<int>() >= 1,
                "mechanism.epochs must be >= 1");
    check_range(mech.at("lr").get<double>() > 0, "mechanism.lr must be > 0");
    check_range(mech.at("init_value").get<double>() > 0,
                "mechanism.init_value must be > 0");
    check_range(mech.at("rho").get<double>() > 0, "mechanism.rho must be > 0");
  }
  return cfg;
}

// ---- shared driver pieces -----------------------------------------------------

namespace {

RatingTable make_table(const json& dcfg) {
  const std::string source = dcfg.at("source").get<std::string>();
  const std::uint64_t gen_seed = dcfg.at("gen_seed").get<std::uint64_t>();
  RatingTable t =
      source == "synthetic"
          ? gen_ratings(dcfg.at("gen_users").get<int>(),
                        dcfg.at("gen_items").get<int>(), gen_seed)
          : load_ratings(source);
  const int nu = dcfg.at("num_users").get<int>();
  const int ni = dcfg.at("num_items").get<int>();
  if (nu < t.num_users || ni < t.num_items) {
    Rng sub = Rng::derive(gen_seed, 99);
    t = subsample(t, nu, ni, sub.next_u64());
  }
  t.validate();
  return t;
}

Architecture arch_of(ModelKind kind, const json& model_cfg, int num_users,
                     int num_items) {
  Architecture a;
  a.kind = kind;
  a.num_users = num_users;
  a.num_items = num_items;
  a.d = model_cfg.at("d").get<int>();
  if (kind != ModelKind::mcf)
    a.hidden = model_cfg.at("hidden").get<std::vector<int>>();
  a.validate();
  return a;
}

InitSpec init_of(const json& model_cfg) {
  InitSpec s;
  s.kind = model_cfg.at("init").get<std::string>() == "scaled"
               ? InitSpec::Kind::scaled
               : InitSpec::Kind::fixed;
  s.value = model_cfg.at("init_value").get<double>();
  return s;
}

TrainOptions train_of(const json& train_cfg, std::uint64_t seed) {
  TrainOptions t;
  t.lr = train_cfg.at("lr").get<double>();
  t.epochs = train_cfg.at("epochs").get<int>();
  t.loss = loss_kind_from_string(train_cfg.at("loss").get<std::string>());
  t.seed = seed;
  return t;
}

std::vector<UserEval> evaluate_heldout(
    const InteractionSet& set, const std::vector<std::size_t>& train_idx,
    const std::vector<std::size_t>& test_idx,
    const std::function<double(int, int)>& score, int hr_k,
    const Eigen::MatrixXd* weights) {
  std::vector<std::unordered_set<int>> train_items(set.num_users);
  for (std::size_t k : train_idx) {
    const auto& p = set.pairs.at(k);
    train_items[p.user].insert(p.item);
  }
  std::vector<UserEval> rows;
  for (std::size_t k : test_idx) {
    const auto& p = set.pairs.at(k);
    if (p.label != 1) continue;  // ranking rows are anchored at positives
    std::vector<int> cand;
    cand.reserve(std::size_t(set.num_items));
    for (int i = 0; i < set.num_items; ++i)
      if (!train_items[p.user].count(i)) cand.push_back(i);
    if (cand.size() < 2) continue;
    Eigen::VectorXd s(Eigen::Index(cand.size()));
    for (std::size_t c = 0; c < cand.size(); ++c)
      s(Eigen::Index(c)) = score(p.user, cand[c]);
    const int r = rank_of(cand, s, p.item);
    const RankingMetrics m = ranking_metrics(r, int(cand.size()), hr_k);
    UserEval ue;
    ue.user = p.user;
    ue.rank = r;
    ue.auc = m.auc;
    ue.hr = m.hr;
    ue.ndcg = m.ndcg;
    ue.weight = weights ? (*weights)(p.user, p.item) : 1.0;
    ue.unbiased_auc = ue.auc * ue.weight;
    rows.push_back(ue);
  }
  return rows;
}

json mean_std(const std::vector<double>& v) {
  if (v.empty()) return json{{"mean", nullptr}, {"std", nullptr}};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var = v.size() > 1 ? var / double(v.size() - 1) : 0.0;
  return json{{"mean", mean}, {"std", std::sqrt(var)}};
}

struct OutputSink {
  fs::path root;
  std::vector<std::string> files;

  void write_text(const std::string& rel, const std::string& bytes) {
    fs::create_directories((root / rel).parent_path());
    atomic_write_bytes((root / rel).string(), bytes);
    files.push_back(rel);
  }
  void write_json_file(const std::string& rel, const json& j) {
    fs::create_directories((root / rel).parent_path());
    cfml::write_json((root / rel).string(), j);
    files.push_back(rel);
  }
};

// ---- kernel-vs-model -----------------------------------------------------------

void run_kernel_vs_model(const json& cfg,
                         const std::vector<std::uint64_t>& seeds,
                         OutputSink& sink) {
  const RatingTable table = make_table(cfg.at("dataset"));
  const InteractionSet implicit =
      to_implicit(table, cfg.at("dataset").at("threshold").get<double>());
  if (implicit.pairs.empty()) fail("no positive interactions above threshold");
  const int npp = cfg.at("dataset").at("negatives_per_positive").get<int>();
  const int hr_k = cfg.at("hr_k").get<int>();
  SvmOptions svm_opts;
  svm_opts.C = cfg.at("svm").at("C").get<double>();
  svm_opts.tol = cfg.at("svm").at("tol").get<double>();

  const auto archs = cfg.at("archs").get<std::vector<std::string>>();
  std::map<std::string, CsvWriter> csvs;
  std::map<std::string, std::vector<double>> model_aucs, svm_aucs, gaps;
  for (const auto& a : archs)
    csvs.emplace(a, CsvWriter({"n_samples", "model_auc", "svm_auc"}));

  for (std::size_t r = 0; r < seeds.size(); ++r) {
    const std::uint64_t seed = seeds[r];
    InteractionSet set =
        sample_negatives(implicit, npp, Rng::derive(seed, 1).next_u64());
    SplitPlan plan = split_leave_last(set);
    if (plan.train.empty() || plan.test.empty())
      fail("leave-last split left no usable train/test pairs");

    std::vector<std::pair<int, int>> train_pairs;
    Eigen::VectorXi y(Eigen::Index(plan.train.size()));
    for (std::size_t k = 0; k < plan.train.size(); ++k) {
      const auto& p = set.pairs[plan.train[k]];
      train_pairs.emplace_back(p.user, p.item);
      y(Eigen::Index(k)) = p.label;
    }

    for (std::size_t a = 0; a < archs.size(); ++a) {
      const ModelKind kind = model_kind_from_string(archs[a]);
      Architecture arch =
          arch_of(kind, cfg.at("model"), set.num_users, set.num_items);
      ModelParams params = init_params(arch, init_of(cfg.at("model")),
                                       Rng::derive(seed, 10 + a).next_u64());
      TrainOptions topt =
          train_of(cfg.at("train"), Rng::derive(seed, 20 + a).next_u64());
      sgd_train(params, set, plan.train, topt);

      KcfSvm svm(kcf_closed_form(kind), train_pairs, y, svm_opts);

      auto model_rows = evaluate_heldout(
          set, plan.train, plan.test,
          [&](int u, int i) { return forward(params, u, i); }, hr_k, nullptr);
      auto svm_rows = evaluate_heldout(
          set, plan.train, plan.test,
          [&](int u, int i) { return svm.predict(u, i); }, hr_k, nullptr);
      if (model_rows.empty() || svm_rows.empty())
        fail("held-out evaluation produced no rows");
      const double m_auc = summarize_auc(model_rows).biased;
      const double s_auc = summarize_auc(svm_rows).biased;
      csvs.at(archs[a]).append_numeric_row(
          {double(plan.train.size()), m_auc, s_auc});
      model_aucs[archs[a]].push_back(m_auc);
      svm_aucs[archs[a]].push_back(s_auc);
      gaps[archs[a]].push_back(std::abs(m_auc - s_auc));
    }
  }

  json agg;
  for (const auto& a : archs) {
    sink.write_text("kernel_vs_model_" + a + ".csv", csvs.at(a).str());
    agg[a] = json{{"model_auc", mean_std(model_aucs[a])},
                  {"svm_auc", mean_std(svm_aucs[a])},
                  {"abs_gap", mean_std(gaps[a])}};
    // Gap between the two methods' test AUCs.  The per-seed |gap| above is
    // noise-floored by the small per-seed test set, so the method-level
    // comparison is the one downstream consumers should read.
    agg[a]["auc_gap"] =
        std::abs(agg[a]["model_auc"]["mean"].get<double>() -
                 agg[a]["svm_auc"]["mean"].get<double>());
  }
  sink.write_json_file("aggregate.json", agg);
}

// ---- margin-convergence ---------------------------------------------------------

void run_margin_convergence(const json& cfg,
                            const std::vector<std::uint64_t>& seeds,
                            OutputSink& sink) {
  const auto& inst_cfg = cfg.at("instance");
  const int nu = inst_cfg.at("num_users").get<int>();
  const int ni = inst_cfg.at("num_items").get<int>();
  const auto checkpoints = cfg.at("checkpoints").get<std::vector<int>>();
  const std::set<int> cp_set(checkpoints.begin(), checkpoints.end());

  json agg;
  std::map<int, std::vector<double>> l2_gaps, min_gaps;
  std::vector<double> svm_min_margins, svm_nuc_norms, final_losses,
      final_rel_gap;

  for (const std::uint64_t seed : seeds) {
    InteractionSet inst =
        gen_synthetic(nu, ni, inst_cfg.at("rank").get<int>(),
                      inst_cfg.at("noise").get<double>(),
                      Rng::derive(seed, 0).next_u64());
    std::vector<std::size_t> all_idx(inst.pairs.size());
    for (std::size_t k = 0; k < all_idx.size(); ++k) all_idx[k] = k;

    MarginProgram prog;
    prog.num_users = nu;
    prog.num_items = ni;
    prog.constraints = inst.pairs;
    NucSolveOptions nopts;
    nopts.tol = cfg.at("solver_tol").get<double>();
    const MatrixSolution sol = nucsvm_solve(prog, nopts);
    const Eigen::VectorXd ref = solution_margins(sol, prog);
    svm_min_margins.push_back(ref.minCoeff());
    svm_nuc_norms.push_back(sol.nuclear_norm);

    Architecture arch =
        arch_of(ModelKind::mcf, cfg.at("model"), nu, ni);
    ModelParams params = init_params(arch, init_of(cfg.at("model")),
                                     Rng::derive(seed, 1).next_u64());
    MarginGapReport report;
    TrainOptions topt =
        train_of(cfg.at("train"), Rng::derive(seed, 2).next_u64());
    topt.on_epoch = [&](int epoch, const ModelParams& p) {
      if (!cp_set.count(epoch)) return;
      report.rows.push_back(
          margin_compare(epoch, normalized_margins(p, inst, all_idx), ref));
    };
    TrainTrace trace = sgd_train(params, inst, all_idx, topt);

    CsvWriter csv({"epoch", "nuc_norm", "loss", "l2_gap", "min_margin_gap"});
    for (const auto& row : report.rows) {
      const TraceRow& tr = trace.rows.at(std::size_t(row.epoch) - 1);
      csv.append_row({std::to_string(row.epoch), format_double(tr.nuc_norm),
                      format_double(tr.loss), format_double(row.l2_gap),
                      format_double(row.min_margin_gap)});
      l2_gaps[row.epoch].push_back(row.l2_gap);
      min_gaps[row.epoch].push_back(row.min_margin_gap);
    }
    const std::string tag = "rep_" + std::to_string(seed);
    sink.write_text(tag + "/margin_convergence.csv", csv.str());
    sink.write_text(tag + "/trace.csv", trace.csv());
    final_losses.push_back(trace.rows.back().loss);
    final_rel_gap.push_back(
        std::abs(report.rows.back().min_margin_gap) / ref.minCoeff());
  }

  json by_epoch;
  for (const int cp : checkpoints) {
    by_epoch[std::to_string(cp)] = json{{"l2_gap", mean_std(l2_gaps[cp])},
                                        {"min_margin_gap",
                                         mean_std(min_gaps[cp])}};
  }
  agg["by_checkpoint"] = by_epoch;
  agg["svm_min_margin"] = mean_std(svm_min_margins);
  agg["svm_nuclear_norm"] = mean_std(svm_nuc_norms);
  agg["final_loss"] = mean_std(final_losses);
  agg["final_min_gap_over_svm_margin"] = mean_std(final_rel_gap);
  sink.write_json_file("aggregate.json", agg);
}

// ---- transductive-training -------------------------------------------------------

json bound_report(const ModelParams& params, const InteractionSet& set,
                  const SplitPlan& plan) {
  json out;
  Eigen::VectorXd margins = normalized_margins(params, set, plan.train);
  const double gamma = margins.minCoeff();
  out["min_normalized_margin"] = gamma;
  if (gamma <= 0) {
    out["term"] = nullptr;  // margin not attained; bound undefined
    return out;
  }
  BoundInputs in;
  in.gamma = gamma;
  in.n1 = double(plan.train.size());
  in.n2 = double(plan.test.size());
  in.beta = in.n2 / in.n1;
  in.num_users = double(set.num_users);
  in.num_items = double(set.num_items);
  if (params.arch.kind == ModelKind::mcf) {
    in.lambda_nuc = nuclear_norm_product(params);
    out["lambda_nuc"] = in.lambda_nuc;
    out["term"] = bound_term(BoundKind::transductive_mcf, in);
  } else {
    in.q = double(params.arch.hidden.size());
    double b_input = 0.0;
    for (std::size_t k : plan.train) {
      const auto& p = set.pairs[k];
      b_input = std::max(b_input, params.zu.row(p.user).norm() +
                                      params.zi.row(p.item).norm());
    }
    in.b_input = b_input;
    double prod = 1.0;
    for (const auto& w : params.w) {
      Eigen::BDCSVD<Eigen::MatrixXd> svd(w);
      prod *= svd.singularValues()(0);
    }
    in.prod_lambda = prod;
    out["b_input"] = in.b_input;
    out["prod_lambda"] = in.prod_lambda;
    out["term"] = in.q > 0 ? json(bound_term(BoundKind::transductive_ncf, in))
                           : json(nullptr);
  }
  return out;
}

void run_transductive_training(const json& cfg,
                               const std::vector<std::uint64_t>& seeds,
                               OutputSink& sink) {
  const RatingTable table = make_table(cfg.at("dataset"));
  const InteractionSet implicit =
      to_implicit(table, cfg.at("dataset").at("threshold").get<double>());
  if (implicit.pairs.empty()) fail("no positive interactions above threshold");
  const int npp = cfg.at("dataset").at("negatives_per_positive").get<int>();
  const int hr_k = cfg.at("hr_k").get<int>();
  const std::string mode = cfg.at("split").at("mode").get<std::string>();
  const auto archs = cfg.at("archs").get<std::vector<std::string>>();

  json agg;
  std::map<std::string, std::vector<double>> final_auc, final_hr, final_ndcg,
      final_loss, bound_terms;

  for (const std::uint64_t seed : seeds) {
    InteractionSet set =
        sample_negatives(implicit, npp, Rng::derive(seed, 1).next_u64());
    SplitPlan plan =
        mode == "leave_last"
            ? split_leave_last(set)
            : split_transductive(set,
                                 cfg.at("split").at("beta").get<double>(),
                                 Rng::derive(seed, 2).next_u64());
    if (plan.train.empty() || plan.test.empty())
      fail("split left no usable train/test pairs");

    CsvWriter csv({"epoch", "arch", "loss", "l2_norm", "nuc_norm",
                   "min_margin", "smoothed_margin", "auc", "hr", "ndcg"});
    const std::string tag = "rep_" + std::to_string(seed);
    json rep_bounds;

    for (std::size_t a = 0; a < archs.size(); ++a) {
      const ModelKind kind = model_kind_from_string(archs[a]);
      Architecture arch =
          arch_of(kind, cfg.at("model"), set.num_users, set.num_items);
      ModelParams params = init_params(arch, init_of(cfg.at("model")),
                                       Rng::derive(seed, 10 + a).next_u64());
      struct EpochMetrics {
        double auc, hr, ndcg;
      };
      std::vector<EpochMetrics> per_epoch;
      TrainOptions topt =
          train_of(cfg.at("train"), Rng::derive(seed, 20 + a).next_u64());
      topt.on_epoch = [&](int, const ModelParams& p) {
        auto rows = evaluate_heldout(
            set, plan.train, plan.test,
            [&](int u, int i) { return forward(p, u, i); }, hr_k, nullptr);
        if (rows.empty()) fail("held-out evaluation produced no rows");
        double auc = 0, hr = 0, ndcg = 0;
        for (const auto& r : rows) {
          auc += r.auc;
          hr += r.hr;
          ndcg += r.ndcg;
        }
        const double n = double(rows.size());
        per_epoch.push_back({auc / n, hr / n, ndcg / n});
      };
      TrainTrace trace = sgd_train(params, set, plan.train, topt);
      for (std::size_t e = 0; e < trace.rows.size(); ++e) {
        const TraceRow& tr = trace.rows[e];
        const EpochMetrics& em = per_epoch.at(e);
        csv.append_row({std::to_string(tr.epoch), archs[a],
                        format_double(tr.loss), format_double(tr.l2_norm),
                        format_double(tr.nuc_norm),
                        format_double(tr.min_margin),
                        format_double(tr.smoothed_margin),
                        format_double(em.auc), format_double(em.hr),
                        format_double(em.ndcg)});
      }
      final_auc[archs[a]].push_back(per_epoch.back().auc);
      final_hr[archs[a]].push_back(per_epoch.back().hr);
      final_ndcg[archs[a]].push_back(per_epoch.back().ndcg);
      final_loss[archs[a]].push_back(trace.rows.back().loss);
      json b = bound_report(params, set, plan);
      rep_bounds[archs[a]] = b;
      if (!b.at("term").is_null())
        bound_terms[archs[a]].push_back(b.at("term").get<double>());
    }
    sink.write_text(tag + "/training.csv", csv.str());
    sink.write_json_file(tag + "/bounds.json", rep_bounds);
  }

  for (const auto& a : archs) {
    agg[a] = json{{"final_auc", mean_std(final_auc[a])},
                  {"final_hr", mean_std(final_hr[a])},
                  {"final_ndcg", mean_std(final_ndcg[a])},
                  {"final_loss", mean_std(final_loss[a])},
                  {"bound_term", mean_std(bound_terms[a])},
                  {"bound_terms_defined", bound_terms[a].size()}};
  }
  sink.write_json_file("aggregate.json", agg);
}

// ---- exposure-sweep ---------------------------------------------------------------

void run_exposure_sweep(const json& cfg,
                        const std::vector<std::uint64_t>& seeds,
                        OutputSink& sink) {
  const RatingTable table = make_table(cfg.at("dataset"));
  const int hr_k = cfg.at("hr_k").get<int>();
  const int npp = cfg.at("dataset").at("negatives_per_positive").get<int>();
  const auto sources = cfg.at("sources").get<std::vector<std::string>>();
  const auto archs = cfg.at("archs").get<std::vector<std::string>>();
  const auto pi_grid = cfg.at("pi_grid").get<std::vector<double>>();
  const auto& mech = cfg.at("mechanism");

  AdamOptions adam;
  adam.lr = mech.at("lr").get<double>();
  adam.epochs = mech.at("epochs").get<int>();
  const double mu = mech.at("mu").get<double>();
  const double rho = mech.at("rho").get<double>();
  InitSpec mech_init;
  mech_init.kind = InitSpec::Kind::scaled;
  mech_init.value = mech.at("init_value").get<double>();

  // source -> arch -> pi -> per-seed values
  using SeriesMap =
      std::map<std::string, std::map<std::string, std::map<double,
                                                           std::vector<double>>>>;
  SeriesMap biased, unbiased;

  for (const std::uint64_t seed : seeds) {
    const std::string tag = "rep_" + std::to_string(seed);
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const ModelKind src_kind = model_kind_from_string(sources[s]);
      Architecture mech_arch;
      mech_arch.kind = src_kind;
      mech_arch.num_users = table.num_users;
      mech_arch.num_items = table.num_items;
      mech_arch.d = mech.at("d").get<int>();
      if (src_kind != ModelKind::mcf)
        mech_arch.hidden = mech.at("hidden").get<std::vector<int>>();
      mech_arch.validate();

      ModelParams g_rel =
          fit_relevance(table, mech_arch, mech_init, adam,
                        Rng::derive(seed, 100 + s).next_u64());
      ModelParams g_exp =
          fit_exposure(table, mech_arch, mech_init, adam,
                       Rng::derive(seed, 110 + s).next_u64());
      const Eigen::MatrixXd p_rel = relevance_prob(g_rel, mu, rho);
      // The fitted mechanism can push never-observed cells to sigmoid scores
      // below the IPW floor; clamp the design field so every mixture of it
      // stays weightable.  Clamped cells are effectively never exposed, so
      // they cannot anchor a ranking row.
      const Eigen::MatrixXd p_design =
          design_exposure(g_exp).cwiseMax(1e-5).eval();

      CsvWriter csv({"pi", "arch", "biased_auc", "unbiased_auc"});
      for (std::size_t g = 0; g < pi_grid.size(); ++g) {
        const double pi = pi_grid[g];
        const Eigen::MatrixXd p_obs = mixture_exposure(p_design, pi);
        const Eigen::MatrixXd weights = ipw_weights(p_obs);
        const Eigen::MatrixXi clicks = sample_clicks(
            p_rel, p_obs,
            Rng::derive(seed, 1000 + 100 * s + g).next_u64());

        // Per-user holdout: one positive click per user with >= 2 clicks is
        // the ranking target; remaining positives train.
        InteractionSet cs;
        cs.num_users = table.num_users;
        cs.num_items = table.num_items;
        std::vector<std::size_t> train_idx, test_idx;
        Rng hold = Rng::derive(seed, 2000 + 100 * s + g);
        for (int u = 0; u < cs.num_users; ++u) {
          std::vector<int> pos;
          for (int i = 0; i < cs.num_items; ++i)
            if (clicks(u, i) == 1) pos.push_back(i);
          if (pos.empty()) continue;
          std::size_t held = pos.size() >= 2 ? std::size_t(hold.below(pos.size()))
                                             : std::size_t(pos.size());
          for (std::size_t k = 0; k < pos.size(); ++k) {
            LabeledPair p;
            p.user = u;
            p.item = pos[k];
            p.label = 1;
            if (k == held)
              test_idx.push_back(cs.pairs.size());
            else
              train_idx.push_back(cs.pairs.size());
            cs.pairs.push_back(p);
          }
        }
        if (test_idx.empty())
          fail("click data too sparse for held-out evaluation (pi=" +
               format_double(pi) + ")");
        const std::size_t before = cs.pairs.size();
        InteractionSet full = sample_negatives(
            cs, npp, Rng::derive(seed, 3000 + 100 * s + g).next_u64());
        for (std::size_t k = before; k < full.pairs.size(); ++k)
          train_idx.push_back(k);

        for (std::size_t a = 0; a < archs.size(); ++a) {
          const ModelKind kind = model_kind_from_string(archs[a]);
          Architecture arch =
              arch_of(kind, cfg.at("model"), cs.num_users, cs.num_items);
          ModelParams params = init_params(
              arch, init_of(cfg.at("model")),
              Rng::derive(seed, 4000 + 1000 * s + 20 * g + a).next_u64());
          TrainOptions topt = train_of(
              cfg.at("train"),
              Rng::derive(seed, 20000 + 1000 * s + 20 * g + a).next_u64());
          sgd_train(params, full, train_idx, topt);

          auto rows = evaluate_heldout(
              full, train_idx, test_idx,
              [&](int u, int i) { return forward(params, u, i); }, hr_k,
              &weights);
          if (rows.empty()) fail("held-out evaluation produced no rows");
          const AucSummary sum = summarize_auc(rows);
          csv.append_row({format_double(pi), archs[a],
                          format_double(sum.biased),
                          format_double(sum.unbiased)});
          biased[sources[s]][archs[a]][pi].push_back(sum.biased);
          unbiased[sources[s]][archs[a]][pi].push_back(sum.unbiased);
        }
      }
      sink.write_text(tag + "/exposure_" + sources[s] + ".csv", csv.str());
    }
  }

  json agg;
  for (const auto& src : sources) {
    for (const auto& a : archs) {
      json per_pi;
      double lo_b = 1e300, hi_b = -1e300, lo_u = 1e300, hi_u = -1e300;
      for (const double pi : pi_grid) {
        const json jb = mean_std(biased[src][a][pi]);
        const json ju = mean_std(unbiased[src][a][pi]);
        per_pi[format_double(pi)] = json{{"biased_auc", jb},
                                         {"unbiased_auc", ju}};
        const double mb = jb.at("mean").get<double>();
        const double mu_ = ju.at("mean").get<double>();
        lo_b = std::min(lo_b, mb);
        hi_b = std::max(hi_b, mb);
        lo_u = std::min(lo_u, mu_);
        hi_u = std::max(hi_u, mu_);
      }
      agg[src][a] = json{{"by_pi", per_pi},
                         {"biased_range", hi_b - lo_b},
                         {"unbiased_range", hi_u - lo_u}};
    }
  }
  sink.write_json_file("aggregate.json", agg);
}

// ---- smoke overrides ---------------------------------------------------------------

json smoke_overrides(const std::string& experiment) {
  if (experiment == "kernel-vs-model")
    return json{{"dataset", json{{"gen_users", 120},
                                 {"gen_items", 120},
                                 {"num_users", 20},
                                 {"num_items", 20}}},
                {"model", json{{"d", 16}, {"hidden", json::array({8})}}},
                {"train", json{{"epochs", 40}}}};
  if (experiment == "margin-convergence")
    return json{{"instance", json{{"num_users", 8},
                                  {"num_items", 8},
                                  {"rank", 2}}},
                {"checkpoints", json::array({50, 200})},
                {"train", json{{"epochs", 200}}}};
  if (experiment == "transductive-training")
    return json{{"dataset", json{{"gen_users", 150},
                                 {"gen_items", 150},
                                 {"num_users", 40},
                                 {"num_items", 40}}},
                {"model", json{{"d", 16}, {"hidden", json::array({8})}}},
                {"train", json{{"epochs", 25}}}};
  if (experiment == "exposure-sweep")
    return json{{"dataset", json{{"gen_users", 120},
                                 {"gen_items", 120},
                                 {"num_users", 30},
                                 {"num_items", 30}}},
                {"pi_grid", json::array({0.0, 1.0})},
                {"mechanism", json{{"epochs", 500}}},
                {"train", json{{"epochs", 30}}}};
  fail("unknown experiment id: " + experiment);
}

}  // namespace

// ---- entry point ----------------------------------------------------------------

std::vector<std::string> run_experiment(const RunRequest& req) {
  if (std::find(kExperimentIds.begin(), kExperimentIds.end(),
                req.experiment) == kExperimentIds.end())
    fail("unknown experiment id: " + req.experiment +
         " (expected one of: kernel-vs-model, margin-convergence, "
         "transductive-training, exposure-sweep)");

  json cfg = validate_config(req.experiment, req.user_config);
  if (req.smoke) {
    json user_plus = req.user_config.is_object() ? req.user_config : json::object();
    merge_checked(cfg, smoke_overrides(req.experiment), "");
    // user-specified values still win over the smoke shrink
    merge_checked(cfg, user_plus, "");
  }

  std::vector<std::uint64_t> seeds;
  if (!req.seed_override.empty()) {
    seeds = req.seed_override;
  } else {
    for (const auto& s : cfg.at("seeds"))
      seeds.push_back(s.get<std::uint64_t>());
  }
  if (req.smoke && seeds.size() > 2) seeds.resize(2);
  {
    json js = json::array();
    for (auto s : seeds) js.push_back(s);
    cfg["seeds"] = js;
  }

  OutputSink sink;
  sink.root = fs::path(req.out_dir);
  fs::create_directories(sink.root);

  if (req.experiment == "kernel-vs-model")
    run_kernel_vs_model(cfg, seeds, sink);
  else if (req.experiment == "margin-convergence")
    run_margin_convergence(cfg, seeds, sink);
  else if (req.experiment == "transductive-training")
    run_transductive_training(cfg, seeds, sink);
  else
    run_exposure_sweep(cfg, seeds, sink);

  json manifest;
  manifest["experiment"] = req.experiment;
  manifest["smoke"] = req.smoke;
  manifest["config"] = cfg;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                (unsigned long long)fnv1a64(req.experiment + "\n" +
                                            cfg.dump() +
                                            (req.smoke ? "#smoke" : "")));
  manifest["config_hash"] = std::string(hex);
  {
    json js = json::array();
    for (auto s : seeds) js.push_back(s);
    manifest["seeds"] = js;
  }
  manifest["module_versions"] = json{
      {"dataset", "1.0.0"}, {"models", "1.0.0"},  {"kernels", "1.0.0"},
      {"maxmargin", "1.0.0"}, {"exposure", "1.0.0"}, {"eval", "1.0.0"},
      {"cli", "1.0.0"}};
  std::sort(sink.files.begin(), sink.files.end());
  manifest["outputs"] = sink.files;
  write_json((sink.root / "manifest.json").string(), manifest);
  sink.files.push_back("manifest.json");
  return sink.files;
}

}  // namespace cfml
