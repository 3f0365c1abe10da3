#include "cfml/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace cfml {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Full-batch Adam over all parameter tensors of a score model. The gradient
// callback fills a ModelGrads for the current parameters.
template <typename GradFn>
void adam_fit(ModelParams& p, const AdamOptions& opts, GradFn&& grad_fn) {
  if (opts.lr <= 0 || opts.epochs < 0) fail("adam: bad lr/epochs");
  ModelGrads m = zero_grads(p), v = zero_grads(p);
  auto update = [&](Eigen::MatrixXd& theta, Eigen::MatrixXd& m1,
                    Eigen::MatrixXd& m2, const Eigen::MatrixXd& g,
                    double bias1, double bias2) {
    m1 = opts.beta1 * m1 + (1.0 - opts.beta1) * g;
    m2 = opts.beta2 * m2.array().matrix() +
         (1.0 - opts.beta2) * g.array().square().matrix();
    const Eigen::ArrayXXd mhat = m1.array() / bias1;
    const Eigen::ArrayXXd vhat = m2.array() / bias2;
    theta.array() -= opts.lr * mhat / (vhat.sqrt() + opts.eps);
  };
  for (int t = 1; t <= opts.epochs; ++t) {
    ModelGrads g = grad_fn(p);
    const double bias1 = 1.0 - std::pow(opts.beta1, t);
    const double bias2 = 1.0 - std::pow(opts.beta2, t);
    update(p.zu, m.zu, v.zu, g.zu, bias1, bias2);
    update(p.zi, m.zi, v.zi, g.zi, bias1, bias2);
    for (std::size_t k = 0; k < p.w.size(); ++k)
      update(p.w[k], m.w[k], v.w[k], g.w[k], bias1, bias2);
    if (!std::isfinite(p.l2_norm())) fail("adam: parameters diverged");
  }
}

}  // namespace

ModelParams fit_relevance(const RatingTable& table, const Architecture& arch,
                          const InitSpec& init, const AdamOptions& opts,
                          std::uint64_t seed) {
  table.validate();
  if (table.rows.empty()) fail("fit_relevance: empty rating table");
  if (arch.num_users != table.num_users || arch.num_items != table.num_items)
    fail("fit_relevance: architecture shape mismatch");
  ModelParams p = init_params(arch, init, seed);
  const double inv = 1.0 / double(table.rows.size());
  adam_fit(p, opts, [&](const ModelParams& cur) {
    ModelGrads g = zero_grads(cur);
    for (const auto& r : table.rows) {
      const double f = forward(cur, r.user, r.item);
      // d/df of (f - rating)^2, averaged
      accumulate_forward_grad(cur, r.user, r.item,
                              2.0 * inv * (f - r.rating), g);
    }
    return g;
  });
  return p;
}

ModelParams fit_exposure(const RatingTable& table, const Architecture& arch,
                         const InitSpec& init, const AdamOptions& opts,
                         std::uint64_t seed) {
  table.validate();
  if (table.rows.empty()) fail("fit_exposure: empty rating table");
  if (arch.num_users != table.num_users || arch.num_items != table.num_items)
    fail("fit_exposure: architecture shape mismatch");

  // Rated cells are positives; one uniformly drawn unrated cell per positive
  // (per user, without replacement) is a negative.
  struct Cell {
    int user, item, label;  // label in {0,1}
  };
  std::vector<Cell> cells;
  std::vector<std::vector<int>> rated(table.num_users);
  for (const auto& r : table.rows) {
    cells.push_back({r.user, r.item, 1});
    rated[r.user].push_back(r.item);
  }
  for (int u = 0; u < table.num_users; ++u) {
    if (rated[u].empty()) continue;
    std::unordered_set<int> taken(rated[u].begin(), rated[u].end());
    std::vector<int> pool;
    pool.reserve(table.num_items - taken.size());
    for (int i = 0; i < table.num_items; ++i)
      if (!taken.count(i)) pool.push_back(i);
    const std::size_t want = std::min(pool.size(), rated[u].size());
    Rng rng = Rng::derive(seed ^ 0x5eedf00dull, std::uint64_t(u));
    auto picks = rng.sample_without_replacement(pool.size(), want);
    std::sort(picks.begin(), picks.end());
    for (std::size_t k : picks) cells.push_back({u, pool[k], 0});
  }
  if (cells.size() == table.rows.size())
    fail("fit_exposure: every cell is rated; no unexposed cells to contrast");

  ModelParams p = init_params(arch, init, seed);
  const double inv = 1.0 / double(cells.size());
  adam_fit(p, opts, [&](const ModelParams& cur) {
    ModelGrads g = zero_grads(cur);
    for (const auto& c : cells) {
      const double f = forward(cur, c.user, c.item);
      // d/df of the logistic cross-entropy, averaged
      accumulate_forward_grad(cur, c.user, c.item,
                              inv * (sigmoid(f) - double(c.label)), g);
    }
    return g;
  });
  return p;
}

Eigen::MatrixXd relevance_prob(const ModelParams& g_rel, double mu,
                               double rho) {
  if (rho <= 0) fail("relevance_prob: rho must be > 0");
  Eigen::MatrixXd out(g_rel.arch.num_users, g_rel.arch.num_items);
  for (int u = 0; u < g_rel.arch.num_users; ++u)
    for (int i = 0; i < g_rel.arch.num_items; ++i)
      out(u, i) = std::pow(sigmoid(forward(g_rel, u, i) - mu), rho);
  return out;
}

Eigen::MatrixXd design_exposure(const ModelParams& g_exp) {
  Eigen::MatrixXd out(g_exp.arch.num_users, g_exp.arch.num_items);
  for (int u = 0; u < g_exp.arch.num_users; ++u)
    for (int i = 0; i < g_exp.arch.num_items; ++i)
      out(u, i) = sigmoid(forward(g_exp, u, i));
  return out;
}

Eigen::MatrixXd mixture_exposure(const Eigen::MatrixXd& design, double pi) {
  if (!(pi >= 0.0 && pi <= 1.0)) fail("mixture_exposure: pi must be in [0,1]");
  if (design.size() == 0) fail("mixture_exposure: empty design field");
  double lo = design.minCoeff(), hi = design.maxCoeff();
  if (lo <= 0.0 || hi > 1.0)
    fail("mixture_exposure: design entries must be in (0,1]");
  const double unif = design.mean();
  return pi * design +
         (1.0 - pi) * unif *
             Eigen::MatrixXd::Ones(design.rows(), design.cols());
}

Eigen::MatrixXi sample_clicks(const Eigen::MatrixXd& p_rel,
                              const Eigen::MatrixXd& p_obs,
                              std::uint64_t seed) {
  if (p_rel.rows() != p_obs.rows() || p_rel.cols() != p_obs.cols())
    fail("sample_clicks: field shape mismatch");
  if (p_rel.minCoeff() < 0 || p_rel.maxCoeff() > 1 || p_obs.minCoeff() < 0 ||
      p_obs.maxCoeff() > 1)
    fail("sample_clicks: probabilities must lie in [0,1]");
  Rng rng(seed);
  Eigen::MatrixXi y(p_rel.rows(), p_rel.cols());
  for (Eigen::Index u = 0; u < p_rel.rows(); ++u)
    for (Eigen::Index i = 0; i < p_rel.cols(); ++i)
      y(u, i) = rng.uniform() < p_rel(u, i) * p_obs(u, i) ? 1 : -1;
  return y;
}

Eigen::MatrixXd ipw_weights(const Eigen::MatrixXd& p_obs, double floor) {
  if (floor <= 0) fail("ipw_weights: floor must be > 0");
  Eigen::MatrixXd w(p_obs.rows(), p_obs.cols());
  for (Eigen::Index u = 0; u < p_obs.rows(); ++u)
    for (Eigen::Index i = 0; i < p_obs.cols(); ++i) {
      if (p_obs(u, i) <= floor)
        fail("ipw_weights: propensity below floor at cell (" +
             std::to_string(u) + "," + std::to_string(i) + ")");
      w(u, i) = 1.0 / p_obs(u, i);
    }
  return w;
}

}  // namespace cfml
