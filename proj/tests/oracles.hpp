#pragma once

// Independent reference implementations for the test suite.
//
// Everything in this header is deliberately written against the standard
// library (<random>, <cmath>) and plain loops so that the code under test
// shares no code path with its oracle. Expected values produced here are
// frozen into the tests; the oracles themselves are sanity-checked against
// closed-form constants below.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cfml/models.hpp"

namespace oracle {

// Index-overlap regimes between two (user,item) pairs.
enum Regime { same_pair = 0, share_user = 1, share_item = 2, disjoint = 3 };

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

// Monte-Carlo expectation of the wide-width tangent-kernel integrand for the
// minimal rectified stack, in the unit-variance convention. Draws everything
// fresh from std-normal variates:
//   add:    x = g + h (user + item coordinate), rectified, output weight v;
//   concat: separate user block b and item block a, each with its own output
//           weight, shared with the second pair exactly where the indices
//           overlap.
// The leading factor 2 matches the rectified-stack variance convention.
inline McEstimate mc_ntk(cfml::ModelKind kind, Regime regime, long draws,
                         unsigned seed) {
  if (kind == cfml::ModelKind::mcf)
    throw std::invalid_argument("mc_ntk covers the rectified stacks only");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  auto relu = [](double x) { return x > 0.0 ? x : 0.0; };
  double sum = 0.0, sumsq = 0.0;
  const bool same_user = (regime == same_pair || regime == share_user);
  const bool same_item = (regime == same_pair || regime == share_item);
  for (long t = 0; t < draws; ++t) {
    double value;
    if (kind == cfml::ModelKind::ncf_add) {
      const double g = N(gen), h = N(gen), g2 = N(gen), h2 = N(gen),
                   v = N(gen);
      const double s = g + h;
      const double tt = (same_user ? g : g2) + (same_item ? h : h2);
      const double overlap = double(same_user) + double(same_item);
      value = 2.0 * (relu(s) * relu(tt) +
                     overlap * v * v * double(s >= 0.0 && tt >= 0.0));
    } else {  // ncf_concat
      const double a = N(gen), a2 = N(gen), b = N(gen), b2 = N(gen),
                   v1 = N(gen), v2 = N(gen);
      const double ao = same_item ? a : a2;
      const double bo = same_user ? b : b2;
      value = 2.0 * (relu(a) * relu(ao) + relu(b) * relu(bo) +
                     double(same_item) * v1 * v1 *
                         double(a >= 0.0 && ao >= 0.0) +
                     double(same_user) * v2 * v2 *
                         double(b >= 0.0 && bo >= 0.0));
    }
    sum += value;
    sumsq += value * value;
  }
  McEstimate e;
  e.mean = sum / double(draws);
  const double var = (sumsq / double(draws)) - e.mean * e.mean;
  e.se = std::sqrt(std::max(var, 0.0) / double(draws));
  return e;
}

// Closed-form limits of the integrand above, used to sanity-check the MC
// oracle itself (not the code under test). For correlated rectified pairs,
//   E[relu(X)relu(Y)] = (sqrt(1-rho^2) + rho(pi/2 + asin rho)) / (2 pi)
// for standard bivariate normals with correlation rho, and
//   P(X>=0, Y>=0) = 1/4 + asin(rho) / (2 pi).
inline double analytic_ntk_limit(cfml::ModelKind kind, Regime regime) {
  const double pi = std::acos(-1.0);
  auto e_rect = [&](double rho) {
    return (std::sqrt(1.0 - rho * rho) + rho * (pi / 2 + std::asin(rho))) /
           (2 * pi);
  };
  if (kind == cfml::ModelKind::ncf_add) {
    switch (regime) {
      case same_pair:
        return 4.0;
      case share_user:
      case share_item:
        // s,t ~ N(0,2) with correlation 1/2; P(s>=0,t>=0) = 1/3.
        return 2.0 * (2.0 * e_rect(0.5) + 1.0 / 3.0);
      case disjoint:
        return 2.0 / pi;
    }
  } else if (kind == cfml::ModelKind::ncf_concat) {
    switch (regime) {
      case same_pair:
        return 4.0;
      case share_user:
      case share_item:
        return 2.0 + 1.0 / pi;
      case disjoint:
        return 2.0 / pi;
    }
  }
  throw std::invalid_argument("no analytic limit for this architecture");
}

// Central finite-difference gradient of forward() over every parameter.
inline cfml::ModelGrads fd_gradient(const cfml::ModelParams& p, int user,
                                    int item, double h = 1e-6) {
  cfml::ModelParams work = p;
  cfml::ModelGrads g = cfml::zero_grads(p);
  auto probe = [&](double& slot, double& out) {
    const double keep = slot;
    slot = keep + h;
    const double fp = cfml::forward(work, user, item);
    slot = keep - h;
    const double fm = cfml::forward(work, user, item);
    slot = keep;
    out = (fp - fm) / (2.0 * h);
  };
  for (Eigen::Index r = 0; r < work.zu.rows(); ++r)
    for (Eigen::Index c = 0; c < work.zu.cols(); ++c)
      probe(work.zu(r, c), g.zu(r, c));
  for (Eigen::Index r = 0; r < work.zi.rows(); ++r)
    for (Eigen::Index c = 0; c < work.zi.cols(); ++c)
      probe(work.zi(r, c), g.zi(r, c));
  for (std::size_t m = 0; m < work.w.size(); ++m)
    for (Eigen::Index r = 0; r < work.w[m].rows(); ++r)
      for (Eigen::Index c = 0; c < work.w[m].cols(); ++c)
        probe(work.w[m](r, c), g.w[m](r, c));
  return g;
}

// Brute-force rank by pairwise counting: 1 + #{stronger} + #{tied with a
// smaller item id}. Kept deliberately index-by-index.
inline int brute_rank(const std::vector<int>& items,
                      const Eigen::VectorXd& scores, int relevant) {
  int rel_pos = -1;
  for (std::size_t k = 0; k < items.size(); ++k)
    if (items[k] == relevant) rel_pos = int(k);
  if (rel_pos < 0) throw std::invalid_argument("relevant item missing");
  const double s_rel = scores(rel_pos);
  int rank = 1;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (int(k) == rel_pos) continue;
    if (scores(Eigen::Index(k)) > s_rel)
      ++rank;
    else if (scores(Eigen::Index(k)) == s_rel && items[k] < relevant)
      ++rank;
  }
  return rank;
}

// Brute-force AUC: fraction of non-relevant candidates the relevant item
// beats, ties broken toward the smaller item id.
inline double brute_auc(const std::vector<int>& items,
                        const Eigen::VectorXd& scores, int relevant) {
  int rel_pos = -1;
  for (std::size_t k = 0; k < items.size(); ++k)
    if (items[k] == relevant) rel_pos = int(k);
  if (rel_pos < 0) throw std::invalid_argument("relevant item missing");
  const double s_rel = scores(rel_pos);
  long wins = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (int(k) == rel_pos) continue;
    if (s_rel > scores(Eigen::Index(k)) ||
        (s_rel == scores(Eigen::Index(k)) && relevant < items[k]))
      ++wins;
  }
  return double(wins) / double(items.size() - 1);
}

}  // namespace oracle
