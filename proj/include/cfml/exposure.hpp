#pragma once

// Click simulation with explicit exposure control.
//
// A click happens when an item is both relevant and observed:
//     p(Y=1 | u,i) = p(R=1 | u,i) * p(O=1 | u,i).
// Relevance comes from a score model g_rel fitted to ratings by MSE and
// sharpened through p(R) = sigmoid(g_rel - mu)^rho (mu=3, rho=2 defaults,
// which keeps the simulated positive rate near the source data's). Exposure
// comes from a score model g_exp fitted by binary cross-entropy against
// rated-vs-unrated cells; the design field sigmoid(g_exp) is mixed with a
// uniform field of equal mass: P_O = pi * P_design + (1-pi) * P_unif.

#include <cstdint>

#include <Eigen/Dense>

#include "cfml/dataset.hpp"
#include "cfml/models.hpp"

namespace cfml {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 400;
};

// MSE regression of observed ratings with full-batch Adam; no held-out split
// (the fit is a simulation mechanism, not an evaluated model).
ModelParams fit_relevance(const RatingTable& table, const Architecture& arch,
                          const InitSpec& init, const AdamOptions& opts,
                          std::uint64_t seed);

// Binary cross-entropy: every rated cell is a positive example and one
// unrated cell per positive (uniform, without replacement per user) is a
// negative example.
ModelParams fit_exposure(const RatingTable& table, const Architecture& arch,
                         const InitSpec& init, const AdamOptions& opts,
                         std::uint64_t seed);

// p(R=1) field: sigmoid(g_rel - mu)^rho over every cell.
Eigen::MatrixXd relevance_prob(const ModelParams& g_rel, double mu = 3.0,
                               double rho = 2.0);

// Design exposure field sigmoid(g_exp) over every cell.
Eigen::MatrixXd design_exposure(const ModelParams& g_exp);

// pi * design + (1-pi) * uniform, where the uniform field is the constant
// mean of the design field (mass preserving). Requires pi in [0,1] and
// design entries in (0,1].
Eigen::MatrixXd mixture_exposure(const Eigen::MatrixXd& design, double pi);

// One Bernoulli click per cell with probability p_rel .* p_obs, drawn in
// row-major order from the seeded stream; +1 on click, -1 otherwise.
Eigen::MatrixXi sample_clicks(const Eigen::MatrixXd& p_rel,
                              const Eigen::MatrixXd& p_obs,
                              std::uint64_t seed);

// Elementwise 1/p(O). Any entry below `floor` aborts naming the cell, so a
// degenerate propensity can never silently blow up a weighted estimate.
Eigen::MatrixXd ipw_weights(const Eigen::MatrixXd& p_obs,
                            double floor = 1e-6);

}  // namespace cfml
