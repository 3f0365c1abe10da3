#pragma once

// Ranking evaluation, importance-weighted aggregation, divergence measures,
// generalization-bound complexity terms, and a Monte-Carlo estimator of the
// transductive Rademacher complexity of nuclear-norm balls.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cfml {

// Rank of the relevant item among candidates (1-based). Ties are broken
// deterministically: items scoring strictly higher come first, and among
// equal scores the smaller item id wins. Requires >= 2 candidates and the
// relevant item present.
int rank_of(const std::vector<int>& candidate_items,
            const Eigen::VectorXd& scores, int relevant_item);

struct RankingMetrics {
  double auc = 0.0;   // (n - r) / (n - 1)
  double hr = 0.0;    // 1[r <= k]
  double ndcg = 0.0;  // 1[r <= k] / log2(r + 1)
};

RankingMetrics ranking_metrics(int rank, int num_candidates, int k);

// Per-user evaluation row; `weight` is the inverse propensity of the user's
// relevant test cell and `unbiased_auc` = auc * weight (raw, un-normalized).
struct UserEval {
  int user = 0;
  int rank = 0;
  double auc = 0.0;
  double hr = 0.0;
  double ndcg = 0.0;
  double weight = 1.0;
  double unbiased_auc = 0.0;
};

std::string user_eval_csv(const std::vector<UserEval>& rows);
void save_user_eval(const std::vector<UserEval>& rows,
                    const std::string& path);

struct AucSummary {
  double biased = 0.0;           // plain mean of per-user AUC
  double unbiased = 0.0;         // self-normalized: sum(w*auc)/sum(w)
  double unbiased_raw = 0.0;     // mean of w*auc (scale-sensitive)
};
AucSummary summarize_auc(const std::vector<UserEval>& rows);

// ---- divergences -------------------------------------------------------------

// Second-moment ratio sum p_k^2 / q_k over aligned distributions; rejects
// negative mass, mass not summing to 1 (1e-9 tolerance), and q_k = 0 where
// p_k > 0. divergence_d2 subtracts 1 (chi-square form); d1 = d2 + 1 exactly.
double divergence_d1(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double divergence_d2(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// ---- bound complexity terms ---------------------------------------------------

enum class BoundKind {
  transductive_ncf,
  transductive_mcf,
  inductive_ncf,
  inductive_mcf,
};

struct BoundInputs {
  double q = 0;            // hidden-layer count of the network family
  double b_input = 0;      // bound on combined embedding-input norm
  double prod_lambda = 0;  // product of per-layer norm caps
  double lambda_nuc = 0;   // nuclear-norm cap
  double gamma = 0;        // margin
  double beta = 0;         // test/train ratio (transductive)
  double n1 = 0;           // training count
  double n2 = 0;           // test count (transductive)
  double num_users = 0;
  double num_items = 0;
  double d1 = 0;           // second-moment ratio (inductive)
  double d2 = 0;           // chi-square divergence (inductive)
};

// The bracketed complexity expression for the chosen bound, with no absolute
// constants. Errors out when a required field is missing or nonpositive.
double bound_term(BoundKind kind, const BoundInputs& in);

// ---- transductive Rademacher complexity ---------------------------------------

struct RademacherEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double eps_sq_mean = 0.0;  // empirical E[eps^2], exactly 2*p0 in expectation
  double p0 = 0.0;
  int samples = 0;
};

// Monte-Carlo mean of (1/n1 + 1/n2) * lambda_nuc * ||Sigma||_spectral where
// Sigma has i.i.d. three-valued entries: +1 and -1 with probability
// p0 = n1*n2/(n1+n2)^2 each, else 0.
RademacherEstimate rademacher_mc(int num_users, int num_items, double n1,
                                 double n2, double lambda_nuc, int samples,
                                 std::uint64_t seed);

}  // namespace cfml
