#include "cfml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfml/io.hpp"
#include "cfml/rng.hpp"

namespace cfml {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

}  // namespace

int rank_of(const std::vector<int>& candidate_items,
            const Eigen::VectorXd& scores, int relevant_item) {
  const std::size_t n = candidate_items.size();
  if (n < 2) fail("rank_of: need at least 2 candidates");
  if (scores.size() != Eigen::Index(n))
    fail("rank_of: score/candidate size mismatch");
  std::ptrdiff_t rel_pos = -1;
  for (std::size_t k = 0; k < n; ++k)
    if (candidate_items[k] == relevant_item) {
      rel_pos = std::ptrdiff_t(k);
      break;
    }
  if (rel_pos < 0) fail("rank_of: relevant item not among candidates");
  const double s_rel = scores(rel_pos);
  int rank = 1;
  for (std::size_t k = 0; k < n; ++k) {
    if (std::ptrdiff_t(k) == rel_pos) continue;
    if (scores(Eigen::Index(k)) > s_rel ||
        (scores(Eigen::Index(k)) == s_rel &&
         candidate_items[k] < relevant_item))
      ++rank;
  }
  return rank;
}

RankingMetrics ranking_metrics(int rank, int num_candidates, int k) {
  if (num_candidates < 2) fail("ranking_metrics: need >= 2 candidates");
  if (rank < 1 || rank > num_candidates) fail("ranking_metrics: rank range");
  if (k < 1) fail("ranking_metrics: cutoff must be >= 1");
  RankingMetrics m;
  m.auc = double(num_candidates - rank) / double(num_candidates - 1);
  m.hr = rank <= k ? 1.0 : 0.0;
  m.ndcg = rank <= k ? 1.0 / std::log2(double(rank) + 1.0) : 0.0;
  return m;
}

std::string user_eval_csv(const std::vector<UserEval>& rows) {
  CsvWriter csv(
      {"user", "rank", "auc", "hr", "ndcg", "weight", "unbiased_auc"});
  for (const auto& r : rows)
    csv.append_row({std::to_string(r.user), std::to_string(r.rank),
                    format_double(r.auc), format_double(r.hr),
                    format_double(r.ndcg), format_double(r.weight),
                    format_double(r.unbiased_auc)});
  return csv.str();
}

void save_user_eval(const std::vector<UserEval>& rows,
                    const std::string& path) {
  atomic_write_bytes(path, user_eval_csv(rows));
}

AucSummary summarize_auc(const std::vector<UserEval>& rows) {
  if (rows.empty()) fail("summarize_auc: no rows");
  AucSummary s;
  double wsum = 0.0;
  for (const auto& r : rows) {
    s.biased += r.auc;
    s.unbiased_raw += r.unbiased_auc;
    s.unbiased += r.unbiased_auc;
    wsum += r.weight;
  }
  s.biased /= double(rows.size());
  s.unbiased_raw /= double(rows.size());
  if (wsum <= 0) fail("summarize_auc: nonpositive weight mass");
  s.unbiased /= wsum;
  return s;
}

// ---- divergences -------------------------------------------------------------

double divergence_d1(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size() || p.size() == 0)
    fail("divergence: aligned nonempty distributions required");
  double ps = 0.0, qs = 0.0, acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p(k) < 0 || q(k) < 0) fail("divergence: negative mass");
    ps += p(k);
    qs += q(k);
    if (p(k) > 0) {
      if (q(k) == 0) fail("divergence: q vanishes where p has mass");
      acc += p(k) * p(k) / q(k);
    }
  }
  if (std::abs(ps - 1.0) > 1e-9 || std::abs(qs - 1.0) > 1e-9)
    fail("divergence: inputs must sum to 1");
  return acc;
}

double divergence_d2(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return divergence_d1(p, q) - 1.0;
}

// ---- bound complexity terms ----------------------------------------------------

namespace {

void need_positive(double v, const char* name) {
  if (!(v > 0)) fail(std::string("bound_term: ") + name + " must be > 0");
}

}  // namespace

double bound_term(BoundKind kind, const BoundInputs& in) {
  switch (kind) {
    case BoundKind::transductive_ncf: {
      need_positive(in.q, "q");
      need_positive(in.b_input, "b_input");
      need_positive(in.prod_lambda, "prod_lambda");
      need_positive(in.gamma, "gamma");
      need_positive(in.beta, "beta");
      need_positive(in.n1, "n1");
      return (1.0 + in.beta) * std::sqrt(in.q) * in.b_input * in.prod_lambda /
             (in.gamma * in.beta * std::sqrt(in.n1));
    }
    case BoundKind::transductive_mcf: {
      need_positive(in.lambda_nuc, "lambda_nuc");
      need_positive(in.gamma, "gamma");
      need_positive(in.beta, "beta");
      need_positive(in.n1, "n1");
      need_positive(in.num_users, "num_users");
      need_positive(in.num_items, "num_items");
      if (in.num_users < 2)
        fail("bound_term: transductive mcf needs num_users >= 2");
      return (1.0 + in.beta) * std::pow(std::log(in.num_users), 0.25) *
             std::sqrt(in.num_items) * in.lambda_nuc /
             (in.gamma * in.beta * in.n1);
    }
    case BoundKind::inductive_ncf: {
      need_positive(in.q, "q");
      need_positive(in.b_input, "b_input");
      need_positive(in.prod_lambda, "prod_lambda");
      need_positive(in.gamma, "gamma");
      need_positive(in.n1, "n1");
      if (in.d2 < 0) fail("bound_term: d2 must be >= 0");
      return std::sqrt(in.q) * in.b_input * in.prod_lambda *
             std::sqrt(in.d2 + 1.0) / (in.gamma * std::sqrt(in.n1));
    }
    case BoundKind::inductive_mcf: {
      need_positive(in.lambda_nuc, "lambda_nuc");
      need_positive(in.gamma, "gamma");
      need_positive(in.n1, "n1");
      need_positive(in.num_users, "num_users");
      need_positive(in.num_items, "num_items");
      need_positive(in.d1, "d1");
      return std::sqrt(in.d1 * (in.num_users + in.num_items) * in.lambda_nuc *
                       std::log(9.0 * in.n1)) /
             (in.gamma * std::sqrt(in.n1));
    }
  }
  fail("bound_term: unknown kind");
}

// ---- transductive Rademacher ---------------------------------------------------

RademacherEstimate rademacher_mc(int num_users, int num_items, double n1,
                                 double n2, double lambda_nuc, int samples,
                                 std::uint64_t seed) {
  if (num_users <= 0 || num_items <= 0) fail("rademacher_mc: empty shape");
  if (!(n1 > 0) || !(n2 > 0)) fail("rademacher_mc: n1, n2 must be > 0");
  if (!(lambda_nuc > 0)) fail("rademacher_mc: lambda_nuc must be > 0");
  if (samples <= 1) fail("rademacher_mc: need >= 2 samples");

  const double p0 = n1 * n2 / ((n1 + n2) * (n1 + n2));
  const double scale = (1.0 / n1 + 1.0 / n2) * lambda_nuc;
  Rng rng(seed);
  double sum = 0.0, sum_sq = 0.0, eps_sq = 0.0;
  const double total_cells = double(num_users) * double(num_items);
  Eigen::MatrixXd sigma(num_users, num_items);
  for (int s = 0; s < samples; ++s) {
    double cell_sq = 0.0;
    for (int u = 0; u < num_users; ++u)
      for (int i = 0; i < num_items; ++i) {
        const double x = rng.uniform();
        const double e = x < p0 ? 1.0 : (x < 2.0 * p0 ? -1.0 : 0.0);
        sigma(u, i) = e;
        cell_sq += e * e;
      }
    eps_sq += cell_sq / total_cells;
    double spec;
    if (num_users == 1 || num_items == 1) {
      spec = sigma.norm();  // rank-one shape: spectral = Euclidean norm
    } else {
      Eigen::BDCSVD<Eigen::MatrixXd> svd(sigma);
      spec = svd.singularValues()(0);
    }
    const double v = scale * spec;
    sum += v;
    sum_sq += v * v;
  }
  RademacherEstimate est;
  est.samples = samples;
  est.p0 = p0;
  est.mean = sum / samples;
  const double var =
      std::max(0.0, (sum_sq - sum * sum / samples) / (samples - 1));
  est.std_error = std::sqrt(var / samples);
  est.eps_sq_mean = eps_sq / samples;
  return est;
}

}  // namespace cfml
