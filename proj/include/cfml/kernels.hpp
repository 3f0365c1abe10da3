#pragma once

// Pairwise-indicator kernels over (user, item) pairs and their empirical
// counterparts.
//
// The closed-form family is
//     K((u,i),(u',i')) = a + b*1[i=i'] + c*1[u=u'],
// with per-architecture constants. The empirical tangent kernels probe the
// wide-width behaviour of the models at initialization:
//   - mcf: per-side masked tangent features,
//         K = 1[u=u']<z_u,z_u'> + 1[i=i']<z_i,z_i'>,
//     which agrees with the exact gradient inner product on the diagonal and
//     vanishes identically on fully disjoint pairs;
//   - ncf (minimal rectified stack only, i.e. no hidden matrices): the exact
//     gradient inner product across all parameters, reported in the
//     unit-variance convention (a 2/alpha rescale of the stored-parameter
//     Gram), so values are comparable across embedding scales.
//
// A hard-margin kernel SVM (dual coordinate ascent on a large-box soft
// margin, no intercept) consumes these kernels.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfml/models.hpp"

namespace cfml {

struct KernelSpec {
  double a = 0.0;  // constant offset
  double b = 0.0;  // coefficient of the shared-item indicator 1[i=i']
  double c = 0.0;  // coefficient of the shared-user indicator 1[u=u']
};

// Wide-width kernel constants per architecture. Embedding scales alpha1
// (user side) and alpha2 (item side) enter only the mcf form; the ncf
// constants are pinned at unit scale and reject anything else.
KernelSpec kcf_closed_form(ModelKind kind, double alpha1 = 1.0,
                           double alpha2 = 1.0);

double kcf_eval(const KernelSpec& spec, int u, int i, int u2, int i2);

// Symmetric Gram over a pair list.
Eigen::MatrixXd kcf_gram(const KernelSpec& spec,
                         const std::vector<std::pair<int, int>>& pairs);

void save_kernel_spec(const KernelSpec& spec, const std::string& path);
KernelSpec load_kernel_spec(const std::string& path);

// Empirical tangent kernel between pairs (u,i) and (u2,i2); see header note.
// ncf parameters must carry no hidden matrices.
double empirical_ntk(const ModelParams& p, int u, int i, int u2, int i2);

// Zeroth-order arc-cosine kernel 1 - acos(cos(x,y))/pi; rejects zero vectors.
double arccos_k0(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// ---- hard-margin kernel SVM -------------------------------------------------

struct SvmOptions {
  double C = 1e6;        // box bound approximating the hard margin
  double tol = 1e-6;     // max KKT violation at termination
  int max_sweeps = 200000;
  // Grams up to this size get an exact smallest-eigenvalue PSD pre-check
  // (threshold -1e-8 * trace); larger ones are accepted as-is.
  int psd_check_cap = 2048;
};

struct DualSolution {
  Eigen::VectorXd alpha;
  double kkt_violation = 0.0;
  int sweeps = 0;
  bool converged = false;
};

// Maximizes sum(alpha) - 1/2 alpha^T diag(y) K diag(y) alpha over
// 0 <= alpha <= C by cyclic coordinate ascent; no intercept term.
// Throws if the Gram fails the PSD pre-check or the sweep cap is hit
// before the KKT violation drops below tol.
DualSolution svm_train_dual(const Eigen::MatrixXd& gram,
                            const Eigen::VectorXi& y, const SvmOptions& opts);

// Trained predictor bound to a closed-form kernel. Because the kernel is a
// sum of indicator terms, prediction reduces to three lookups.
class KcfSvm {
 public:
  KcfSvm(const KernelSpec& spec, std::vector<std::pair<int, int>> pairs,
         Eigen::VectorXi y, const SvmOptions& opts = {});

  double predict(int u, int i) const;
  const DualSolution& solution() const { return sol_; }
  // Margin vector y_k * f_k / sqrt(2 * dual objective) is not exposed; raw
  // decision values are enough for ranking and margin comparisons.
  double decision(std::size_t train_index) const;

 private:
  KernelSpec spec_;
  std::vector<std::pair<int, int>> pairs_;
  Eigen::VectorXi y_;
  DualSolution sol_;
  double coef_sum_ = 0.0;                  // sum alpha_j y_j
  std::vector<double> coef_by_user_;       // per-user partial sums
  std::vector<double> coef_by_item_;       // per-item partial sums
};

}  // namespace cfml
