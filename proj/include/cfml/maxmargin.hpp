#pragma once

// Nuclear-norm margin programs:
//     minimize ||W||_*  subject to  y_k * W[u_k, i_k] >= 1 for all k.
//
// Two independent algorithms are provided on purpose:
//   - nucsvm_solve: proximal gradient on a squared-hinge penalty with
//     singular-value soft-thresholding and geometric penalty continuation
//     (the production path);
//   - nucsvm_oracle: projected gradient on a Huber-smoothed spectrum over the
//     feasible box (per-cell clamping), with smoothing continuation. It keeps
//     every iterate feasible, shares no code with the solver, and exists so
//     the solver's answers can be cross-checked against an algorithmically
//     unrelated method.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfml/dataset.hpp"

namespace cfml {

struct MarginProgram {
  int num_users = 0;
  int num_items = 0;
  // Only (user, item, label) are used; at most one constraint per cell.
  std::vector<LabeledPair> constraints;

  void validate() const;  // bounds, duplicates, labels, size cap (500x500)
};

struct MatrixSolution {
  Eigen::MatrixXd w;
  double nuclear_norm = 0.0;
  double max_violation = 0.0;   // max(0, 1 - min_k y_k W[u_k,i_k])
  double duality_gap = 0.0;     // certified estimate, reported not asserted
  int iterations = 0;
  bool converged = false;
};

struct NucSolveOptions {
  double tol = 1e-6;
  double penalty_start = 1.0;
  double penalty_end = 1e6;
  double penalty_factor = 10.0;
  int max_inner = 5000;
};

MatrixSolution nucsvm_solve(const MarginProgram& prog,
                            const NucSolveOptions& opts = {});

struct NucOracleOptions {
  double mu_start = 1e-1;   // Huber smoothing width
  double mu_end = 1e-7;
  double mu_factor = 10.0;
  int max_inner = 20000;
  double inner_tol = 1e-12; // relative objective change
};

MatrixSolution nucsvm_oracle(const MarginProgram& prog,
                             const NucOracleOptions& opts = {});

// Binary matrix payload plus a JSON sidecar carrying the scalar diagnostics.
void save_solution(const MatrixSolution& sol, const std::string& matrix_path,
                   const std::string& sidecar_path);
MatrixSolution load_solution(const std::string& matrix_path,
                             const std::string& sidecar_path);

// ---- margin comparison ------------------------------------------------------

struct MarginGapRow {
  int epoch = 0;
  double l2_gap = 0.0;         // || gamma_model - gamma_ref ||_2
  double min_margin_gap = 0.0; // min(gamma_model) - min(gamma_ref)
};

MarginGapRow margin_compare(int epoch, const Eigen::VectorXd& model_margins,
                            const Eigen::VectorXd& ref_margins);

struct MarginGapReport {
  std::vector<MarginGapRow> rows;
  std::string csv() const;  // epoch,l2_gap,min_margin_gap
  void save_csv(const std::string& path) const;
};

// Normalized margins y_k W[u_k,i_k] / ||W||_* of a solution on a program's
// constraint list (shared reference for gap computations).
Eigen::VectorXd solution_margins(const MatrixSolution& sol,
                                 const MarginProgram& prog);

}  // namespace cfml
