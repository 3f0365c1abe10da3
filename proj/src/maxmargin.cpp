#include "cfml/maxmargin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "cfml/io.hpp"

namespace cfml {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

double min_signed_margin(const Eigen::MatrixXd& w, const MarginProgram& p) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : p.constraints)
    m = std::min(m, double(c.label) * w(c.user, c.item));
  return m;
}

double nuclear_norm(const Eigen::MatrixXd& w) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w);
  return svd.singularValues().sum();
}

// Dual certificate: rescaled multipliers lambda~ = lambda / ||A||_sp with
// A = sum lambda_k y_k e_{u_k} e_{i_k}^T give a feasible dual point of
//   max sum(lambda) s.t. ||A(lambda)||_sp <= 1, lambda >= 0,
// so sum(lambda~) lower-bounds the optimum. The primal side is made feasible
// by rescaling W when it is slightly inside the margin.
double certified_gap(const Eigen::MatrixXd& w, const MarginProgram& prog,
                     const Eigen::VectorXd& lambda) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(prog.num_users, prog.num_items);
  for (std::size_t k = 0; k < prog.constraints.size(); ++k) {
    const auto& c = prog.constraints[k];
    a(c.user, c.item) += lambda(Eigen::Index(k)) * double(c.label);
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  const double spec = svd.singularValues().size() > 0
                          ? svd.singularValues()(0)
                          : 0.0;
  if (spec <= 0.0) return nuclear_norm(w);
  const double dual_value = lambda.sum() / spec;
  const double mm = min_signed_margin(w, prog);
  const double primal_value =
      mm > 0 ? nuclear_norm(w) / std::min(mm, 1.0)
             : std::numeric_limits<double>::infinity();
  return primal_value - dual_value;
}

}  // namespace

void MarginProgram::validate() const {
  if (num_users <= 0 || num_items <= 0) fail("margin program: empty shape");
  if (num_users > 500 || num_items > 500)
    fail("margin program exceeds the 500x500 dense-solver cap");
  if (constraints.empty()) fail("margin program: no constraints");
  std::unordered_set<std::uint64_t> seen;
  for (const auto& c : constraints) {
    if (c.user < 0 || c.user >= num_users || c.item < 0 ||
        c.item >= num_items)
      fail("margin program: constraint out of range");
    if (c.label != 1 && c.label != -1)
      fail("margin program: labels must be +1/-1");
    const std::uint64_t key =
        (std::uint64_t(std::uint32_t(c.user)) << 32) | std::uint32_t(c.item);
    if (!seen.insert(key).second)
      fail("margin program: duplicate constraint cell");
  }
}

// ---- production solver: squared-hinge penalty + SVT -------------------------

namespace {

double penalized_objective(const Eigen::MatrixXd& w, const MarginProgram& p,
                           double rho) {
  double hinge2 = 0.0;
  for (const auto& c : p.constraints) {
    const double h = std::max(0.0, 1.0 - double(c.label) * w(c.user, c.item));
    hinge2 += h * h;
  }
  return nuclear_norm(w) + 0.5 * rho * hinge2;
}

Eigen::MatrixXd penalty_gradient(const Eigen::MatrixXd& w,
                                 const MarginProgram& p, double rho) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  for (const auto& c : p.constraints) {
    const double h = std::max(0.0, 1.0 - double(c.label) * w(c.user, c.item));
    if (h > 0.0) g(c.user, c.item) -= rho * double(c.label) * h;
  }
  return g;
}

Eigen::MatrixXd svt(const Eigen::MatrixXd& v, double tau) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(
      v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index k = 0; k < s.size(); ++k)
    s(k) = std::max(0.0, s(k) - tau);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

MatrixSolution nucsvm_solve(const MarginProgram& prog,
                            const NucSolveOptions& opts) {
  prog.validate();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(prog.num_users, prog.num_items);
  int total_iters = 0;
  double last_rel_change = 1.0;
  double final_rho = opts.penalty_start;

  for (double rho = opts.penalty_start; rho <= opts.penalty_end * 1.0000001;
       rho *= opts.penalty_factor) {
    final_rho = rho;
    double step = 1.0 / rho;  // squared hinge has unit curvature per cell
    double obj = penalized_objective(w, prog, rho);
    for (int it = 0; it < opts.max_inner; ++it) {
      ++total_iters;
      const Eigen::MatrixXd g = penalty_gradient(w, prog, rho);
      Eigen::MatrixXd w_next;
      double obj_next = 0.0;
      int halvings = 0;
      for (;; ++halvings) {
        w_next = svt(w - step * g, step);
        obj_next = penalized_objective(w_next, prog, rho);
        if (obj_next <= obj + 1e-12 * std::max(1.0, std::abs(obj)) ||
            halvings >= 60)
          break;
        step *= 0.5;  // backtrack on objective increase
      }
      last_rel_change =
          std::abs(obj - obj_next) / std::max(1.0, std::abs(obj_next));
      w = w_next;
      obj = obj_next;
      if (last_rel_change < 0.1 * opts.tol) break;
    }
  }

  // Multipliers of the final penalized stage double as a dual certificate.
  Eigen::VectorXd lambda(Eigen::Index(prog.constraints.size()));
  for (std::size_t k = 0; k < prog.constraints.size(); ++k) {
    const auto& c = prog.constraints[k];
    lambda(Eigen::Index(k)) = final_rho *
        std::max(0.0, 1.0 - double(c.label) * w(c.user, c.item));
  }

  // The continuation leaves a multiplier/penalty-sized slack inside the
  // margin; a single rescale restores exact feasibility without touching
  // the objective beyond that same order.
  const double mm = min_signed_margin(w, prog);
  if (mm > 0.0 && mm < 1.0) w /= mm;

  MatrixSolution sol;
  sol.w = w;
  sol.nuclear_norm = nuclear_norm(w);
  sol.max_violation = std::max(0.0, 1.0 - min_signed_margin(w, prog));
  sol.duality_gap = certified_gap(w, prog, lambda);
  sol.iterations = total_iters;
  sol.converged = sol.max_violation < opts.tol && last_rel_change < opts.tol;
  if (!sol.converged)
    fail("nuclear margin solver did not converge: violation " +
         format_double(sol.max_violation) + ", last relative change " +
         format_double(last_rel_change));
  return sol;
}

// ---- independent oracle: smoothed spectrum over the feasible box ------------

namespace {

// Huber value/derivative applied to singular values.
double huber(double s, double mu) {
  return s <= mu ? s * s / (2.0 * mu) : s - 0.5 * mu;
}
double huber_prime(double s, double mu) { return s <= mu ? s / mu : 1.0; }

double smoothed_objective(const Eigen::MatrixXd& w, double mu) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w);
  double v = 0.0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
    v += huber(svd.singularValues()(k), mu);
  return v;
}

Eigen::MatrixXd smoothed_gradient(const Eigen::MatrixXd& w, double mu) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(
      w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index k = 0; k < s.size(); ++k) s(k) = huber_prime(s(k), mu);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

// Projection onto the feasible box {y_k W[u_k,i_k] >= 1}: per-cell clamp.
void project_feasible(Eigen::MatrixXd& w, const MarginProgram& p) {
  for (const auto& c : p.constraints) {
    double& cell = w(c.user, c.item);
    if (c.label == 1)
      cell = std::max(cell, 1.0);
    else
      cell = std::min(cell, -1.0);
  }
}

}  // namespace

MatrixSolution nucsvm_oracle(const MarginProgram& prog,
                             const NucOracleOptions& opts) {
  prog.validate();
  // Start from the projection of zero: exactly the target labels on
  // constrained cells, zero elsewhere. Feasible by construction.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(prog.num_users, prog.num_items);
  project_feasible(x, prog);

  int total_iters = 0;
  for (double mu = opts.mu_start; mu >= opts.mu_end * 0.9999999;
       mu /= opts.mu_factor) {
    // Accelerated projected gradient; the smoothed objective has
    // 1/mu-Lipschitz gradient, so the fixed step is mu.
    const double step = mu;
    Eigen::MatrixXd y = x, x_prev = x;
    double t_prev = 1.0;
    double obj_prev = smoothed_objective(x, mu);
    for (int it = 0; it < opts.max_inner; ++it) {
      ++total_iters;
      Eigen::MatrixXd x_next = y - step * smoothed_gradient(y, mu);
      project_feasible(x_next, prog);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
      x_prev = x;
      x = x_next;
      y = x + ((t_prev - 1.0) / t_next) * (x - x_prev);
      t_prev = t_next;
      if ((it + 1) % 50 == 0) {
        const double obj = smoothed_objective(x, mu);
        if (std::abs(obj_prev - obj) <
            opts.inner_tol * std::max(1.0, std::abs(obj)))
          break;
        obj_prev = obj;
      }
    }
  }

  MatrixSolution sol;
  sol.w = x;
  sol.nuclear_norm = nuclear_norm(x);
  sol.max_violation = std::max(0.0, 1.0 - min_signed_margin(x, prog));
  sol.duality_gap = 0.0;  // feasible method; no certificate tracked
  sol.iterations = total_iters;
  sol.converged = sol.max_violation == 0.0;
  return sol;
}

// ---- serialization ----------------------------------------------------------

void save_solution(const MatrixSolution& sol, const std::string& matrix_path,
                   const std::string& sidecar_path) {
  write_matrix(matrix_path, sol.w);
  nlohmann::json j;
  j["nuclear_norm"] = sol.nuclear_norm;
  j["max_violation"] = sol.max_violation;
  j["duality_gap"] = sol.duality_gap;
  j["iterations"] = sol.iterations;
  j["converged"] = sol.converged;
  write_json(sidecar_path, j);
}

MatrixSolution load_solution(const std::string& matrix_path,
                             const std::string& sidecar_path) {
  MatrixSolution sol;
  sol.w = read_matrix(matrix_path);
  nlohmann::json j = read_json(sidecar_path);
  sol.nuclear_norm = j.at("nuclear_norm").get<double>();
  sol.max_violation = j.at("max_violation").get<double>();
  sol.duality_gap = j.at("duality_gap").get<double>();
  sol.iterations = j.at("iterations").get<int>();
  sol.converged = j.at("converged").get<bool>();
  return sol;
}

// ---- margin comparison ------------------------------------------------------

MarginGapRow margin_compare(int epoch, const Eigen::VectorXd& model_margins,
                            const Eigen::VectorXd& ref_margins) {
  if (model_margins.size() != ref_margins.size() || model_margins.size() == 0)
    fail("margin_compare: margin vectors must be nonempty and aligned");
  MarginGapRow row;
  row.epoch = epoch;
  row.l2_gap = (model_margins - ref_margins).norm();
  row.min_margin_gap = model_margins.minCoeff() - ref_margins.minCoeff();
  return row;
}

std::string MarginGapReport::csv() const {
  CsvWriter csv({"epoch", "l2_gap", "min_margin_gap"});
  for (const auto& r : rows)
    csv.append_row({std::to_string(r.epoch), format_double(r.l2_gap),
                    format_double(r.min_margin_gap)});
  return csv.str();
}

void MarginGapReport::save_csv(const std::string& path) const {
  atomic_write_bytes(path, csv());
}

Eigen::VectorXd solution_margins(const MatrixSolution& sol,
                                 const MarginProgram& prog) {
  if (sol.nuclear_norm < 1e-12) fail("solution_margins: degenerate solution");
  Eigen::VectorXd m(Eigen::Index(prog.constraints.size()));
  for (std::size_t k = 0; k < prog.constraints.size(); ++k) {
    const auto& c = prog.constraints[k];
    m(Eigen::Index(k)) =
        double(c.label) * sol.w(c.user, c.item) / sol.nuclear_norm;
  }
  return m;
}

}  // namespace cfml
