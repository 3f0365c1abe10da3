#include "cfml/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cfml/io.hpp"

namespace cfml {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

constexpr double kPi = std::numbers::pi;

}  // namespace

KernelSpec kcf_closed_form(ModelKind kind, double alpha1, double alpha2) {
  if (alpha1 <= 0 || alpha2 <= 0) fail("kernel scales must be > 0");
  KernelSpec s;
  switch (kind) {
    case ModelKind::mcf:
      s.a = 0.0;
      s.b = alpha1;
      s.c = alpha2;
      return s;
    case ModelKind::ncf_concat:
      if (alpha1 != 1.0 || alpha2 != 1.0)
        fail("ncf closed-form constants are pinned at unit scale");
      s.a = 1.0 / kPi;
      s.b = s.c = 0.5 - 1.0 / (2.0 * kPi);
      return s;
    case ModelKind::ncf_add:
      if (alpha1 != 1.0 || alpha2 != 1.0)
        fail("ncf closed-form constants are pinned at unit scale");
      s.a = 1.0 / kPi;
      s.b = s.c = 0.5 - (2.0 - std::sqrt(3.0)) / (2.0 * kPi);
      return s;
  }
  fail("unknown model kind");
}

double kcf_eval(const KernelSpec& spec, int u, int i, int u2, int i2) {
  return spec.a + (i == i2 ? spec.b : 0.0) + (u == u2 ? spec.c : 0.0);
}

Eigen::MatrixXd kcf_gram(const KernelSpec& spec,
                         const std::vector<std::pair<int, int>>& pairs) {
  const Eigen::Index n = Eigen::Index(pairs.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = r; c < n; ++c) {
      g(r, c) = kcf_eval(spec, pairs[r].first, pairs[r].second,
                         pairs[c].first, pairs[c].second);
      g(c, r) = g(r, c);
    }
  return g;
}

void save_kernel_spec(const KernelSpec& spec, const std::string& path) {
  nlohmann::json j;
  j["a"] = spec.a;
  j["b"] = spec.b;
  j["c"] = spec.c;
  write_json(path, j);
}

KernelSpec load_kernel_spec(const std::string& path) {
  nlohmann::json j = read_json(path);
  KernelSpec s;
  s.a = j.at("a").get<double>();
  s.b = j.at("b").get<double>();
  s.c = j.at("c").get<double>();
  return s;
}

// ---- empirical tangent kernels ----------------------------------------------

namespace {

// Gradient pieces of the minimal rectified stack f = w_out * relu(x) with
// respect to (output row, user embedding, item embedding).
struct MinimalStackGrad {
  Eigen::VectorXd d_out;  // relu(x)
  Eigen::VectorXd d_zu;   // d f / d z_u
  Eigen::VectorXd d_zi;   // d f / d z_i
};

MinimalStackGrad minimal_stack_grad(const ModelParams& p, int u, int i) {
  const int d = p.arch.d;
  MinimalStackGrad g;
  Eigen::VectorXd x;
  if (p.arch.kind == ModelKind::ncf_add) {
    x = (p.zu.row(u) + p.zi.row(i)).transpose();
  } else {
    x.resize(2 * d);
    x.head(d) = p.zu.row(u).transpose();
    x.tail(d) = p.zi.row(i).transpose();
  }
  g.d_out = x.cwiseMax(0.0);
  const Eigen::VectorXd v = p.w.at(0).transpose();
  Eigen::VectorXd gate =
      (x.array() > 0.0).select(v.array(), 0.0).matrix();
  if (p.arch.kind == ModelKind::ncf_add) {
    g.d_zu = gate;
    g.d_zi = gate;
  } else {
    g.d_zu = gate.head(d);
    g.d_zi = gate.tail(d);
  }
  return g;
}

}  // namespace

double empirical_ntk(const ModelParams& p, int u, int i, int u2, int i2) {
  p.arch.validate();
  if (p.arch.kind == ModelKind::mcf) {
    double k = 0.0;
    if (u == u2) k += p.zu.row(u).dot(p.zu.row(u2));
    if (i == i2) k += p.zi.row(i).dot(p.zi.row(i2));
    return k;
  }
  if (!p.arch.hidden.empty())
    fail("tangent probe requires the minimal rectified stack (no hidden "
         "matrices)");
  const MinimalStackGrad ga = minimal_stack_grad(p, u, i);
  const MinimalStackGrad gb = minimal_stack_grad(p, u2, i2);
  double dot = ga.d_out.dot(gb.d_out);  // shared output row
  if (u == u2) dot += ga.d_zu.dot(gb.d_zu);
  if (i == i2) dot += ga.d_zi.dot(gb.d_zi);
  const double alpha = p.init.alpha_for(p.arch.d);
  return 2.0 / alpha * dot;
}

double arccos_k0(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) fail("arccos_k0: size mismatch");
  const double nx = x.norm(), ny = y.norm();
  if (nx == 0.0 || ny == 0.0) fail("arccos_k0: zero vector");
  const double cosv = std::clamp(x.dot(y) / (nx * ny), -1.0, 1.0);
  return 1.0 - std::acos(cosv) / kPi;
}

// ---- SVM --------------------------------------------------------------------

DualSolution svm_train_dual(const Eigen::MatrixXd& gram,
                            const Eigen::VectorXi& y, const SvmOptions& opts) {
  const Eigen::Index n = gram.rows();
  if (n == 0 || gram.cols() != n) fail("svm: gram must be square, nonempty");
  if (y.size() != n) fail("svm: label size mismatch");
  for (Eigen::Index k = 0; k < n; ++k)
    if (y(k) != 1 && y(k) != -1) fail("svm: labels must be +1/-1");
  if (opts.C <= 0 || opts.tol <= 0) fail("svm: C and tol must be > 0");

  if (n <= opts.psd_check_cap) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (gram + gram.transpose()), Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -1e-8 * std::max(gram.trace(), 1.0))
      fail("svm: gram is not positive semidefinite within tolerance");
  }

  DualSolution sol;
  sol.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);  // f_k = sum_j a_j y_j K_kj
  const double eps_active = 1e-12 * opts.C;

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double kkk = gram(k, k);
      if (kkk <= 0.0) continue;  // degenerate coordinate cannot move usefully
      const double grad = 1.0 - double(y(k)) * f(k);
      double next = std::clamp(sol.alpha(k) + grad / kkk, 0.0, opts.C);
      const double delta = next - sol.alpha(k);
      if (delta == 0.0) continue;
      sol.alpha(k) = next;
      f += delta * double(y(k)) * gram.col(k);
    }
    double viol = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double grad = 1.0 - double(y(k)) * f(k);
      double v;
      if (sol.alpha(k) <= eps_active)
        v = std::max(0.0, grad);
      else if (sol.alpha(k) >= opts.C - eps_active)
        v = std::max(0.0, -grad);
      else
        v = std::abs(grad);
      viol = std::max(viol, v);
    }
    sol.kkt_violation = viol;
    sol.sweeps = sweep;
    if (viol < opts.tol) {
      sol.converged = true;
      return sol;
    }
  }
  fail("svm: sweep cap reached with KKT violation " +
       format_double(sol.kkt_violation));
}

KcfSvm::KcfSvm(const KernelSpec& spec, std::vector<std::pair<int, int>> pairs,
               Eigen::VectorXi y, const SvmOptions& opts)
    : spec_(spec), pairs_(std::move(pairs)), y_(std::move(y)) {
  sol_ = svm_train_dual(kcf_gram(spec_, pairs_), y_, opts);
  int max_u = 0, max_i = 0;
  for (const auto& [u, i] : pairs_) {
    max_u = std::max(max_u, u);
    max_i = std::max(max_i, i);
  }
  coef_by_user_.assign(std::size_t(max_u) + 1, 0.0);
  coef_by_item_.assign(std::size_t(max_i) + 1, 0.0);
  for (std::size_t k = 0; k < pairs_.size(); ++k) {
    const double coef = sol_.alpha(Eigen::Index(k)) * double(y_(Eigen::Index(k)));
    coef_sum_ += coef;
    coef_by_user_[std::size_t(pairs_[k].first)] += coef;
    coef_by_item_[std::size_t(pairs_[k].second)] += coef;
  }
}

double KcfSvm::predict(int u, int i) const {
  double f = spec_.a * coef_sum_;
  if (u >= 0 && std::size_t(u) < coef_by_user_.size())
    f += spec_.c * coef_by_user_[std::size_t(u)];
  if (i >= 0 && std::size_t(i) < coef_by_item_.size())
    f += spec_.b * coef_by_item_[std::size_t(i)];
  return f;
}

double KcfSvm::decision(std::size_t train_index) const {
  const auto& [u, i] = pairs_.at(train_index);
  return predict(u, i);
}

}  // namespace cfml
