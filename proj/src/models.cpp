#include "cfml/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfml/io.hpp"

namespace cfml {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

double stable_softplus_neg(double m) {
  // log(1 + exp(-m)) without overflow on either tail.
  return m >= 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

double sigmoid_neg(double m) {
  // 1 / (1 + exp(m)) = d/df of the log loss magnitude.
  if (m >= 0) {
    const double e = std::exp(-m);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(m));
}

// dloss/df for a single pair with margin m = y*f.
double loss_dfactor(LossKind loss, int y, double m) {
  switch (loss) {
    case LossKind::exp_loss:
      return -double(y) * std::exp(-m);
    case LossKind::log_loss:
      return -double(y) * sigmoid_neg(m);
  }
  fail("unknown loss");
}

double loss_value(LossKind loss, double m) {
  switch (loss) {
    case LossKind::exp_loss:
      return std::exp(-m);
    case LossKind::log_loss:
      return stable_softplus_neg(m);
  }
  fail("unknown loss");
}

struct ForwardCache {
  Eigen::VectorXd x;                  // combined embedding input
  std::vector<Eigen::VectorXd> pre;   // hidden pre-activations
  std::vector<Eigen::VectorXd> act;   // hidden activations
  Eigen::VectorXd top_in;             // input feeding the output row
  double f = 0.0;
};

Eigen::VectorXd combine_input(const ModelParams& p, int u, int i) {
  const int d = p.arch.d;
  if (p.arch.kind == ModelKind::ncf_add)
    return (p.zu.row(u) + p.zi.row(i)).transpose();
  Eigen::VectorXd x(2 * d);
  x.head(d) = p.zu.row(u).transpose();
  x.tail(d) = p.zi.row(i).transpose();
  return x;
}

ForwardCache forward_ncf(const ModelParams& p, int u, int i) {
  ForwardCache c;
  c.x = combine_input(p, u, i);
  const std::size_t q = p.arch.hidden.size();
  if (q == 0) {
    c.top_in = c.x.cwiseMax(0.0);
  } else {
    Eigen::VectorXd h = c.x;
    c.pre.reserve(q);
    c.act.reserve(q);
    for (std::size_t k = 0; k < q; ++k) {
      c.pre.push_back(p.w[k] * h);
      c.act.push_back(c.pre.back().cwiseMax(0.0));
      h = c.act.back();
    }
    c.top_in = c.act.back();
  }
  c.f = (p.w.back() * c.top_in)(0);
  return c;
}

// Backward pass for ncf; df is dloss/df. Writes the input-embedding gradient
// into dx and accumulates weight gradients through `add_w`.
template <typename AddW>
void backward_ncf(const ModelParams& p, const ForwardCache& c, double df,
                  Eigen::VectorXd& dx, AddW&& add_w) {
  const std::size_t q = p.arch.hidden.size();
  add_w(q, df * c.top_in.transpose());  // output row gradient
  Eigen::VectorXd dtop = p.w.back().transpose() * df;
  if (q == 0) {
    dx = (c.x.array() > 0.0).select(dtop.array(), 0.0).matrix();
    return;
  }
  Eigen::VectorXd dact = dtop;
  for (std::size_t k = q; k-- > 0;) {
    Eigen::VectorXd dpre =
        (c.pre[k].array() > 0.0).select(dact.array(), 0.0).matrix();
    const Eigen::VectorXd& prev = k > 0 ? c.act[k - 1] : c.x;
    add_w(k, dpre * prev.transpose());
    dact = p.w[k].transpose() * dpre;
  }
  dx = dact;
}

void scatter_input_grad(const ModelParams& p, int u, int i,
                        const Eigen::VectorXd& dx, Eigen::MatrixXd& dzu,
                        Eigen::MatrixXd& dzi, double scale) {
  const int d = p.arch.d;
  if (p.arch.kind == ModelKind::ncf_add) {
    dzu.row(u) += scale * dx.transpose();
    dzi.row(i) += scale * dx.transpose();
  } else {
    dzu.row(u) += scale * dx.head(d).transpose();
    dzi.row(i) += scale * dx.tail(d).transpose();
  }
}

}  // namespace

// ---- enums ------------------------------------------------------------------

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mcf: return "mcf";
    case ModelKind::ncf_add: return "ncf_add";
    case ModelKind::ncf_concat: return "ncf_concat";
  }
  fail("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mcf") return ModelKind::mcf;
  if (s == "ncf_add") return ModelKind::ncf_add;
  if (s == "ncf_concat") return ModelKind::ncf_concat;
  fail("unknown model kind: " + s);
}

std::string to_string(LossKind k) {
  return k == LossKind::exp_loss ? "exp" : "log";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "exp") return LossKind::exp_loss;
  if (s == "log") return LossKind::log_loss;
  fail("unknown loss kind: " + s);
}

// ---- architecture / params --------------------------------------------------

int Architecture::depth() const {
  return kind == ModelKind::mcf ? 2 : int(hidden.size()) + 2;
}

int Architecture::input_width() const {
  return kind == ModelKind::ncf_concat ? 2 * d : d;
}

void Architecture::validate() const {
  if (num_users <= 0 || num_items <= 0) fail("architecture needs positive dims");
  if (d <= 0) fail("embedding width must be > 0");
  if (kind == ModelKind::mcf && !hidden.empty())
    fail("mcf takes no hidden layers");
  for (int h : hidden)
    if (h <= 0) fail("hidden widths must be > 0");
}

double ModelParams::l2_norm() const {
  double s = zu.squaredNorm() + zi.squaredNorm();
  for (const auto& m : w) s += m.squaredNorm();
  return std::sqrt(s);
}

void ModelParams::scale_all(double c) {
  zu *= c;
  zi *= c;
  for (auto& m : w) m *= c;
}

double ModelParams::distance_to(const ModelParams& other) const {
  double s = (zu - other.zu).squaredNorm() + (zi - other.zi).squaredNorm();
  for (std::size_t k = 0; k < w.size(); ++k)
    s += (w[k] - other.w[k]).squaredNorm();
  return std::sqrt(s);
}

double ModelGrads::l2_norm() const {
  double s = zu.squaredNorm() + zi.squaredNorm();
  for (const auto& m : w) s += m.squaredNorm();
  return std::sqrt(s);
}

ModelParams init_params(const Architecture& arch, const InitSpec& init,
                        std::uint64_t seed) {
  arch.validate();
  if (init.value <= 0) fail("init scale must be > 0");
  const double sd = init.kind == InitSpec::Kind::scaled
                        ? std::sqrt(init.value / double(arch.d))
                        : std::sqrt(init.value);
  ModelParams p;
  p.arch = arch;
  p.init = init;
  Rng rng(seed);
  auto fill = [&rng, sd](Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = sd * rng.gaussian();
  };
  p.zu.resize(arch.num_users, arch.d);
  p.zi.resize(arch.num_items, arch.d);
  fill(p.zu);
  fill(p.zi);
  if (arch.kind != ModelKind::mcf) {
    int prev = arch.input_width();
    for (int h : arch.hidden) {
      p.w.emplace_back(h, prev);
      fill(p.w.back());
      prev = h;
    }
    p.w.emplace_back(1, prev);
    fill(p.w.back());
  }
  return p;
}

double forward(const ModelParams& p, int user, int item) {
  if (user < 0 || user >= p.arch.num_users || item < 0 ||
      item >= p.arch.num_items)
    fail("forward: pair out of range");
  if (p.arch.kind == ModelKind::mcf) return p.zu.row(user).dot(p.zi.row(item));
  return forward_ncf(p, user, item).f;
}

LossReport loss_and_grad(const ModelParams& p, const InteractionSet& set,
                         const std::vector<std::size_t>& batch,
                         LossKind loss) {
  if (batch.empty()) fail("loss_and_grad: empty batch");
  LossReport rep;
  rep.grads.zu = Eigen::MatrixXd::Zero(p.zu.rows(), p.zu.cols());
  rep.grads.zi = Eigen::MatrixXd::Zero(p.zi.rows(), p.zi.cols());
  for (const auto& m : p.w)
    rep.grads.w.emplace_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  const double inv = 1.0 / double(batch.size());

  for (std::size_t idx : batch) {
    const auto& pr = set.pairs.at(idx);
    if (p.arch.kind == ModelKind::mcf) {
      const double f = p.zu.row(pr.user).dot(p.zi.row(pr.item));
      const double m = pr.label * f;
      rep.loss += inv * loss_value(loss, m);
      const double df = inv * loss_dfactor(loss, pr.label, m);
      rep.grads.zu.row(pr.user) += df * p.zi.row(pr.item);
      rep.grads.zi.row(pr.item) += df * p.zu.row(pr.user);
    } else {
      ForwardCache c = forward_ncf(p, pr.user, pr.item);
      const double m = pr.label * c.f;
      rep.loss += inv * loss_value(loss, m);
      const double df = loss_dfactor(loss, pr.label, m);
      Eigen::VectorXd dx;
      backward_ncf(p, c, df, dx,
                   [&](std::size_t k, const Eigen::MatrixXd& g) {
                     rep.grads.w[k] += inv * g;
                   });
      scatter_input_grad(p, pr.user, pr.item, dx, rep.grads.zu, rep.grads.zi,
                         inv);
    }
  }
  return rep;
}

ModelGrads zero_grads(const ModelParams& p) {
  ModelGrads g;
  g.zu = Eigen::MatrixXd::Zero(p.zu.rows(), p.zu.cols());
  g.zi = Eigen::MatrixXd::Zero(p.zi.rows(), p.zi.cols());
  for (const auto& m : p.w)
    g.w.emplace_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  return g;
}

void accumulate_forward_grad(const ModelParams& p, int user, int item,
                             double df, ModelGrads& grads) {
  if (p.arch.kind == ModelKind::mcf) {
    grads.zu.row(user) += df * p.zi.row(item);
    grads.zi.row(item) += df * p.zu.row(user);
    return;
  }
  ForwardCache c = forward_ncf(p, user, item);
  Eigen::VectorXd dx;
  backward_ncf(p, c, df, dx,
               [&](std::size_t k, const Eigen::MatrixXd& g) {
                 grads.w[k] += g;
               });
  scatter_input_grad(p, user, item, dx, grads.zu, grads.zi, 1.0);
}

double sgd_step(ModelParams& p, const LabeledPair& pair, LossKind loss,
                double lr) {
  if (p.arch.kind == ModelKind::mcf) {
    const double f = p.zu.row(pair.user).dot(p.zi.row(pair.item));
    const double m = pair.label * f;
    const double df = loss_dfactor(loss, pair.label, m);
    // Simultaneous update from the pre-step parameters.
    const Eigen::RowVectorXd zu_old = p.zu.row(pair.user);
    p.zu.row(pair.user) -= lr * df * p.zi.row(pair.item);
    p.zi.row(pair.item) -= lr * df * zu_old;
    return loss_value(loss, m);
  }
  ForwardCache c = forward_ncf(p, pair.user, pair.item);
  const double m = pair.label * c.f;
  const double df = loss_dfactor(loss, pair.label, m);
  Eigen::VectorXd dx;
  std::vector<Eigen::MatrixXd> wg(p.w.size());
  backward_ncf(p, c, df, dx,
               [&](std::size_t k, const Eigen::MatrixXd& g) { wg[k] = g; });
  for (std::size_t k = 0; k < p.w.size(); ++k) p.w[k] -= lr * wg[k];
  scatter_input_grad(p, pair.user, pair.item, dx, p.zu, p.zi, -lr);
  return loss_value(loss, m);
}

// ---- training ---------------------------------------------------------------

namespace {

Eigen::VectorXd margins_of(const ModelParams& p, const InteractionSet& set,
                           const std::vector<std::size_t>& batch) {
  Eigen::VectorXd m(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& pr = set.pairs.at(batch[k]);
    m(k) = pr.label * forward(p, pr.user, pr.item);
  }
  return m;
}

double lse_of_negated(const Eigen::VectorXd& m) {
  const double top = (-m).maxCoeff();
  double s = 0.0;
  for (Eigen::Index k = 0; k < m.size(); ++k) s += std::exp(-m(k) - top);
  return top + std::log(s);
}

}  // namespace

std::string TrainTrace::csv() const {
  CsvWriter csv({"epoch", "loss", "l2_norm", "nuc_norm", "min_margin",
                 "smoothed_margin"});
  for (const auto& r : rows)
    csv.append_row({std::to_string(r.epoch), format_double(r.loss),
                    format_double(r.l2_norm), format_double(r.nuc_norm),
                    format_double(r.min_margin),
                    format_double(r.smoothed_margin)});
  return csv.str();
}

void TrainTrace::save_csv(const std::string& path) const {
  atomic_write_bytes(path, csv());
}

TrainTrace sgd_train(ModelParams& p, const InteractionSet& set,
                     const std::vector<std::size_t>& train,
                     const TrainOptions& opts) {
  if (train.empty()) fail("sgd_train: empty training set");
  if (opts.lr <= 0 || opts.epochs < 0) fail("sgd_train: bad lr/epochs");
  const double exponent =
      opts.smoothed_exponent > 0 ? opts.smoothed_exponent : p.arch.depth();
  TrainTrace trace;
  std::vector<std::size_t> order = train;
  Rng rng(opts.seed);
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const double l = sgd_step(p, set.pairs.at(idx), opts.loss, opts.lr);
      if (!std::isfinite(l))
        throw TrainingDiverged(epoch, "training loss is not finite at epoch " +
                                          std::to_string(epoch));
    }
    TraceRow row;
    row.epoch = epoch;
    const Eigen::VectorXd m = margins_of(p, set, train);
    double loss_sum = 0.0;
    for (Eigen::Index k = 0; k < m.size(); ++k)
      loss_sum += loss_value(opts.loss, m(k));
    row.loss = loss_sum / double(m.size());
    row.l2_norm = p.l2_norm();
    row.nuc_norm = nuclear_norm_product(p);
    row.min_margin = m.minCoeff();
    row.smoothed_margin =
        -lse_of_negated(m) / std::pow(row.l2_norm, exponent);
    if (!std::isfinite(row.loss))
      throw TrainingDiverged(epoch, "training loss is not finite at epoch " +
                                        std::to_string(epoch));
    if (row.l2_norm > 1e8)
      throw TrainingDiverged(
          epoch, "parameter norm passed the runaway guard (1e8) at epoch " +
                     std::to_string(epoch));
    trace.rows.push_back(row);
    if (opts.on_epoch) opts.on_epoch(epoch, p);
  }
  return trace;
}

// ---- margins ----------------------------------------------------------------

Eigen::VectorXd normalized_margins(const ModelParams& p,
                                   const InteractionSet& set,
                                   const std::vector<std::size_t>& batch) {
  if (batch.empty()) fail("normalized_margins: empty batch");
  const double normalizer =
      p.arch.kind == ModelKind::mcf
          ? nuclear_norm_product(p)
          : std::pow(p.l2_norm(), double(p.arch.depth()));
  if (normalizer < 1e-12)
    fail("margin normalizer below 1e-12; parameters are degenerate");
  return margins_of(p, set, batch) / normalizer;
}

double smoothed_margin(const ModelParams& p, const InteractionSet& set,
                       const std::vector<std::size_t>& batch,
                       double exponent) {
  if (batch.empty()) fail("smoothed_margin: empty batch");
  const double expo = exponent > 0 ? exponent : double(p.arch.depth());
  const double norm = p.l2_norm();
  if (norm < 1e-12) fail("smoothed_margin: parameter norm below 1e-12");
  return -lse_of_negated(margins_of(p, set, batch)) / std::pow(norm, expo);
}

double nuclear_norm_product(const ModelParams& p) {
  const Eigen::MatrixXd x = p.zu * p.zi.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x);
  return svd.singularValues().sum();
}

}  // namespace cfml
