#pragma once

// Trainable collaborative-filtering predictors.
//
// Two families share one parameter container:
//   - mcf:        f(u,i) = <z_u, z_i>
//   - ncf_add /   f(u,i) = w_out * relu(w_{q-1} * ... relu(w_0 * x)),
//     ncf_concat  where x = z_u + z_i (add) or [z_u; z_i] (concat)
// Hidden widths are listed innermost-first; the output weight is a single
// row. With an empty hidden list (allowed for ncf_*) the combined embedding
// is rectified directly: f = w_out * relu(x). That minimal rectified stack
// is what the tangent-kernel probes in kernels.hpp differentiate.
//
// Homogeneity degree L counts the embedding layer, each hidden matrix, and
// the output row: L = q + 2 for ncf with q hidden matrices, L = 2 for mcf.
// relu'(0) is taken as 0 everywhere.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfml/dataset.hpp"

namespace cfml {

enum class ModelKind { mcf, ncf_add, ncf_concat };
enum class LossKind { exp_loss, log_loss };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct Architecture {
  ModelKind kind = ModelKind::mcf;
  int num_users = 0;
  int num_items = 0;
  int d = 0;                 // embedding width
  std::vector<int> hidden;   // hidden widths, innermost first (empty for mcf)

  int depth() const;         // homogeneity degree L
  int input_width() const;   // d for mcf/add, 2d for concat
  void validate() const;
};

struct InitSpec {
  enum class Kind { scaled, fixed };
  Kind kind = Kind::scaled;
  // scaled: every parameter entry ~ N(0, value/d); fixed: ~ N(0, value).
  double value = 1.0;

  // Effective embedding-scale alpha (variance * d), used by kernel probes.
  double alpha_for(int d) const {
    return kind == Kind::scaled ? value : value * double(d);
  }
};

struct ModelParams {
  Architecture arch;
  InitSpec init;
  Eigen::MatrixXd zu;                 // num_users x d
  Eigen::MatrixXd zi;                 // num_items x d
  std::vector<Eigen::MatrixXd> w;     // hidden matrices then the output row

  double l2_norm() const;             // over every parameter entry
  void scale_all(double c);
  double distance_to(const ModelParams& other) const;
};

struct ModelGrads {
  Eigen::MatrixXd zu, zi;
  std::vector<Eigen::MatrixXd> w;
  double l2_norm() const;
};

ModelParams init_params(const Architecture& arch, const InitSpec& init,
                        std::uint64_t seed);

double forward(const ModelParams& p, int user, int item);

// Mean loss over the indexed pairs plus dense mean gradients.
struct LossReport {
  double loss = 0.0;
  ModelGrads grads;
};
LossReport loss_and_grad(const ModelParams& p, const InteractionSet& set,
                         const std::vector<std::size_t>& batch, LossKind loss);

// One in-place stochastic step on a single labeled pair; returns the
// pre-step loss value of that pair.
double sgd_step(ModelParams& p, const LabeledPair& pair, LossKind loss,
                double lr);

ModelGrads zero_grads(const ModelParams& p);

// Accumulates df * d f(u,i) / d params into `grads`. Building block for
// custom objectives (regression/classification heads) and homogeneity checks.
void accumulate_forward_grad(const ModelParams& p, int user, int item,
                             double df, ModelGrads& grads);

// ---- training ---------------------------------------------------------------

struct TraceRow {
  int epoch = 0;
  double loss = 0.0;
  double l2_norm = 0.0;
  double nuc_norm = 0.0;
  double min_margin = 0.0;
  double smoothed_margin = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  void save_csv(const std::string& path) const;
  std::string csv() const;
};

struct TrainOptions {
  double lr = 0.1;
  int epochs = 100;
  LossKind loss = LossKind::log_loss;
  std::uint64_t seed = 1;
  // Margin-smoothing exponent; <= 0 means "use the architecture's degree L".
  double smoothed_exponent = 0.0;
  // Invoked after each epoch's bookkeeping with the current parameters.
  std::function<void(int, const ModelParams&)> on_epoch;
};

// Thrown when the parameter norm passes the runaway guard (1e8) or the
// training loss stops being finite; carries the epoch for diagnostics.
struct TrainingDiverged : std::runtime_error {
  int epoch;
  explicit TrainingDiverged(int e, const std::string& what)
      : std::runtime_error(what), epoch(e) {}
};

// Single-sample SGD with a fresh Fisher-Yates pass order each epoch.
// Appends one trace row per completed epoch.
TrainTrace sgd_train(ModelParams& p, const InteractionSet& set,
                     const std::vector<std::size_t>& train,
                     const TrainOptions& opts);

// ---- margins ----------------------------------------------------------------

// y*f normalized by the nuclear norm of Z_U Z_I^T (mcf) or ||theta||_2^L
// (ncf). Errors out when the normalizer is below 1e-12.
Eigen::VectorXd normalized_margins(const ModelParams& p,
                                   const InteractionSet& set,
                                   const std::vector<std::size_t>& batch);

// Log-sum-exp smoothed margin: (-log sum_k exp(-y_k f_k)) / ||theta||^expo.
// Finite for all finite parameters; exponent <= 0 selects the degree L.
double smoothed_margin(const ModelParams& p, const InteractionSet& set,
                       const std::vector<std::size_t>& batch,
                       double exponent = 0.0);

double nuclear_norm_product(const ModelParams& p);  // ||Z_U Z_I^T||_*

}  // namespace cfml
