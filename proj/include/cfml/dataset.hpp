#pragma once

// Interaction data handling: explicit rating tables, implicit-feedback
// label sets, negative sampling, train/val/test splitting, subsampling, and
// synthetic instance generators. All randomized operations take explicit
// seeds and use the project RNG, so every downstream artifact is exactly
// reproducible from (config, seed).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfml/rng.hpp"

namespace cfml {

struct RatingRow {
  int user = 0;
  int item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

// Dense 0-based ids; at most one row per (user, item).
struct RatingTable {
  int num_users = 0;
  int num_items = 0;
  std::vector<RatingRow> rows;

  void validate() const;
  // Fraction of (user, item) cells whose rating clears `threshold`.
  double positive_rate(double threshold) const;
};

struct LabeledPair {
  int user = 0;
  int item = 0;
  int label = 0;                     // +1 or -1
  double rating = 0.0;               // meaningful iff has_rating
  std::int64_t timestamp = 0;        // meaningful iff has_timestamp
  bool has_rating = false;
  bool has_timestamp = false;
};

struct InteractionSet {
  int num_users = 0;
  int num_items = 0;
  std::vector<LabeledPair> pairs;

  void validate() const;  // label in {-1,+1}, ids in range, no duplicates
  std::size_t count_label(int label) const;
  // Items of each user restricted to a label (+1/-1) or all (0).
  std::vector<std::vector<int>> items_by_user(int label_filter) const;
};

// Index-based split: entries refer to positions in InteractionSet::pairs.
struct SplitPlan {
  std::string mode;  // "transductive" or "leave_last"
  double beta = 0.0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<int> excluded_users;  // too few positives for leave-last
};

// One-hot encodings of a pair, materialized on demand.
struct EncodedPair {
  int user = 0, item = 0;
  int num_users = 0, num_items = 0;

  Eigen::VectorXd user_one_hot() const;
  Eigen::VectorXd item_one_hot() const;
  // Stacked [user one-hot; item one-hot] input of length |U|+|I|.
  Eigen::VectorXd combined() const;
};

// ---- loading / conversion ---------------------------------------------------

// Tab-separated "user item rating timestamp" rows. Raw ids are remapped to
// dense 0-based ids in ascending raw-id order. Malformed rows, ratings
// outside [1,5], and duplicate (user,item) keys are hard errors.
RatingTable load_ratings(const std::string& path);

// Rating rows at or above `threshold` become +1 labeled pairs (rating and
// timestamp are carried along); everything else is left unlabeled.
InteractionSet to_implicit(const RatingTable& table, double threshold);

// Adds `per_positive` negatives per positive, per user, drawn uniformly
// without replacement from that user's unobserved items (capped by
// availability). Per-user substreams make the result independent of user
// iteration order.
InteractionSet sample_negatives(const InteractionSet& set, int per_positive,
                                std::uint64_t seed);

// ---- splitting --------------------------------------------------------------

// Random partition with |test| = round(beta * |train|) (no validation part).
SplitPlan split_transductive(const InteractionSet& set, double beta,
                             std::uint64_t seed);

// Per user: latest positive (by timestamp, item id breaking ties) -> test,
// second latest -> val, remaining positives and all negatives -> train.
// Users with fewer than 3 positives are dropped entirely and reported.
SplitPlan split_leave_last(const InteractionSet& set);

// ---- subsampling / generators -----------------------------------------------

// Keeps `num_items` items sampled without replacement proportional to their
// interaction counts, then `num_users` users uniformly among users that still
// have at least one rating. Ids are re-densified in ascending original order.
RatingTable subsample(const RatingTable& table, int num_users, int num_items,
                      std::uint64_t seed);

// Fully labeled low-rank sign instance: labels are the sign pattern of
// G_U G_I^T / sqrt(rank) + noise * N, with zeros mapped to +1. With noise = 0
// the labels are exactly realizable by a rank <= `rank` matrix.
InteractionSet gen_synthetic(int num_users, int num_items, int rank,
                             double noise, std::uint64_t seed);

// Synthetic explicit-feedback table in the same shape as a real ratings log:
// power-law item popularity, low-rank affinity + noise driving the 1..5
// ratings, strictly increasing timestamps per user. Used when no real
// ratings file is supplied.
RatingTable gen_ratings(int num_users, int num_items, std::uint64_t seed);

// ---- serialization ----------------------------------------------------------

// Text: one "user<TAB>item<TAB>label" line per pair.
void save_interactions_txt(const InteractionSet& set, const std::string& path);
InteractionSet load_interactions_txt(const std::string& path);

// JSON: full metadata (dims, ratings/timestamps where present).
void save_interactions_json(const InteractionSet& set,
                            const std::string& path);
InteractionSet load_interactions_json(const std::string& path);

void save_split(const SplitPlan& plan, const std::string& path);
SplitPlan load_split(const std::string& path);

}  // namespace cfml
