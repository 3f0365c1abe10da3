#include "cfml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "cfml/io.hpp"

namespace cfml {

namespace {

std::uint64_t pair_key(int u, int i) {
  return (std::uint64_t(std::uint32_t(u)) << 32) | std::uint32_t(i);
}

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

}  // namespace

// ---- RatingTable ------------------------------------------------------------

void RatingTable::validate() const {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.user < 0 || r.user >= num_users || r.item < 0 || r.item >= num_items)
      fail("rating row id out of range");
    if (!(r.rating >= 1.0 && r.rating <= 5.0))
      fail("rating outside [1,5]");
    if (!seen.insert(pair_key(r.user, r.item)).second)
      fail("duplicate (user,item) rating row");
  }
}

double RatingTable::positive_rate(double threshold) const {
  if (num_users == 0 || num_items == 0) return 0.0;
  std::size_t pos = 0;
  for (const auto& r : rows)
    if (r.rating >= threshold) ++pos;
  return double(pos) / (double(num_users) * double(num_items));
}

// ---- InteractionSet ---------------------------------------------------------

void InteractionSet::validate() const {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.label != 1 && p.label != -1) fail("label must be +1 or -1");
    if (p.user < 0 || p.user >= num_users || p.item < 0 ||
        p.item >= num_items)
      fail("pair id out of range");
    if (!seen.insert(pair_key(p.user, p.item)).second)
      fail("duplicate (user,item) pair");
  }
}

std::size_t InteractionSet::count_label(int label) const {
  std::size_t n = 0;
  for (const auto& p : pairs)
    if (p.label == label) ++n;
  return n;
}

std::vector<std::vector<int>> InteractionSet::items_by_user(
    int label_filter) const {
  std::vector<std::vector<int>> out(num_users);
  for (const auto& p : pairs)
    if (label_filter == 0 || p.label == label_filter)
      out[p.user].push_back(p.item);
  return out;
}

// ---- EncodedPair ------------------------------------------------------------

Eigen::VectorXd EncodedPair::user_one_hot() const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(num_users);
  e(user) = 1.0;
  return e;
}

Eigen::VectorXd EncodedPair::item_one_hot() const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(num_items);
  e(item) = 1.0;
  return e;
}

Eigen::VectorXd EncodedPair::combined() const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(num_users + num_items);
  e(user) = 1.0;
  e(num_users + item) = 1.0;
  return e;
}

// ---- loading ----------------------------------------------------------------

RatingTable load_ratings(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ratings file: " + path);

  struct RawRow {
    long long user, item, timestamp;
    double rating;
  };
  std::vector<RawRow> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RawRow r{};
    char trailing;
    if (!(ls >> r.user >> r.item >> r.rating >> r.timestamp) ||
        (ls >> trailing))
      fail("malformed ratings row at line " + std::to_string(lineno) + " of " +
           path);
    if (!(r.rating >= 1.0 && r.rating <= 5.0))
      fail("rating outside [1,5] at line " + std::to_string(lineno) + " of " +
           path);
    raw.push_back(r);
  }

  // Dense remap in ascending raw-id order (stable across row permutations).
  std::map<long long, int> user_ids, item_ids;
  for (const auto& r : raw) {
    user_ids.emplace(r.user, 0);
    item_ids.emplace(r.item, 0);
  }
  int next = 0;
  for (auto& kv : user_ids) kv.second = next++;
  next = 0;
  for (auto& kv : item_ids) kv.second = next++;

  RatingTable table;
  table.num_users = int(user_ids.size());
  table.num_items = int(item_ids.size());
  table.rows.reserve(raw.size());
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(raw.size());
  for (const auto& r : raw) {
    RatingRow row;
    row.user = user_ids.at(r.user);
    row.item = item_ids.at(r.item);
    row.rating = r.rating;
    row.timestamp = r.timestamp;
    if (!seen.insert(pair_key(row.user, row.item)).second)
      fail("duplicate (user,item) rating in " + path);
    table.rows.push_back(row);
  }
  return table;
}

InteractionSet to_implicit(const RatingTable& table, double threshold) {
  InteractionSet set;
  set.num_users = table.num_users;
  set.num_items = table.num_items;
  for (const auto& r : table.rows) {
    if (r.rating < threshold) continue;
    LabeledPair p;
    p.user = r.user;
    p.item = r.item;
    p.label = 1;
    p.rating = r.rating;
    p.has_rating = true;
    p.timestamp = r.timestamp;
    p.has_timestamp = true;
    set.pairs.push_back(p);
  }
  return set;
}

InteractionSet sample_negatives(const InteractionSet& set, int per_positive,
                                std::uint64_t seed) {
  if (per_positive < 0) fail("per_positive must be >= 0");
  InteractionSet out = set;
  auto positives = set.items_by_user(+1);
  auto all_items = set.items_by_user(0);
  for (int u = 0; u < set.num_users; ++u) {
    const std::size_t npos = positives[u].size();
    if (npos == 0) continue;
    // Unobserved = items not already carrying any label for this user.
    std::unordered_set<int> taken(all_items[u].begin(), all_items[u].end());
    std::vector<int> pool;
    pool.reserve(set.num_items - taken.size());
    for (int i = 0; i < set.num_items; ++i)
      if (!taken.count(i)) pool.push_back(i);
    std::size_t want = std::min(pool.size(), npos * std::size_t(per_positive));
    Rng rng = Rng::derive(seed, std::uint64_t(u));
    auto picks = rng.sample_without_replacement(pool.size(), want);
    std::sort(picks.begin(), picks.end());
    for (std::size_t k : picks) {
      LabeledPair p;
      p.user = u;
      p.item = pool[k];
      p.label = -1;
      out.pairs.push_back(p);
    }
  }
  return out;
}

// ---- splitting --------------------------------------------------------------

SplitPlan split_transductive(const InteractionSet& set, double beta,
                             std::uint64_t seed) {
  if (!(beta > 0.0 && beta < 1.0)) fail("beta must be in (0,1)");
  const std::size_t n = set.pairs.size();
  if (n < 2) fail("need at least 2 pairs to split");
  std::size_t n_train =
      std::size_t(std::llround(double(n) / (1.0 + beta)));
  n_train = std::min(std::max<std::size_t>(n_train, 1), n - 1);
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < n; ++k) perm[k] = k;
  Rng rng(seed);
  rng.shuffle(perm);
  SplitPlan plan;
  plan.mode = "transductive";
  plan.beta = beta;
  plan.train.assign(perm.begin(), perm.begin() + std::ptrdiff_t(n_train));
  plan.test.assign(perm.begin() + std::ptrdiff_t(n_train), perm.end());
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

SplitPlan split_leave_last(const InteractionSet& set) {
  SplitPlan plan;
  plan.mode = "leave_last";

  // Per user, positives ordered by (timestamp, item).
  struct Pos {
    std::int64_t ts;
    int item;
    std::size_t idx;
  };
  std::vector<std::vector<Pos>> pos(set.num_users);
  std::vector<std::vector<std::size_t>> neg(set.num_users);
  for (std::size_t k = 0; k < set.pairs.size(); ++k) {
    const auto& p = set.pairs[k];
    if (p.label == 1) {
      if (!p.has_timestamp) fail("leave-last split needs timestamps");
      pos[p.user].push_back({p.timestamp, p.item, k});
    } else {
      neg[p.user].push_back(k);
    }
  }
  for (int u = 0; u < set.num_users; ++u) {
    if (pos[u].empty() && neg[u].empty()) continue;
    if (pos[u].size() < 3) {
      plan.excluded_users.push_back(u);
      continue;
    }
    auto& v = pos[u];
    std::sort(v.begin(), v.end(), [](const Pos& a, const Pos& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.item < b.item;
    });
    plan.test.push_back(v[v.size() - 1].idx);
    plan.val.push_back(v[v.size() - 2].idx);
    for (std::size_t k = 0; k + 2 < v.size(); ++k)
      plan.train.push_back(v[k].idx);
    for (std::size_t k : neg[u]) plan.train.push_back(k);
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

// ---- subsampling / generators -----------------------------------------------

RatingTable subsample(const RatingTable& table, int num_users, int num_items,
                      std::uint64_t seed) {
  if (num_users <= 0 || num_items <= 0) fail("subsample sizes must be > 0");
  Rng rng(seed);

  // Popularity-proportional item draw without replacement
  // (Efraimidis-Spirakis keys: smallest -log(U)/w win).
  std::vector<double> count(table.num_items, 0.0);
  for (const auto& r : table.rows) count[r.item] += 1.0;
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(table.num_items);
  for (int i = 0; i < table.num_items; ++i) {
    if (count[i] <= 0.0) continue;
    double u = 1.0 - rng.uniform();
    keyed.emplace_back(-std::log(u) / count[i], i);
  }
  std::sort(keyed.begin(), keyed.end());
  const std::size_t keep_items =
      std::min<std::size_t>(std::size_t(num_items), keyed.size());
  std::set<int> items;
  for (std::size_t k = 0; k < keep_items; ++k) items.insert(keyed[k].second);

  // Uniform user draw among users still having ratings on the kept items.
  std::set<int> active_users;
  for (const auto& r : table.rows)
    if (items.count(r.item)) active_users.insert(r.user);
  std::vector<int> user_pool(active_users.begin(), active_users.end());
  const std::size_t keep_users =
      std::min<std::size_t>(std::size_t(num_users), user_pool.size());
  auto picks = rng.sample_without_replacement(user_pool.size(), keep_users);
  std::set<int> users;
  for (std::size_t k : picks) users.insert(user_pool[k]);

  // Re-densify in ascending original order.
  std::map<int, int> umap, imap;
  int next = 0;
  for (int u : users) umap[u] = next++;
  next = 0;
  for (int i : items) imap[i] = next++;

  RatingTable out;
  out.num_users = int(umap.size());
  out.num_items = int(imap.size());
  for (const auto& r : table.rows) {
    auto iu = umap.find(r.user);
    auto ii = imap.find(r.item);
    if (iu == umap.end() || ii == imap.end()) continue;
    RatingRow row = r;
    row.user = iu->second;
    row.item = ii->second;
    out.rows.push_back(row);
  }
  return out;
}

InteractionSet gen_synthetic(int num_users, int num_items, int rank,
                             double noise, std::uint64_t seed) {
  if (num_users <= 0 || num_items <= 0 || rank <= 0)
    fail("gen_synthetic sizes must be > 0");
  if (noise < 0) fail("noise must be >= 0");
  Rng rng(seed);
  Eigen::MatrixXd gu(num_users, rank), gi(num_items, rank);
  for (int u = 0; u < num_users; ++u)
    for (int k = 0; k < rank; ++k) gu(u, k) = rng.gaussian();
  for (int i = 0; i < num_items; ++i)
    for (int k = 0; k < rank; ++k) gi(i, k) = rng.gaussian();
  Eigen::MatrixXd m = gu * gi.transpose() / std::sqrt(double(rank));
  if (noise > 0)
    for (int u = 0; u < num_users; ++u)
      for (int i = 0; i < num_items; ++i)
        m(u, i) += noise * rng.gaussian();

  InteractionSet set;
  set.num_users = num_users;
  set.num_items = num_items;
  set.pairs.reserve(std::size_t(num_users) * std::size_t(num_items));
  for (int u = 0; u < num_users; ++u)
    for (int i = 0; i < num_items; ++i) {
      LabeledPair p;
      p.user = u;
      p.item = i;
      p.label = m(u, i) < 0 ? -1 : 1;
      set.pairs.push_back(p);
    }
  return set;
}

RatingTable gen_ratings(int num_users, int num_items, std::uint64_t seed) {
  if (num_users <= 0 || num_items <= 0) fail("gen_ratings sizes must be > 0");
  Rng rng(seed);
  const int rank = 8;

  Eigen::MatrixXd gu(num_users, rank), gi(num_items, rank);
  for (int u = 0; u < num_users; ++u)
    for (int k = 0; k < rank; ++k) gu(u, k) = rng.gaussian();
  for (int i = 0; i < num_items; ++i)
    for (int k = 0; k < rank; ++k) gi(i, k) = rng.gaussian();

  // Zipf-ish popularity over a random item permutation.
  std::vector<double> pop(num_items);
  std::vector<std::size_t> order(num_items);
  for (int i = 0; i < num_items; ++i) order[i] = std::size_t(i);
  rng.shuffle(order);
  double total = 0.0;
  for (int r = 0; r < num_items; ++r) {
    pop[order[r]] = 1.0 / std::pow(double(r + 1), 0.8);
    total += pop[order[r]];
  }
  std::vector<double> cdf(num_items);
  double acc = 0.0;
  for (int i = 0; i < num_items; ++i) {
    acc += pop[i] / total;
    cdf[i] = acc;
  }
  auto draw_item = [&]() {
    double x = rng.uniform();
    return int(std::lower_bound(cdf.begin(), cdf.end(), x) - cdf.begin());
  };

  RatingTable table;
  table.num_users = num_users;
  table.num_items = num_items;
  std::int64_t clock = 874000000;  // arbitrary epoch-seconds origin
  for (int u = 0; u < num_users; ++u) {
    // Activity varies per user; enough history for leave-last splits.
    int budget = 15 + int(rng.below(60));
    budget = std::min(budget, num_items);
    std::unordered_set<int> used;
    int tries = 0;
    while (int(used.size()) < budget && tries < budget * 50) {
      ++tries;
      int i = draw_item();
      if (!used.insert(i).second) continue;
      double affinity = gu.row(u).dot(gi.row(i)) / std::sqrt(double(rank));
      double score = 3.0 + 0.9 * affinity + 0.7 * rng.gaussian();
      int stars = int(std::lround(std::min(5.0, std::max(1.0, score))));
      clock += 1 + std::int64_t(rng.below(4000));
      RatingRow row;
      row.user = u;
      row.item = i;
      row.rating = double(stars);
      row.timestamp = clock;
      table.rows.push_back(row);
    }
  }
  return table;
}

// ---- serialization ----------------------------------------------------------

void save_interactions_txt(const InteractionSet& set,
                           const std::string& path) {
  std::ostringstream out;
  for (const auto& p : set.pairs)
    out << p.user << '\t' << p.item << '\t' << p.label << '\n';
  atomic_write_bytes(path, out.str());
}

InteractionSet load_interactions_txt(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open: " + path);
  InteractionSet set;
  std::string line;
  std::size_t lineno = 0;
  int max_u = -1, max_i = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    LabeledPair p;
    char trailing;
    if (!(ls >> p.user >> p.item >> p.label) || (ls >> trailing))
      fail("malformed pair at line " + std::to_string(lineno) + " of " + path);
    max_u = std::max(max_u, p.user);
    max_i = std::max(max_i, p.item);
    set.pairs.push_back(p);
  }
  set.num_users = max_u + 1;
  set.num_items = max_i + 1;
  set.validate();
  return set;
}

void save_interactions_json(const InteractionSet& set,
                            const std::string& path) {
  nlohmann::json j;
  j["num_users"] = set.num_users;
  j["num_items"] = set.num_items;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : set.pairs) {
    nlohmann::json r;
    r["user"] = p.user;
    r["item"] = p.item;
    r["label"] = p.label;
    if (p.has_rating) r["rating"] = p.rating;
    if (p.has_timestamp) r["timestamp"] = p.timestamp;
    rows.push_back(r);
  }
  j["pairs"] = rows;
  write_json(path, j);
}

InteractionSet load_interactions_json(const std::string& path) {
  nlohmann::json j = read_json(path);
  InteractionSet set;
  set.num_users = j.at("num_users").get<int>();
  set.num_items = j.at("num_items").get<int>();
  for (const auto& r : j.at("pairs")) {
    LabeledPair p;
    p.user = r.at("user").get<int>();
    p.item = r.at("item").get<int>();
    p.label = r.at("label").get<int>();
    if (r.contains("rating")) {
      p.rating = r.at("rating").get<double>();
      p.has_rating = true;
    }
    if (r.contains("timestamp")) {
      p.timestamp = r.at("timestamp").get<std::int64_t>();
      p.has_timestamp = true;
    }
    set.pairs.push_back(p);
  }
  set.validate();
  return set;
}

void save_split(const SplitPlan& plan, const std::string& path) {
  nlohmann::json j;
  j["mode"] = plan.mode;
  j["beta"] = plan.beta;
  j["train"] = plan.train;
  j["val"] = plan.val;
  j["test"] = plan.test;
  j["excluded_users"] = plan.excluded_users;
  write_json(path, j);
}

SplitPlan load_split(const std::string& path) {
  nlohmann::json j = read_json(path);
  SplitPlan plan;
  plan.mode = j.at("mode").get<std::string>();
  plan.beta = j.at("beta").get<double>();
  plan.train = j.at("train").get<std::vector<std::size_t>>();
  plan.val = j.at("val").get<std::vector<std::size_t>>();
  plan.test = j.at("test").get<std::vector<std::size_t>>();
  plan.excluded_users = j.at("excluded_users").get<std::vector<int>>();
  return plan;
}

}  // namespace cfml
