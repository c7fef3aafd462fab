#include "crossval/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "crossval/errors.hpp"
#include "crossval/rng.hpp"

namespace crossval {

Partition::Partition(std::vector<int> raw_labels) {
  labels_.resize(raw_labels.size());
  std::unordered_map<int, int> remap;
  int next = 0;
  for (size_t i = 0; i < raw_labels.size(); ++i) {
    auto it = remap.find(raw_labels[i]);
    if (it == remap.end()) it = remap.emplace(raw_labels[i], next++).first;
    labels_[i] = it->second;
  }
  num_clusters_ = next;
}

Partition Partition::singletons(int S) {
  std::vector<int> labels(static_cast<size_t>(S));
  for (int i = 0; i < S; ++i) labels[static_cast<size_t>(i)] = i;
  return Partition(std::move(labels));
}

Partition Partition::one_block(int S) {
  return Partition(std::vector<int>(static_cast<size_t>(S), 0));
}

std::vector<std::vector<int>> Partition::clusters() const {
  std::vector<std::vector<int>> out(static_cast<size_t>(num_clusters_));
  for (int i = 0; i < size(); ++i) out[static_cast<size_t>(labels_[static_cast<size_t>(i)])].push_back(i);
  return out;
}

std::vector<int> Partition::block_of(int s) const {
  std::vector<int> out;
  int target = label(s);
  for (int i = 0; i < size(); ++i)
    if (label(i) == target) out.push_back(i);
  return out;
}

uint64_t Partition::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (int v : labels_) h = hash_combine(h, static_cast<uint64_t>(v));
  return h;
}

std::string Partition::to_string() const {
  std::string s = "[";
  for (size_t i = 0; i < labels_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(labels_[i]);
  }
  return s + "]";
}

double crp_log_prior(const Partition& p, double alpha) {
  if (!(alpha > 0)) throw ConfigError("CRP concentration alpha must be positive");
  const int S = p.size();
  std::vector<int> sizes(static_cast<size_t>(p.num_clusters()), 0);
  for (int i = 0; i < S; ++i) sizes[static_cast<size_t>(p.label(i))]++;
  double lp = p.num_clusters() * std::log(alpha) + std::lgamma(alpha) - std::lgamma(alpha + S);
  for (int c : sizes) lp += std::lgamma(static_cast<double>(c));
  return lp;
}

std::vector<double> crp_cluster_count_distribution(int S, double alpha) {
  if (S < 1) throw ConfigError("S must be >= 1");
  if (!(alpha > 0)) throw ConfigError("alpha must be positive");
  // unsigned Stirling numbers c(n, k): c(n+1, k) = n c(n, k) + c(n, k-1),
  // carried in log space against overflow
  std::vector<double> log_c(static_cast<size_t>(S) + 1,
                            -std::numeric_limits<double>::infinity());
  log_c[1] = 0.0;  // c(1,1) = 1
  for (int n = 1; n < S; ++n) {
    std::vector<double> next(static_cast<size_t>(S) + 1,
                             -std::numeric_limits<double>::infinity());
    for (int k = 1; k <= n + 1; ++k) {
      double from_same = k <= n ? std::log(static_cast<double>(n)) + log_c[static_cast<size_t>(k)]
                                : -std::numeric_limits<double>::infinity();
      double from_new = log_c[static_cast<size_t>(k) - 1];
      double hi = std::max(from_same, from_new);
      if (std::isinf(hi)) continue;
      next[static_cast<size_t>(k)] =
          hi + std::log(std::exp(from_same - hi) + std::exp(from_new - hi));
    }
    log_c = std::move(next);
  }
  // P(m = k) = c(S, k) alpha^k / rising_factorial(alpha, S)
  double log_rising = std::lgamma(alpha + S) - std::lgamma(alpha);
  std::vector<double> pmf(static_cast<size_t>(S));
  for (int k = 1; k <= S; ++k)
    pmf[static_cast<size_t>(k) - 1] =
        std::exp(log_c[static_cast<size_t>(k)] + k * std::log(alpha) - log_rising);
  return pmf;
}

namespace {

// Exact max-weight assignment on a k x k matrix (Hungarian, potentials form),
// returning the maximum total weight. O(k^3).
long long max_assignment(const std::vector<std::vector<long long>>& w) {
  const int n = static_cast<int>(w.size());
  // minimize cost = -weight
  const long long INF = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(static_cast<size_t>(n) + 1), v(static_cast<size_t>(n) + 1);
  std::vector<int> match(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<long long> minv(static_cast<size_t>(n) + 1, INF);
    std::vector<char> used(static_cast<size_t>(n) + 1, false);
    do {
      used[static_cast<size_t>(j0)] = true;
      int i0 = match[static_cast<size_t>(j0)], j1 = 0;
      long long delta = INF;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        long long cur = -w[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                        u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  long long total = 0;
  for (int j = 1; j <= n; ++j)
    total += w[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)][static_cast<size_t>(j - 1)];
  return total;
}

}  // namespace

int transfer_distance(const Partition& a, const Partition& b) {
  if (a.size() != b.size())
    throw DataError("transfer_distance: partitions have different sizes");
  const int S = a.size();
  const int k = std::max(a.num_clusters(), b.num_clusters());
  // overlap counts, padded with empty clusters to a square matrix
  std::vector<std::vector<long long>> overlap(static_cast<size_t>(k),
                                              std::vector<long long>(static_cast<size_t>(k), 0));
  for (int i = 0; i < S; ++i)
    overlap[static_cast<size_t>(a.label(i))][static_cast<size_t>(b.label(i))]++;
  return S - static_cast<int>(max_assignment(overlap));
}

Partition project(const Partition& p, const std::vector<int>& subset) {
  if (subset.empty()) throw DataError("project: empty subset");
  std::unordered_set<int> seen;
  std::vector<int> raw;
  raw.reserve(subset.size());
  for (int idx : subset) {
    if (idx < 0 || idx >= p.size())
      throw DataError("project: index " + std::to_string(idx) + " out of range");
    if (!seen.insert(idx).second)
      throw DataError("project: duplicate index " + std::to_string(idx));
    raw.push_back(p.label(idx));
  }
  return Partition(std::move(raw));
}

std::vector<Partition> enumerate_partitions(int S) {
  if (S < 1) throw ConfigError("enumerate_partitions: S must be >= 1");
  if (S > 10)
    throw ConfigError("enumerate_partitions: S = " + std::to_string(S) +
                      " exceeds the enumeration guard (10)");
  // Generate restricted growth strings in lexicographic order; these are
  // exactly the canonical label vectors.
  std::vector<Partition> out;
  std::vector<int> labels(static_cast<size_t>(S), 0);
  std::function<void(int, int)> rec = [&](int i, int max_used) {
    if (i == S) {
      out.emplace_back(labels);
      return;
    }
    for (int c = 0; c <= max_used + 1 && c < S; ++c) {
      labels[static_cast<size_t>(i)] = c;
      rec(i + 1, std::max(max_used, c));
    }
  };
  labels[0] = 0;
  rec(1, 0);
  return out;
}

double expected_transfer_loss(const Partition& candidate,
                              const std::vector<std::pair<Partition, double>>& atoms) {
  double total_w = 0, loss = 0;
  for (const auto& [atom, w] : atoms) {
    loss += w * transfer_distance(candidate, atom);
    total_w += w;
  }
  if (total_w <= 0) throw DataError("point estimate: atom weights must have positive total");
  return loss / total_w;
}

namespace {

// true if a is preferred over b under the tie-break order:
// lower loss, then fewer clusters, then lexicographically smaller labels
bool better(double loss_a, const Partition& a, double loss_b, const Partition& b) {
  if (loss_a != loss_b) return loss_a < loss_b;
  if (a.num_clusters() != b.num_clusters()) return a.num_clusters() < b.num_clusters();
  return a.labels() < b.labels();
}

// Greedy refinement: move single elements between clusters (or to a new
// singleton) while the expected loss decreases.
Partition refine(Partition p, const std::vector<std::pair<Partition, double>>& atoms) {
  double current = expected_transfer_loss(p, atoms);
  bool improved = true;
  while (improved) {
    improved = false;
    const int S = p.size();
    for (int i = 0; i < S && !improved; ++i) {
      int m = p.num_clusters();
      for (int target = 0; target <= m && !improved; ++target) {
        if (target == p.label(i)) continue;
        std::vector<int> raw = p.labels();
        raw[static_cast<size_t>(i)] = target;  // target == m opens a new cluster
        Partition moved(std::move(raw));
        if (moved == p) continue;
        double loss = expected_transfer_loss(moved, atoms);
        if (loss < current) {
          p = std::move(moved);
          current = loss;
          improved = true;
        }
      }
    }
  }
  return p;
}

}  // namespace

Partition point_estimate_weighted(const std::vector<std::pair<Partition, double>>& atoms,
                                  const std::vector<Partition>* candidates) {
  if (atoms.empty()) throw DataError("point estimate: no posterior atoms");
  std::vector<Partition> cand;
  if (candidates) {
    cand = *candidates;
  } else {
    // distinct atoms, heaviest first; diffuse posteriors are capped to keep
    // the search quadratic only in the number of plausible candidates
    constexpr size_t kMaxCandidates = 64;
    std::unordered_map<Partition, double, PartitionHash> weight;
    std::vector<Partition> order;
    for (const auto& [atom, w] : atoms) {
      if (!weight.count(atom)) order.push_back(atom);
      weight[atom] += w;
    }
    std::stable_sort(order.begin(), order.end(), [&](const Partition& a, const Partition& b) {
      return weight.at(a) > weight.at(b);
    });
    if (order.size() > kMaxCandidates) order.resize(kMaxCandidates);
    std::unordered_set<Partition, PartitionHash> seen;
    for (const auto& atom : order) {
      Partition refined = refine(atom, atoms);
      if (seen.insert(refined).second) cand.push_back(std::move(refined));
    }
  }
  if (cand.empty()) throw DataError("point estimate: empty candidate set");

  Partition best = cand.front();
  double best_loss = expected_transfer_loss(best, atoms);
  for (size_t i = 1; i < cand.size(); ++i) {
    double loss = expected_transfer_loss(cand[i], atoms);
    if (better(loss, cand[i], best_loss, best)) {
      best = cand[i];
      best_loss = loss;
    }
  }
  return best;
}

Partition point_estimate(const std::vector<Partition>& samples,
                         const std::vector<Partition>* candidates) {
  std::vector<std::pair<Partition, double>> atoms;
  std::unordered_map<Partition, size_t, PartitionHash> pos;
  for (const auto& s : samples) {
    auto it = pos.find(s);
    if (it == pos.end()) {
      pos.emplace(s, atoms.size());
      atoms.emplace_back(s, 1.0);
    } else {
      atoms[it->second].second += 1.0;
    }
  }
  return point_estimate_weighted(atoms, candidates);
}

}  // namespace crossval
