#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace crossval {

// Set partition of {0,...,S-1} in canonical first-occurrence labeling:
// element 0 has label 0 and each new label is the smallest unused one.
// Canonical form is unique per set partition, so label equality is
// set-partition equality.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<int> raw_labels);  // canonicalizes

  static Partition singletons(int S);
  static Partition one_block(int S);

  int size() const { return static_cast<int>(labels_.size()); }
  int num_clusters() const { return num_clusters_; }
  int label(int i) const { return labels_[static_cast<size_t>(i)]; }
  const std::vector<int>& labels() const { return labels_; }

  // clusters()[k] = sorted member indices of cluster k
  std::vector<std::vector<int>> clusters() const;
  // B(s): sorted member indices of the cluster containing s (includes s)
  std::vector<int> block_of(int s) const;

  bool operator==(const Partition& other) const { return labels_ == other.labels_; }
  bool operator!=(const Partition& other) const { return !(*this == other); }
  bool operator<(const Partition& other) const { return labels_ < other.labels_; }

  uint64_t hash() const;
  std::string to_string() const;

 private:
  std::vector<int> labels_;
  int num_clusters_ = 0;
};

struct PartitionHash {
  size_t operator()(const Partition& p) const { return static_cast<size_t>(p.hash()); }
};

// log CRP probability: sum_c lgamma(|c|) + m log(alpha) + lgamma(alpha) - lgamma(alpha + S)
double crp_log_prior(const Partition& p, double alpha);

// Prior law of the cluster count under CRP(alpha): P(m = k) for k = 1..S,
// computed exactly from unsigned Stirling numbers of the first kind. Intended
// for calibrating alpha against an expected number of clusters.
std::vector<double> crp_cluster_count_distribution(int S, double alpha);

// Maximum transfer metric: minimum number of single-element moves turning one
// partition into the other. Computed as S minus the maximum-weight cluster
// matching (overlap counts), solved exactly by a Hungarian assignment.
int transfer_distance(const Partition& a, const Partition& b);

// Restriction to `subset` (order defines the new element order), re-canonicalized.
Partition project(const Partition& p, const std::vector<int>& subset);

// All Bell(S) canonical partitions, each once, in lexicographic label order. S <= 10.
std::vector<Partition> enumerate_partitions(int S);

// Bayes point estimate under the transfer-metric loss over weighted atoms:
// argmin over candidates of sum_k w_k * l(candidate, atom_k). Default candidate
// set: distinct atoms, each refined by greedy single-element moves. Ties break
// toward fewer clusters, then lexicographically smaller labels.
Partition point_estimate_weighted(const std::vector<std::pair<Partition, double>>& atoms,
                                  const std::vector<Partition>* candidates = nullptr);

Partition point_estimate(const std::vector<Partition>& samples,
                         const std::vector<Partition>* candidates = nullptr);

// Expected transfer-metric loss of `candidate` against weighted atoms.
double expected_transfer_loss(const Partition& candidate,
                              const std::vector<std::pair<Partition, double>>& atoms);

}  // namespace crossval
