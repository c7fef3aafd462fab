#include "crossval/clusterstats.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "crossval/errors.hpp"
#include "crossval/parallel.hpp"

namespace crossval {

std::string to_string(ClusterStatMethod m) {
  return m == ClusterStatMethod::posterior_averaged ? "posterior_averaged" : "plug_in";
}

namespace {

std::vector<std::string> block_ids(const Partition& p, const StudyCollection& collection,
                                   int s_index) {
  std::vector<std::string> ids;
  for (int i : p.block_of(s_index)) ids.push_back(collection.studies[static_cast<size_t>(i)].id);
  return ids;
}

struct BlockKeyHash {
  size_t operator()(const std::vector<int>& v) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (int x : v) h = hash_combine(h, static_cast<uint64_t>(x));
    return static_cast<size_t>(h);
  }
};

}  // namespace

ClusterStatEstimate estimate_zBs(const std::vector<PosteriorSample>& samples,
                                 const StudyCollection& collection, const LearnerSpec& learner,
                                 const MetricSpec& metric, const std::string& s,
                                 ClusterStatMethod method, const RngStream& rng,
                                 ModelCache* cache) {
  if (samples.empty()) throw DataError("estimate_zBs: no posterior samples");
  const int s_index = collection.index_of(s);
  if (s_index < 0) throw DataError("estimate_zBs: unknown study '" + s + "'");

  ClusterStatEstimate out;
  out.target_study = s;
  out.method = method;

  if (method == ClusterStatMethod::plug_in) {
    std::vector<Partition> parts;
    parts.reserve(samples.size());
    for (const auto& sample : samples) parts.push_back(sample.partition);
    Partition pi_hat = point_estimate(parts);
    std::vector<int> block = pi_hat.block_of(s_index);
    if (block.size() <= 1) return out;  // undefined: the plug-in block is a singleton
    out.value = compute_z_combined(collection, block_ids(pi_hat, collection, s_index), s,
                                   learner, metric, rng, cache);
    out.conditioning_probability = 1.0;
    out.n_effective_samples = static_cast<int>(samples.size());
    return out;
  }

  // posterior averaging over draws with B(s) != {s}; distinct blocks memoized
  std::unordered_map<std::vector<int>, double, BlockKeyHash> block_value;
  double acc = 0.0;
  int qualifying = 0;
  for (const auto& sample : samples) {
    std::vector<int> block = sample.partition.block_of(s_index);
    if (block.size() <= 1) continue;
    ++qualifying;
    auto it = block_value.find(block);
    if (it == block_value.end()) {
      std::vector<std::string> ids;
      for (int i : block) ids.push_back(collection.studies[static_cast<size_t>(i)].id);
      double value = compute_z_combined(collection, ids, s, learner, metric, rng, cache);
      it = block_value.emplace(std::move(block), value).first;
    }
    acc += it->second;
  }
  out.n_effective_samples = qualifying;
  out.conditioning_probability = qualifying / static_cast<double>(samples.size());
  if (qualifying > 0) out.value = acc / qualifying;
  return out;
}

std::vector<CurvePoint> estimate_zjBs_curve(const std::vector<PosteriorSample>& samples,
                                            const StudyCollection& collection,
                                            const LearnerSpec& learner, const MetricSpec& metric,
                                            const std::string& s, const std::vector<int>& j_grid,
                                            int iterations, const RngStream& rng,
                                            ModelCache* cache, int workers) {
  if (samples.empty()) throw DataError("estimate_zjBs_curve: no posterior samples");
  if (!std::is_sorted(j_grid.begin(), j_grid.end()))
    throw ConfigError("j_grid must be sorted ascending");
  const int s_index = collection.index_of(s);
  if (s_index < 0) throw DataError("estimate_zjBs_curve: unknown study '" + s + "'");

  // pooled complement size per distinct block
  auto pool_rows = [&](const std::vector<int>& block) {
    long total = 0;
    for (int i : block)
      if (i != s_index) total += collection.studies[static_cast<size_t>(i)].n();
    return total;
  };

  std::vector<std::string> all_ids;
  long total_pool = 0;
  for (const auto& study : collection.studies) {
    all_ids.push_back(study.id);
    if (study.id != s) total_pool += study.n();
  }

  std::vector<CurvePoint> out(j_grid.size());
  parallel_for(static_cast<int>(j_grid.size()), workers, [&](int gi) {
    const int j = j_grid[static_cast<size_t>(gi)];
    CurvePoint point;
    point.estimate.target_study = s;
    point.estimate.method = ClusterStatMethod::posterior_averaged;
    point.estimate.j = j;

    std::unordered_map<std::vector<int>, double, BlockKeyHash> block_value;
    double acc = 0.0;
    int qualifying = 0;
    for (const auto& sample : samples) {
      std::vector<int> block = sample.partition.block_of(s_index);
      if (block.size() <= 1 || pool_rows(block) < j) continue;
      ++qualifying;
      auto it = block_value.find(block);
      if (it == block_value.end()) {
        std::vector<std::string> ids;
        for (int i : block) ids.push_back(collection.studies[static_cast<size_t>(i)].id);
        double value = compute_z_subsampled(collection, ids, s, j, iterations, learner, metric,
                                            rng, cache);
        it = block_value.emplace(std::move(block), value).first;
      }
      acc += it->second;
    }
    point.estimate.n_effective_samples = qualifying;
    point.estimate.conditioning_probability = qualifying / static_cast<double>(samples.size());
    if (qualifying > 0) point.estimate.value = acc / qualifying;

    if (total_pool >= j)
      point.reference =
          compute_z_subsampled(collection, all_ids, s, j, iterations, learner, metric, rng, cache);
    out[static_cast<size_t>(gi)] = std::move(point);
  });
  return out;
}

AdjustedPartitionPosterior threshold_adjusted_posterior(
    const std::map<Partition, double>& posterior_low,
    const std::map<Partition, double>& posterior_high, const std::vector<int>& subset) {
  if (posterior_low.empty() || posterior_high.empty())
    throw DataError("threshold adjustment needs non-empty posteriors");

  auto check_normalized = [](const std::map<Partition, double>& p, const char* which) {
    double total = 0.0;
    for (const auto& [pi, prob] : p) {
      if (prob < -1e-12) throw DataError(std::string(which) + " posterior has negative mass");
      total += prob;
    }
    if (std::abs(total - 1.0) > 1e-6)
      throw DataError(std::string(which) + " posterior is not normalized (total " +
                      std::to_string(total) + ")");
    return total;
  };
  check_normalized(posterior_low, "low-threshold");
  check_normalized(posterior_high, "high-threshold");

  const int subset_size = static_cast<int>(subset.size());
  for (const auto& [pi, prob] : posterior_high)
    if (pi.size() != subset_size)
      throw DataError("high-threshold posterior must be over the subset studies");

  // fiber masses of the projection under the low posterior
  std::map<Partition, double> fiber_mass;
  for (const auto& [pi, prob] : posterior_low) fiber_mass[project(pi, subset)] += prob;

  for (const auto& [delta, prob] : posterior_high) {
    if (prob <= 0.0) continue;
    auto it = fiber_mass.find(delta);
    if (it == fiber_mass.end() || it->second <= 0.0)
      throw DataError(
          "degenerate fiber: the high-threshold posterior puts mass " + std::to_string(prob) +
          " on projected partition " + delta.to_string() +
          " whose fiber has zero low-threshold mass; increase sampler iterations so the "
          "low-threshold posterior covers it");
  }

  AdjustedPartitionPosterior out;
  out.included_high = subset;
  out.high_posterior = posterior_high;
  double total = 0.0;
  for (const auto& [pi, prob] : posterior_low) {
    Partition delta = project(pi, subset);
    auto hit = posterior_high.find(delta);
    double high = hit == posterior_high.end() ? 0.0 : hit->second;
    double adjusted = high > 0.0 ? prob * high / fiber_mass.at(delta) : 0.0;
    out.probabilities[pi] = adjusted;
    total += adjusted;
  }
  // exact renormalization guards the 1e-9 sum invariant against roundoff
  if (total <= 0.0) throw DataError("threshold adjustment produced an empty posterior");
  for (auto& [pi, prob] : out.probabilities) prob /= total;
  return out;
}

double AdjustedPartitionPosterior::pushforward_deviation() const {
  std::map<Partition, double> pushed;
  for (const auto& [p, prob] : probabilities) pushed[project(p, included_high)] += prob;
  double dev = 0.0;
  for (const auto& [delta, prob] : high_posterior) {
    auto it = pushed.find(delta);
    dev = std::max(dev, std::abs((it == pushed.end() ? 0.0 : it->second) - prob));
  }
  return dev;
}

AdjustedPartitionPosterior run_threshold_pipeline(const StudyCollection& collection,
                                                  const LearnerSpec& learner,
                                                  const MetricSpec& metric, int threshold_low,
                                                  int threshold_high,
                                                  const ThresholdPipelineConfig& config,
                                                  const RngStream& rng) {
  collection.validate();
  if (threshold_low > threshold_high)
    throw ConfigError("threshold_low must not exceed threshold_high");
  for (const auto& study : collection.studies)
    if (study.n() < threshold_low)
      throw DataError("threshold_low must not exceed the smallest study size (study '" +
                      study.id + "' has " + std::to_string(study.n()) + " rows)");

  std::vector<int> subset;
  for (int i = 0; i < collection.size(); ++i)
    if (collection.studies[static_cast<size_t>(i)].n() >= threshold_high) subset.push_back(i);
  if (subset.size() < 2)
    throw DataError("fewer than 2 studies meet threshold_high=" + std::to_string(threshold_high));

  auto posterior_for = [&](int n0, const RngStream& stage_rng) {
    ZMatrix z = compute_z_adjusted(collection, learner, metric, n0, config.z_iterations,
                                   stage_rng.child("z"), config.workers);
    BootstrapOptions boot = config.bootstrap;
    boot.training_size = n0;
    boot.subsample_iterations = config.z_iterations;
    boot.workers = config.workers;
    ZReplicateSet reps = bootstrap_z(collection, learner, metric, boot, stage_rng.child("boot"));
    DispersionEstimate disp =
        estimate_dispersion(reps, config.shrinkage_lambda, config.jitter_floor);
    ArrayModel model(z, disp, config.model);
    if (config.prefer_exact && z.size() <= 10) return model.exact_posterior();
    GibbsRun run = model.gibbs(stage_rng.child("gibbs"));
    std::map<Partition, double> freq;
    for (const auto& sample : run.samples)
      freq[sample.partition] += 1.0 / static_cast<double>(run.samples.size());
    return freq;
  };

  std::map<Partition, double> low = posterior_for(threshold_low, rng.child("low"));
  std::map<Partition, double> high = posterior_for(threshold_high, rng.child("high"));

  AdjustedPartitionPosterior out = threshold_adjusted_posterior(low, high, subset);
  out.threshold_low = threshold_low;
  out.threshold_high = threshold_high;
  return out;
}

}  // namespace crossval
