#include "slideseek/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace slideseek {

using nlohmann::json;

MagClass classify_magnification(double magnification) {
  if (magnification >= 10.0) return MagClass::High;
  if (magnification >= 2.5) return MagClass::Medium;
  return MagClass::Low;
}

std::string to_string(MagClass c) {
  switch (c) {
    case MagClass::Low: return "low";
    case MagClass::Medium: return "medium";
    case MagClass::High: return "high";
  }
  return "low";
}

namespace {

// Deterministic sub-stream seeding: each replicate gets its own generator
// derived from (seed, index) so results are independent of evaluation order.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 sub_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index)));
}

std::string normalize_diagnosis(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double percentile(std::vector<double> sorted, double q) {
  // Linear interpolation between closest ranks on an already-sorted vector.
  if (sorted.empty()) return 0.0;
  double pos = q * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

bool diagnosis_match(const std::string& a, const std::string& b) {
  return normalize_diagnosis(a) == normalize_diagnosis(b);
}

std::vector<OutcomeRecord> load_outcomes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StatsError("cannot open outcomes file: " + path.string());
  std::vector<OutcomeRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      OutcomeRecord r;
      r.case_id = j.at("case_id").get<std::string>();
      r.gold = j.at("gold").get<std::string>();
      r.predictions = j.at("predictions").get<std::vector<std::string>>();
      if (r.predictions.size() != 3) {
        throw StatsError("expected exactly 3 ranked predictions");
      }
      r.confidence = confidence_from_string(j.at("confidence").get<std::string>());
      if (j.contains("regions_by_mag")) {
        r.regions_by_mag = j.at("regions_by_mag").get<std::map<std::string, int>>();
      }
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw StatsError("outcomes line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

StatResult bootstrap_ci(const std::vector<double>& scores, int replicates, std::uint64_t seed) {
  if (scores.empty()) throw StatsError("bootstrap_ci requires a non-empty sample");
  if (replicates < 1) throw StatsError("bootstrap_ci requires at least one replicate");
  StatResult result;
  result.point = mean_of(scores);
  result.n = scores.size();
  result.seed = seed;
  if (scores.size() == 1) {
    result.ci_low = result.ci_high = result.point;
    return result;
  }
  std::vector<double> means(static_cast<std::size_t>(replicates));
  for (int rep = 0; rep < replicates; ++rep) {
    auto rng = sub_rng(seed, static_cast<std::uint64_t>(rep));
    std::uniform_int_distribution<std::size_t> pick(0, scores.size() - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) sum += scores[pick(rng)];
    means[static_cast<std::size_t>(rep)] = sum / static_cast<double>(scores.size());
  }
  std::sort(means.begin(), means.end());
  result.ci_low = percentile(means, 0.025);
  result.ci_high = percentile(means, 0.975);
  return result;
}

StatResult topk_accuracy(const std::vector<OutcomeRecord>& records, int k, std::uint64_t seed,
                         int replicates) {
  if (k != 1 && k != 3) throw StatsError("k must be 1 or 3");
  if (records.empty()) throw StatsError("topk_accuracy requires at least one record");
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const OutcomeRecord& r : records) {
    bool hit = false;
    for (int i = 0; i < k && i < static_cast<int>(r.predictions.size()); ++i) {
      if (diagnosis_match(r.predictions[static_cast<std::size_t>(i)], r.gold)) {
        hit = true;
        break;
      }
    }
    scores.push_back(hit ? 1.0 : 0.0);
  }
  return bootstrap_ci(scores, replicates, seed);
}

double paired_permutation_pvalue(const std::vector<double>& a, const std::vector<double>& b,
                                 int permutations, std::uint64_t seed) {
  if (a.size() != b.size()) throw StatsError("length mismatch between paired samples");
  if (a.empty()) throw StatsError("paired test requires at least one pair");
  if (permutations < 1) throw StatsError("at least one permutation is required");
  std::vector<double> diffs(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diffs[i] = a[i] - b[i];
  double observed = std::abs(std::accumulate(diffs.begin(), diffs.end(), 0.0));
  if (observed == 0.0) return 1.0;
  const double eps = 1e-12;
  int hits = 0;
  for (int rep = 0; rep < permutations; ++rep) {
    auto rng = sub_rng(seed, static_cast<std::uint64_t>(rep));
    std::bernoulli_distribution flip(0.5);
    double sum = 0.0;
    for (double d : diffs) sum += flip(rng) ? -d : d;
    if (std::abs(sum) >= observed - eps) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(permutations + 1);
}

double unpaired_permutation_pvalue(const std::vector<double>& group_a,
                                   const std::vector<double>& group_b, int permutations,
                                   std::uint64_t seed) {
  if (group_a.empty() || group_b.empty()) {
    throw StatsError("unpaired test requires two non-empty groups");
  }
  if (permutations < 1) throw StatsError("at least one permutation is required");
  double observed = std::abs(mean_of(group_a) - mean_of(group_b));
  std::vector<double> pooled(group_a);
  pooled.insert(pooled.end(), group_b.begin(), group_b.end());
  const std::size_t na = group_a.size();
  const double eps = 1e-12;
  int hits = 0;
  for (int rep = 0; rep < permutations; ++rep) {
    auto rng = sub_rng(seed, static_cast<std::uint64_t>(rep));
    std::vector<double> sample = pooled;
    std::shuffle(sample.begin(), sample.end(), rng);
    double ma = std::accumulate(sample.begin(), sample.begin() + static_cast<long>(na), 0.0) /
                static_cast<double>(na);
    double mb = std::accumulate(sample.begin() + static_cast<long>(na), sample.end(), 0.0) /
                static_cast<double>(sample.size() - na);
    if (std::abs(ma - mb) >= observed - eps) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(permutations + 1);
}

std::map<MagClass, MagSummary> exploration_summary(
    const std::vector<std::vector<TraceEvent>>& traces) {
  if (traces.empty()) throw StatsError("exploration_summary requires at least one trace");
  std::map<MagClass, std::vector<double>> counts;
  for (const auto& trace : traces) {
    std::map<MagClass, double> per_trace = {
        {MagClass::Low, 0.0}, {MagClass::Medium, 0.0}, {MagClass::High, 0.0}};
    for (const TraceEvent& ev : trace) {
      if (ev.kind != EventKind::View) continue;
      RegionSpec region = region_from_json(ev.payload.at("region"));
      per_trace[classify_magnification(region.magnification)] += 1.0;
    }
    for (const auto& [cls, n] : per_trace) counts[cls].push_back(n);
  }
  std::map<MagClass, MagSummary> out;
  for (const auto& [cls, v] : counts) {
    out[cls] = MagSummary{mean_of(v), sample_sd(v), v.size()};
  }
  return out;
}

std::map<Confidence, StatResult> confidence_stratified_accuracy(
    const std::vector<OutcomeRecord>& records, std::uint64_t seed, int replicates) {
  std::map<Confidence, std::vector<OutcomeRecord>> strata;
  for (const OutcomeRecord& r : records) strata[r.confidence].push_back(r);
  std::map<Confidence, StatResult> out;
  for (const auto& [conf, recs] : strata) {
    if (recs.empty()) continue;
    out[conf] = topk_accuracy(recs, 1, seed, replicates);
  }
  return out;
}

}  // namespace slideseek
