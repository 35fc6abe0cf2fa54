#pragma once

#include "slideseek/trace.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace slideseek {

struct StatsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MagClass { Low, Medium, High };

/// high >= 10x, medium in [2.5, 10), low < 2.5.
MagClass classify_magnification(double magnification);
std::string to_string(MagClass c);

struct OutcomeRecord {
  std::string case_id;
  std::string gold;
  std::vector<std::string> predictions;  // exactly 3, ranked
  Confidence confidence = Confidence::Low;
  std::map<std::string, int> regions_by_mag;
};

struct StatResult {
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

/// Case-insensitive match after whitespace normalization.
bool diagnosis_match(const std::string& a, const std::string& b);

std::vector<OutcomeRecord> load_outcomes(const std::filesystem::path& path);

/// Fraction of records whose gold appears in the first k predictions, with a
/// percentile bootstrap CI. k must be 1 or 3.
StatResult topk_accuracy(const std::vector<OutcomeRecord>& records, int k,
                         std::uint64_t seed = 0, int replicates = 1000);

/// Percentile (2.5/97.5) bootstrap over resampled means; deterministic for a
/// fixed seed, with per-replicate RNG streams derived from (seed, index).
StatResult bootstrap_ci(const std::vector<double>& scores, int replicates = 1000,
                        std::uint64_t seed = 0);

/// Two-sided paired permutation test (random pair swaps); p uses add-one
/// smoothing: (hits + 1) / (permutations + 1).
double paired_permutation_pvalue(const std::vector<double>& a, const std::vector<double>& b,
                                 int permutations = 1000, std::uint64_t seed = 0);

/// Two-sided unpaired test via group relabeling; same p formula.
double unpaired_permutation_pvalue(const std::vector<double>& group_a,
                                   const std::vector<double>& group_b, int permutations = 1000,
                                   std::uint64_t seed = 0);

struct MagSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample sd (n-1)
  std::size_t n_traces = 0;
};

/// Counts `view` events per trace bucketed by magnification class.
std::map<MagClass, MagSummary> exploration_summary(
    const std::vector<std::vector<TraceEvent>>& traces);

/// Top-1 accuracy + bootstrap CI per confidence stratum; empty strata are
/// omitted.
std::map<Confidence, StatResult> confidence_stratified_accuracy(
    const std::vector<OutcomeRecord>& records, std::uint64_t seed = 0, int replicates = 1000);

}  // namespace slideseek
