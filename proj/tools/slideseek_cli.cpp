// Command-line front end: synthesize slides, run explorations, replay traces,
// and evaluate outcome files.
//
// Exit codes: 0 success, 1 validation failure (replay mismatch, bad input
// values), 2 I/O or configuration errors.

#include "slideseek/run.hpp"
#include "slideseek/stats.hpp"
#include "slideseek/synthetic.hpp"
#include "slideseek/trace.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace slideseek;

int cmd_synth(const std::string& spec_file, const std::string& out_dir) {
  SyntheticSlideSpec spec = parse_slide_spec_json(spec_file);
  PyramidSlide slide = generate_synthetic(spec, out_dir);
  std::cout << "wrote slide '" << slide.slide_id << "' (" << slide.base_width << " x "
            << slide.base_height << " @ " << slide.base_magnification << "x, "
            << slide.levels.size() << " levels) to " << out_dir << "\n";
  return 0;
}

struct ExploreArgs {
  std::string slide_dir;
  std::string out_dir = "run_out";
  std::string config_file;
  std::string clinical_context = "Histologic evaluation of a surgical specimen.";
  std::vector<std::string> overrides;  // key=value, applied after the file
};

int cmd_explore(const ExploreArgs& args) {
  RunConfig config;
  if (!args.config_file.empty()) config = parse_config_file(args.config_file);
  for (const std::string& kv : args.overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
    apply_config_entry(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  RunResult result = run_exploration(args.slide_dir, config, args.out_dir, args.clinical_context);
  std::cout << "primary diagnosis: " << result.report.primary_diagnosis << "\n"
            << "confidence: " << to_string(result.report.confidence) << "\n"
            << "trace: " << result.trace_path.string() << "\n"
            << "report: " << result.report_json_path.string() << "\n";
  return 0;
}

int cmd_replay(const std::string& trace_file, const std::string& slide_dir) {
  ReplayResult result = replay_run(trace_file, slide_dir);
  if (result.ok) {
    std::cout << "replay ok: trace is consistent with the slide\n";
    return 0;
  }
  for (const std::string& m : result.mismatches) std::cerr << "mismatch: " << m << "\n";
  return 1;
}

void print_result(const std::string& label, const StatResult& r) {
  std::printf("%-24s %.4f  [%.4f, %.4f]  (n=%zu, seed=%llu)\n", label.c_str(), r.point, r.ci_low,
              r.ci_high, r.n, static_cast<unsigned long long>(r.seed));
}

struct EvalArgs {
  std::string outcomes;
  std::string baseline;  // optional second file -> paired comparison
  int k = 1;
  std::uint64_t seed = 0;
  int replicates = 1000;
  int permutations = 1000;
};

int cmd_eval(const EvalArgs& args) {
  auto records = load_outcomes(args.outcomes);
  StatResult acc = topk_accuracy(records, args.k, args.seed, args.replicates);
  print_result("top-" + std::to_string(args.k) + " accuracy", acc);

  for (const auto& [conf, r] : confidence_stratified_accuracy(records, args.seed, args.replicates)) {
    print_result("  " + to_string(conf) + " confidence", r);
  }

  if (!args.baseline.empty()) {
    auto baseline = load_outcomes(args.baseline);
    if (baseline.size() != records.size()) {
      throw StatsError("length mismatch: " + std::to_string(records.size()) + " vs " +
                       std::to_string(baseline.size()) + " records");
    }
    auto scores = [&](const std::vector<OutcomeRecord>& rs) {
      std::vector<double> s;
      for (const auto& r : rs) {
        bool hit = false;
        for (int i = 0; i < args.k && i < static_cast<int>(r.predictions.size()); ++i) {
          hit = hit || diagnosis_match(r.predictions[static_cast<std::size_t>(i)], r.gold);
        }
        s.push_back(hit ? 1.0 : 0.0);
      }
      return s;
    };
    double p = paired_permutation_pvalue(scores(records), scores(baseline), args.permutations,
                                         args.seed);
    StatResult base_acc = topk_accuracy(baseline, args.k, args.seed, args.replicates);
    print_result("baseline accuracy", base_acc);
    std::printf("paired permutation p = %.4f (%d permutations)\n", p, args.permutations);
  }
  return 0;
}

int cmd_stats(const std::vector<std::string>& trace_files) {
  std::vector<std::vector<TraceEvent>> traces;
  for (const std::string& f : trace_files) traces.push_back(load_trace(f));
  for (const auto& [cls, s] : exploration_summary(traces)) {
    std::printf("%-8s %.1f +/- %.1f views per trace (%zu traces)\n", to_string(cls).c_str(),
                s.mean, s.sd, s.n_traces);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent whole-slide exploration engine"};
  app.require_subcommand(1);

  std::string spec_file, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic pyramidal slide");
  synth->add_option("spec", spec_file, "Slide spec JSON")->required();
  synth->add_option("out", synth_out, "Output slide directory")->required();

  ExploreArgs explore_args;
  auto* explore = app.add_subcommand("explore", "Run a supervised exploration");
  explore->add_option("slide", explore_args.slide_dir, "Slide directory")->required();
  explore->add_option("-o,--out", explore_args.out_dir, "Output directory");
  explore->add_option("-c,--config", explore_args.config_file, "key=value config file");
  explore->add_option("--context", explore_args.clinical_context, "Clinical context string");
  explore->add_option("--set", explore_args.overrides,
                      "Config override key=value (repeatable, wins over the file)");

  std::string replay_trace, replay_slide;
  auto* replay = app.add_subcommand("replay", "Verify a trace against its slide");
  replay->add_option("trace", replay_trace, "trace.jsonl path")->required();
  replay->add_option("slide", replay_slide, "Slide directory")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score an outcomes JSONL file");
  eval->add_option("outcomes", eval_args.outcomes, "Outcomes JSONL")->required();
  eval->add_option("--baseline", eval_args.baseline, "Second outcomes JSONL for a paired test");
  eval->add_option("--k", eval_args.k, "Top-k (1 or 3)")->check(CLI::IsMember({1, 3}));
  eval->add_option("--seed", eval_args.seed, "RNG seed");
  eval->add_option("--replicates", eval_args.replicates, "Bootstrap replicates");
  eval->add_option("--permutations", eval_args.permutations, "Permutation count");

  std::vector<std::string> stats_traces;
  auto* stats = app.add_subcommand("stats", "Summarize views per magnification class");
  stats->add_option("traces", stats_traces, "trace.jsonl paths")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec_file, synth_out);
    if (*explore) return cmd_explore(explore_args);
    if (*replay) return cmd_replay(replay_trace, replay_slide);
    if (*eval) return cmd_eval(eval_args);
    if (*stats) return cmd_stats(stats_traces);
  } catch (const slideseek::StatsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const slideseek::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
