#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "dkm/checkpoint.hpp"
#include "dkm/errors.hpp"
#include "dkm/evalkit.hpp"
#include "dkm/format.hpp"
#include "dkm/gradcheck.hpp"
#include "dkm/run_config.hpp"
#include "dkm/trainer.hpp"

namespace dkm::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load(const CommonOptions& opts) {
  RunConfig cfg = load_run_config(opts.config);
  if (opts.seed) override_seed(cfg, *opts.seed);
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  return cfg;
}

fs::path run_file(const RunConfig& cfg, const std::string& suffix) {
  return cfg.run_dir() / (cfg.run_id + suffix);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string confusion_csv(const ConfusionReport& report) {
  std::ostringstream s;
  write_confusion_csv(s, report);
  return s.str();
}

void write_percent_table(std::ostream& s, const ConfusionReport& report) {
  s << "per-class cluster percentages (columns sum to 100%):\n";
  s << std::setw(10) << "cluster";
  for (int c : report.class_ids) s << std::setw(10) << ("class " + std::to_string(c));
  s << '\n';
  s << std::fixed << std::setprecision(1);
  for (std::size_t k = 0; k < report.num_clusters(); ++k) {
    s << std::setw(10) << k;
    for (std::size_t c = 0; c < report.num_classes(); ++c) {
      s << std::setw(9) << 100.0 * report.per_class_pct(k, c) << '%';
    }
    s << '\n';
  }
  s.unsetf(std::ios::floatfield);
}

std::string eval_summary(const RunConfig& cfg, const std::string& command, const EvalResult& eval,
                         const std::vector<std::string>& warnings) {
  std::ostringstream s;
  s << "run_id: " << cfg.run_id << '\n';
  s << "command: " << command << '\n';
  s << "seed: " << cfg.train.seed << '\n';
  s << "K: " << cfg.train.k << '\n';
  s << "fg_bg_accuracy: " << format_double(eval.fg_accuracy) << '\n';
  s << "foreground_test_samples: " << eval.fg_count << '\n';
  if (eval.no_foreground) {
    s << "no_foreground: true\n";
  } else {
    s << "purity: " << format_double(eval.report.purity) << '\n';
    s << "matched_accuracy: " << format_double(eval.report.matched_accuracy) << '\n';
    s << "majority_classes:";
    for (int c : eval.report.majority_map) s << ' ' << c;
    s << '\n';
    write_percent_table(s, eval.report);
  }
  for (const auto& w : warnings) s << "warning: " << w << '\n';
  return s.str();
}

EvalResult evaluate_bundle(const ModelBundle& model, const PreparedData& data) {
  return evaluate_model(model.net, model.head, model.standardizer.apply(data.test));
}

void write_eval_files(const RunConfig& cfg, const std::string& command, const EvalResult& eval,
                      const std::vector<std::string>& warnings) {
  std::string csv = eval.no_foreground ? std::string("table,cluster\n") : confusion_csv(eval.report);
  write_text(run_file(cfg, ".confusion.csv"), csv);
  write_text(run_file(cfg, ".summary.txt"), eval_summary(cfg, command, eval, warnings));
}

int cmd_train(const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load(opts);
  fs::create_directories(cfg.run_dir());
  const PreparedData data = prepare_data(cfg);
  ModelBundle model;
  model.standardizer = Standardizer::fit(data.train.features);
  TrainedModel trained;
  try {
    trained = train(model.standardizer.apply(data.train).batch(), cfg.train);
  } catch (const divergence_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  for (const auto& w : trained.history.warnings) err << "warning: " << w << '\n';
  model.net = std::move(trained.net);
  model.head = std::move(trained.head);

  save_checkpoint(run_file(cfg, ".ckpt"), model);
  std::ostringstream hist;
  write_history_csv(hist, trained.history);
  write_text(run_file(cfg, ".history.csv"), hist.str());
  const EvalResult eval = evaluate_bundle(model, data);
  write_eval_files(cfg, "train", eval, trained.history.warnings);

  const auto& last = trained.history.epochs.back();
  out << "trained " << cfg.train.epochs << " epochs: L=" << format_double(last.loss)
      << " L_k=" << format_double(last.kmeans) << " M_C=" << format_double(last.balance) << '\n';
  out << "test fg/bg accuracy " << format_double(eval.fg_accuracy);
  if (!eval.no_foreground) out << ", purity " << format_double(eval.report.purity);
  out << "\noutputs in " << cfg.run_dir().string() << '\n';
  return kExitOk;
}

ModelBundle load_model(const RunConfig& cfg, const std::string& checkpoint) {
  const fs::path path = checkpoint.empty() ? run_file(cfg, ".ckpt") : fs::path(checkpoint);
  if (!fs::exists(path)) throw config_error("checkpoint: " + path.string() + " does not exist");
  return load_checkpoint(path);
}

int cmd_eval(const CommonOptions& opts, const std::string& checkpoint, std::ostream& out) {
  const RunConfig cfg = load(opts);
  const ModelBundle model = load_model(cfg, checkpoint);
  fs::create_directories(cfg.run_dir());
  const PreparedData data = prepare_data(cfg);
  const EvalResult eval = evaluate_bundle(model, data);
  write_eval_files(cfg, "eval", eval, {});
  out << "test fg/bg accuracy " << format_double(eval.fg_accuracy);
  if (!eval.no_foreground) out << ", purity " << format_double(eval.report.purity);
  out << '\n';
  return kExitOk;
}

int cmd_baseline(const CommonOptions& opts, const std::string& checkpoint, std::optional<std::size_t> k_opt,
                 std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load(opts);
  const ModelBundle model = load_model(cfg, checkpoint);
  const PreparedData data = prepare_data(cfg);
  const Dataset test = model.standardizer.apply(data.test).foreground();
  const std::size_t k = k_opt.value_or(cfg.train.k);
  if (k == 0 || k > test.size()) {
    err << "error: K=" << k << " but only " << test.size() << " foreground test samples\n";
    return kExitUsage;
  }
  fs::create_directories(cfg.run_dir());
  const Matrix embedded = model.net.embed(test.features);
  const LloydResult lloyd = lloyd_kmeans(embedded, k, cfg.train.seed);
  const ConfusionReport baseline = confusion(lloyd.assignment, test.hidden_class);
  const ConfusionReport head = confusion(assign(embedded, model.head), test.hidden_class);

  write_text(run_file(cfg, ".baseline.confusion.csv"), confusion_csv(baseline));
  std::ostringstream s;
  s << "run_id: " << cfg.run_id << '\n';
  s << "command: baseline\n";
  s << "K: " << k << '\n';
  s << "foreground_test_samples: " << test.size() << '\n';
  s << "lloyd_iterations: " << lloyd.iterations << '\n';
  s << "lloyd_converged: " << (lloyd.converged ? "true" : "false") << '\n';
  s << "lloyd_objective:";
  for (double v : lloyd.objective) s << ' ' << format_double(v);
  s << '\n';
  s << "baseline_purity: " << format_double(baseline.purity) << '\n';
  s << "baseline_matched_accuracy: " << format_double(baseline.matched_accuracy) << '\n';
  s << "trained_head_purity: " << format_double(head.purity) << '\n';
  s << "trained_head_matched_accuracy: " << format_double(head.matched_accuracy) << '\n';
  write_percent_table(s, baseline);
  write_text(run_file(cfg, ".baseline.summary.txt"), s.str());
  out << "baseline purity " << format_double(baseline.purity) << " (trained head "
      << format_double(head.purity) << ")\n";
  return kExitOk;
}

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 20;
  std::size_t n = 8;
  std::size_t dim = 6;
  std::size_t k = 0;  // 0: alternate between 2 and 3
  std::vector<std::size_t> hidden{5, 4};
  double epsilon = 1e-4;
  bool corrupt = false;
  bool force_tie = false;
};

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  constexpr double kTolerance = 1e-4;
  double worst = 0.0;
  std::string worst_where;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  out << std::scientific << std::setprecision(3);
  for (std::size_t i = 0; i < o.instances; ++i) {
    InstanceShape shape{o.n, o.dim, o.k == 0 ? 2 + i % 2 : o.k, o.hidden};
    GradCheckInstance inst = random_instance(o.seed + i, shape);
    if (o.force_tie && i == 0) {
      // Second cluster a hair away from the first: every point is nearly tied.
      auto w0 = inst.head.weights.row(0);
      auto w1 = inst.head.weights.row(1);
      std::copy(w0.begin(), w0.end(), w1.begin());
      w1[0] += 1e-5;
    }
    out << "instance " << i << " (N=" << shape.n << " D=" << shape.dim << " K=" << shape.k << "): ";
    if (!is_non_degenerate(inst)) {
      const KinkMargins m = kink_margins(inst);
      out << "tie skipped (relu margin " << m.relu << ", assignment margin " << m.assignment << ")\n";
      ++skipped;
      continue;
    }
    ++checked;
    double inst_worst = 0.0;
    std::string inst_where;
    for (const auto& pc : check_full_gradient(inst, o.epsilon, o.corrupt)) {
      if (pc.report.max_rel_error >= inst_worst) {
        inst_worst = pc.report.max_rel_error;
        inst_where = pc.name + "[" + std::to_string(pc.report.worst_row) + "," +
                     std::to_string(pc.report.worst_col) + "]";
      }
    }
    out << "max rel error " << inst_worst << " at " << inst_where << '\n';
    if (inst_worst >= worst) {
      worst = inst_worst;
      worst_where = "instance " + std::to_string(i) + " " + inst_where;
    }
  }
  out << "checked " << checked << ", skipped " << skipped << ", worst " << worst << '\n';
  out.unsetf(std::ios::floatfield);
  if (worst >= kTolerance) {
    out << "FAIL: worst parameter " << worst_where << " exceeds " << kTolerance << '\n';
    return kExitCheckFailed;
  }
  out << "PASS\n";
  return kExitOk;
}

int cmd_gen_data(const CommonOptions& opts, std::ostream& out) {
  const RunConfig cfg = load(opts);
  if (!cfg.synthetic) throw config_error("gen-data: needs a synthetic.* dataset");
  fs::create_directories(cfg.run_dir());
  const Dataset data = gen_blobs(*cfg.synthetic).data;
  std::ostringstream s;
  write_dataset_csv(s, data);
  const fs::path path = run_file(cfg, ".data.csv");
  write_text(path, s.str());
  out << "wrote " << data.size() << " samples to " << path.string() << '\n';
  return kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("--config", opts.config, "Run configuration file (key=value)")->required();
  sub->add_option("--seed", opts.seed, "Override the configured seed");
  sub->add_option("--out", opts.out, "Override the output directory");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable k-means: joint embedding and cluster learning", "dkmeans"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string checkpoint;
  std::optional<std::size_t> baseline_k;
  GradcheckOptions gc;

  auto* train_cmd = app.add_subcommand("train", "Train network and cluster head, write checkpoint and reports");
  add_common(train_cmd, common);
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/<run-id>/<run-id>.ckpt)");
  auto* base_cmd = app.add_subcommand("baseline", "Lloyd's k-means on the frozen embedding");
  add_common(base_cmd, common);
  base_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/<run-id>/<run-id>.ckpt)");
  base_cmd->add_option("--k", baseline_k, "Number of baseline clusters (default: config K)");
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full objective");
  gc_cmd->add_option("--seed", gc.seed, "First instance seed");
  gc_cmd->add_option("--instances", gc.instances, "Number of random instances");
  gc_cmd->add_option("--n", gc.n, "Samples per instance")->check(CLI::Range(2, 1000));
  gc_cmd->add_option("--dim", gc.dim, "Input width")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--k", gc.k, "Clusters (0 alternates 2 and 3)");
  gc_cmd->add_option("--hidden", gc.hidden, "Hidden layer widths")->delimiter(',');
  gc_cmd->add_option("--epsilon", gc.epsilon, "Finite-difference step")->check(CLI::PositiveNumber);
  gc_cmd->add_flag("--corrupt-gradient", gc.corrupt)->group("");
  gc_cmd->add_flag("--force-tie", gc.force_tie)->group("");
  auto* gen_cmd = app.add_subcommand("gen-data", "Write the configured synthetic dataset as CSV");
  add_common(gen_cmd, common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(common, out, err);
    if (*eval_cmd) return cmd_eval(common, checkpoint, out);
    if (*base_cmd) return cmd_baseline(common, checkpoint, baseline_k, out, err);
    if (*gen_cmd) return cmd_gen_data(common, out);
    if (*gc_cmd) {
      if (gc.k == 1) throw config_error("--k: must be 0 or >= 2");
      return cmd_gradcheck(gc, out);
    }
  } catch (const config_error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const format_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const numeric_error& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace dkm::cli
