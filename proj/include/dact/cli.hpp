// Copyright 2026 The dact-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file cli.hpp
 * @brief The `dact_cli` command line: gen-data, train, sweep, eval, curve,
 *        histogram and audit.
 *
 * Every subcommand prints CSV to standard output followed by summary lines
 * starting with "# ". Exit status is 0 on success, 1 on a runtime error or a
 * failed audit, and 2 on a usage error.
 */

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dact/baselines.hpp"
#include "dact/checkpoint.hpp"
#include "dact/data.hpp"
#include "dact/evaluation.hpp"
#include "dact/harness.hpp"
#include "dact/training.hpp"

namespace dact::cli {

namespace detail {

/// Model, training and data settings read from a key=value file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  unsigned validation_percent = 20;
};

inline RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  const KeyValues kv = KeyValues::load(path);
  std::set<std::string> known;
  for (const KeyValues& defaults : {rc.model.to_key_values(), rc.train.to_key_values()})
    for (const auto& [k, v] : defaults.entries()) known.insert(k);
  known.insert("validation_percent");
  for (const auto& [k, v] : kv.entries()) {
    if (!known.contains(k)) throw ConfigError(path + ": unknown key '" + k + "'");
  }
  rc.model.read(kv);
  rc.train.read(kv);
  kv.read("validation_percent", rc.validation_percent);
  if (rc.validation_percent > 100) throw ConfigError("validation_percent must be <= 100");
  return rc;
}

inline TsvSchema schema_for(const std::string& text_b) {
  TsvSchema schema;
  if (!text_b.empty()) schema.text_b = text_b;
  return schema;
}

/// Loads a TSV with labels inferred and then sorted, so label ids do not
/// depend on row order.
inline Dataset load_training_data(const std::string& path, const std::string& text_b) {
  Dataset d = load_tsv(path, schema_for(text_b));
  std::vector<std::string> sorted = d.label_names;
  std::sort(sorted.begin(), sorted.end());
  for (auto& ex : d.examples) {
    const std::string& name = d.label_names[ex.label];
    ex.label = static_cast<std::size_t>(std::find(sorted.begin(), sorted.end(), name) - sorted.begin());
  }
  d.label_names = std::move(sorted);
  if (d.num_classes() < 2) throw DataError(path + ": need at least two distinct labels");
  return d;
}

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, sep);) out.push_back(item);
  return out;
}

inline std::vector<double> parse_grid(const std::string& grid) {
  if (grid == "default") return default_tau_grid();
  std::vector<double> out;
  for (const auto& item : split(grid, ',')) {
    KeyValues kv;
    kv.set("grid", item);
    out.push_back(kv.get_as<double>("grid"));
  }
  if (out.empty()) throw ConfigError("empty tau grid");
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& seeds) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(seeds, ',')) {
    KeyValues kv;
    kv.set("seeds", item);
    out.push_back(kv.get_as<std::uint64_t>("seeds"));
  }
  if (out.empty()) throw ConfigError("no seeds given");
  return out;
}

inline std::string vocab_path_for(const std::string& checkpoint, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  const std::string sibling = checkpoint + ".vocab.txt";
  if (std::filesystem::exists(sibling)) return sibling;
  const auto dir = std::filesystem::path(checkpoint).parent_path();
  return (dir / "vocab.txt").string();
}

/// Checkpoint, vocabulary and the evaluation examples encoded with them.
struct Loaded {
  Checkpoint checkpoint;
  Dataset data;
  std::vector<TokenizedExample> encoded;
};

inline Loaded load_for_eval(const std::string& checkpoint_path, const std::string& vocab_path,
                            const std::string& data_path, const std::string& text_b, const std::string& split_name) {
  Loaded l{load_checkpoint(checkpoint_path), {}, {}};
  const Vocab vocab = Vocab::load(vocab_path_for(checkpoint_path, vocab_path));
  TsvSchema schema = schema_for(text_b);
  if (l.checkpoint.metadata.contains("labels")) schema.label_names = split(l.checkpoint.metadata.get("labels"), ',');
  Dataset all = load_tsv(data_path, schema);
  unsigned pct = 20;
  l.checkpoint.metadata.read("validation_percent", pct);
  if (split_name == "all") {
    l.data = std::move(all);
  } else if (split_name == "validation" || split_name == "train") {
    auto [train, valid] = split_train_validation(all, pct);
    l.data = split_name == "train" ? std::move(train) : std::move(valid);
  } else {
    throw ConfigError("unknown split '" + split_name + "' (expected all, train or validation)");
  }
  l.encoded = encode_dataset(l.data, vocab, l.checkpoint.model.config().max_seq_len);
  return l;
}

inline MethodSpec method_spec(const std::string& method, double tau, double threshold, std::size_t patience) {
  const Method m = parse_method(method);
  switch (m) {
    case Method::dact: return {m, tau};
    case Method::entropy: return {m, threshold};
    case Method::patience: return {m, static_cast<double>(patience)};
    case Method::static_depth: return {m, 0.0};
  }
  return {m, 0.0};
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("failed writing " + path);
}

inline std::string knob_tag(double v) {
  std::string s = format_real(v);
  std::replace(s.begin(), s.end(), '+', 'p');
  return s;
}

/// Per-difficulty mean layers_used, printed as summary lines when tags exist.
inline void print_difficulty_split(std::ostream& out, const Dataset& data, const Evaluation& ev) {
  double sum[2] = {0, 0}, count[2] = {0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.examples[i].difficulty) continue;
    const int k = *data.examples[i].difficulty == Difficulty::hard;
    sum[k] += static_cast<double>(ev.layers_used[i]);
    ++count[k];
  }
  if (count[0] > 0) out << "# mean layers (easy): " << format_real(sum[0] / count[0]) << '\n';
  if (count[1] > 0) out << "# mean layers (hard): " << format_real(sum[1] / count[1]) << '\n';
}

/// Entropy and patience points for a phase-1 model of one seed.
inline std::vector<TradeoffPoint> baseline_points(const Model& phase1, std::span<const TokenizedExample> train,
                                                  std::span<const TokenizedExample> valid, const TrainConfig& cfg,
                                                  Metric metric, std::uint64_t seed, bool entropy, bool patience) {
  std::vector<TradeoffPoint> out;
  Model heads = phase1.clone();
  train_baseline_heads(heads, train, cfg);
  if (entropy) {
    for (double t : entropy_threshold_grid(heads.config().num_classes)) {
      out.push_back(evaluate(heads, valid, {Method::entropy, t}, metric, seed).point);
    }
  }
  if (patience) {
    for (std::size_t p = 1; p <= heads.config().num_blocks; ++p) {
      out.push_back(evaluate(heads, valid, {Method::patience, static_cast<double>(p)}, metric, seed).point);
    }
  }
  return out;
}

}  // namespace detail

/// Runs the command line; `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable adaptive computation time for transformer classifiers", "dact_cli"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // gen-data
  std::uint64_t gen_seed = 7;
  std::size_t examples = 2000;
  std::string gen_out;
  SyntheticSpec spec;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic mixed-difficulty dataset as TSV");
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--n", examples, "Number of examples")->capture_default_str();
  gen->add_option("--classes", spec.num_classes, "Number of classes")->capture_default_str();
  gen->add_option("--hard-fraction", spec.hard_fraction, "Fraction of hard examples")->capture_default_str();
  gen->add_option("--family", spec.family, "Task family")->capture_default_str();
  gen->add_option("--out", gen_out, "Output TSV path")->required();

  // Options shared between subcommands hold the same default everywhere;
  // the rest get one variable per subcommand.
  std::string data_path, config_path, text_b, checkpoint, vocab_path, metric_name = "accuracy";
  double tau = -1.0;
  std::optional<std::uint64_t> seed_override;

  std::string train_method = "dact", train_out = "model.ckpt";

  auto* train = app.add_subcommand("train", "Train one model and write a checkpoint plus vocabulary");
  train->add_option("--data", data_path, "Training TSV")->required();
  train->add_option("--config", config_path, "key=value configuration file");
  train->add_option("--text-b", text_b, "Column holding the second sentence of a pair");
  train->add_option("--tau", tau, "Ponder penalty weight (dact)");
  train->add_option("--seed", seed_override, "Training seed");
  train->add_option("--method", train_method, "dact, entropy, patience or static")->capture_default_str();
  train->add_option("--out", train_out, "Checkpoint path")->capture_default_str();

  std::string grid = "default", seeds = "0,1,2", sweep_methods = "dact,entropy,patience,static", sweep_out = "sweep";

  auto* sweep = app.add_subcommand("sweep", "Train a tau grid over several seeds plus the baselines");
  sweep->add_option("--data", data_path, "Training TSV")->required();
  sweep->add_option("--config", config_path, "key=value configuration file");
  sweep->add_option("--text-b", text_b, "Column holding the second sentence of a pair");
  sweep->add_option("--grid", grid, "'default' or a comma-separated list of tau values")->capture_default_str();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  sweep->add_option("--method", sweep_methods, "Comma-separated methods: dact, entropy, patience, static")
      ->capture_default_str();
  sweep->add_option("--metric", metric_name, "accuracy, f1 or mcc")->capture_default_str();
  sweep->add_option("--out", sweep_out, "Output directory")->capture_default_str();

  std::string eval_method = "dact", split_name = "all", eval_out, trace_path;
  double threshold = 0.3;
  std::size_t patience = 2;

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with one exit rule");
  auto* hist = app.add_subcommand("histogram", "Per-block usage counts of one exit rule");
  for (auto* sub : {eval, hist}) {
    sub->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
    sub->add_option("--data", data_path, "Evaluation TSV")->required();
    sub->add_option("--vocab", vocab_path, "Vocabulary file (default: <checkpoint>.vocab.txt)");
    sub->add_option("--text-b", text_b, "Column holding the second sentence of a pair");
    sub->add_option("--split", split_name, "all, train or validation")->capture_default_str();
    sub->add_option("--method", eval_method, "dact, entropy, patience or static")->capture_default_str();
    sub->add_option("--tau", tau, "Knob value recorded for dact rows");
    sub->add_option("--threshold", threshold, "Entropy threshold")->capture_default_str();
    sub->add_option("--patience", patience, "Patience")->capture_default_str();
    sub->add_option("--metric", metric_name, "accuracy, f1 or mcc")->capture_default_str();
    sub->add_option("--out", eval_out, "Also write the CSV here");
  }
  eval->add_option("--trace", trace_path, "Write a per-block dact trace CSV here");
  eval->add_option("--seed", seed_override, "Seed recorded in the tradeoff row");

  std::string in_path, curve_out;
  auto* curve_cmd = app.add_subcommand("curve", "Seed bands and AUC from a tradeoff CSV");
  curve_cmd->add_option("--data", in_path, "tradeoff.csv input")->required();
  curve_cmd->add_option("--out", curve_out, "Output prefix: writes <out>curve.csv and <out>auc.csv");

  std::size_t triples = 10000;
  std::uint64_t audit_seed = 0;
  auto* audit = app.add_subcommand("audit", "Check the early-exit bound against the adversarial audit");
  audit->add_option("--n", triples, "Random (a, p, d) triples")->capture_default_str();
  audit->add_option("--seed", audit_seed, "Sampling seed")->capture_default_str();
  audit->add_option("--checkpoint", checkpoint, "Also audit every state reached on --data");
  audit->add_option("--data", data_path, "TSV evaluated with --checkpoint");
  audit->add_option("--vocab", vocab_path, "Vocabulary file (default: <checkpoint>.vocab.txt)");
  audit->add_option("--text-b", text_b, "Column holding the second sentence of a pair");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (gen->parsed()) {
      const Dataset d = gen_synthetic(gen_seed, examples, spec);
      save_tsv(gen_out, d);
      std::size_t hard = 0;
      for (const auto& ex : d.examples) hard += ex.difficulty == Difficulty::hard;
      out << "examples,easy,hard,classes\n"
          << d.size() << ',' << d.size() - hard << ',' << hard << ',' << d.num_classes() << '\n';
      out << "# wrote " << gen_out << '\n';
      return 0;
    }

    if (train->parsed()) {
      detail::RunConfig rc = detail::load_run_config(config_path);
      if (tau >= 0.0) rc.train.tau = tau;
      if (seed_override) rc.train.seed = *seed_override;
      const Method m = parse_method(train_method);
      const Dataset all = detail::load_training_data(data_path, text_b);
      auto [train_set, valid_set] = split_train_validation(all, rc.validation_percent);
      const Vocab vocab = Vocab::build(train_set);
      rc.model.vocab_size = vocab.size();
      rc.model.num_classes = all.num_classes();
      const auto train_ex = encode_dataset(train_set, vocab, rc.model.max_seq_len);
      const auto valid_ex = encode_dataset(valid_set, vocab, rc.model.max_seq_len);

      Model model = init_model(rc.model, rc.train.seed);
      train_phase1(model, train_ex, rc.train);
      if (m == Method::dact) train_phase2(model, train_ex, rc.train);
      if (m == Method::entropy || m == Method::patience) train_baseline_heads(model, train_ex, rc.train);

      KeyValues meta = rc.train.to_key_values();
      meta.set("method", to_string(m));
      meta.set("labels", detail::join(all.label_names, ','));
      meta.set("validation_percent", std::to_string(rc.validation_percent));
      save_checkpoint(train_out, model, meta);
      vocab.save(train_out + ".vocab.txt");

      const MethodSpec ms = detail::method_spec(train_method, rc.train.tau, threshold, patience);
      const Evaluation ev = evaluate(model, valid_ex, ms, Metric::accuracy, rc.train.seed);
      const std::vector<TradeoffPoint> pts = {ev.point};
      write_tradeoff_csv(out, pts);
      out << "# trained " << to_string(m) << " on " << train_ex.size() << " examples, validated on "
          << valid_ex.size() << '\n';
      out << "# wrote " << train_out << " and " << train_out << ".vocab.txt\n";
      return 0;
    }

    if (sweep->parsed()) {
      detail::RunConfig rc = detail::load_run_config(config_path);
      const Metric metric = parse_metric(metric_name);
      std::set<Method> methods;
      for (const auto& name : detail::split(sweep_methods, ',')) methods.insert(parse_method(name));
      const Dataset all = detail::load_training_data(data_path, text_b);
      auto [train_set, valid_set] = split_train_validation(all, rc.validation_percent);
      const Vocab vocab = Vocab::build(train_set);
      rc.model.vocab_size = vocab.size();
      rc.model.num_classes = all.num_classes();
      const auto train_ex = encode_dataset(train_set, vocab, rc.model.max_seq_len);
      const auto valid_ex = encode_dataset(valid_set, vocab, rc.model.max_seq_len);

      std::filesystem::create_directories(sweep_out);
      const auto dir = std::filesystem::path(sweep_out);
      vocab.save((dir / "vocab.txt").string());

      SweepOptions options;
      options.grid = methods.contains(Method::dact) ? detail::parse_grid(grid) : std::vector<double>{};
      options.seeds = detail::parse_seeds(seeds);
      options.metric = metric;
      std::vector<TradeoffPoint> points;
      std::size_t failures = 0;
      KeyValues meta = rc.train.to_key_values();
      meta.set("labels", detail::join(all.label_names, ','));
      meta.set("validation_percent", std::to_string(rc.validation_percent));
      options.on_phase1 = [&](std::uint64_t s, const Model& phase1) {
        TrainConfig cfg = rc.train;
        cfg.seed = s;
        if (methods.contains(Method::static_depth)) {
          points.push_back(evaluate(phase1, valid_ex, {Method::static_depth, 0.0}, metric, s).point);
        }
        if (methods.contains(Method::entropy) || methods.contains(Method::patience)) {
          for (const auto& p : detail::baseline_points(phase1, train_ex, valid_ex, cfg, metric, s,
                                                       methods.contains(Method::entropy),
                                                       methods.contains(Method::patience))) {
            points.push_back(p);
          }
        }
        err << "seed " << s << ": phase 1 and baselines done\n";
      };
      options.on_cell = [&](const SweepCell& cell) {
        if (cell.error) {
          ++failures;
          err << "tau " << format_real(cell.tau) << " seed " << cell.seed << ": " << *cell.error << '\n';
          return;
        }
        KeyValues cell_meta = meta;
        cell_meta.set("method", "dact");
        cell_meta.set("seed", std::to_string(cell.seed));
        cell_meta.set("tau", format_real(cell.tau));
        const std::string name = "dact_tau" + detail::knob_tag(cell.tau) + "_seed" + std::to_string(cell.seed);
        save_checkpoint((dir / (name + ".ckpt")).string(), cell.model, cell_meta);
        points.push_back(cell.point);
        err << "tau " << format_real(cell.tau) << " seed " << cell.seed
            << ": efficiency " << format_real(cell.point.efficiency) << ", performance "
            << format_real(cell.point.performance) << '\n';
      };
      if (options.grid.empty()) {
        // No dact cells: run phase 1 per seed for the baselines only.
        for (std::uint64_t s : options.seeds) {
          TrainConfig cfg = rc.train;
          cfg.seed = s;
          Model phase1 = init_model(rc.model, s);
          train_phase1(phase1, train_ex, cfg);
          options.on_phase1(s, phase1);
        }
      } else {
        sweep_tau(rc.model, train_ex, valid_ex, rc.train, options);
      }

      std::ostringstream tradeoff, curve_csv, auc_csv;
      write_tradeoff_csv(tradeoff, points);
      // Curves come from the rounded CSV values so `curve` on tradeoff.csv reproduces them.
      std::istringstream rounded(tradeoff.str());
      const auto curves = curve(read_tradeoff_csv(rounded));
      write_curve_csv(curve_csv, curves);
      write_auc_csv(auc_csv, curves);
      detail::write_file((dir / "tradeoff.csv").string(), tradeoff.str());
      detail::write_file((dir / "curve.csv").string(), curve_csv.str());
      detail::write_file((dir / "auc.csv").string(), auc_csv.str());
      out << tradeoff.str();
      for (const auto& c : curves) {
        out << "# " << to_string(c.method) << ": auc " << (c.auc ? format_real(*c.auc) : "undefined")
            << " over efficiency [" << format_real(c.efficiency_min) << ", " << format_real(c.efficiency_max)
            << "]\n";
      }
      out << "# wrote tradeoff.csv, curve.csv, auc.csv to " << sweep_out << '\n';
      return failures ? 1 : 0;
    }

    if (eval->parsed() || hist->parsed()) {
      const bool is_eval = eval->parsed();
      const Metric metric = parse_metric(metric_name);
      detail::Loaded l = detail::load_for_eval(checkpoint, vocab_path, data_path, text_b, split_name);
      double knob_tau = tau;
      if (knob_tau < 0.0 && l.checkpoint.metadata.contains("tau")) {
        knob_tau = l.checkpoint.metadata.get_as<double>("tau");
      }
      std::uint64_t s = seed_override.value_or(0);
      if (!seed_override && l.checkpoint.metadata.contains("seed")) {
        s = l.checkpoint.metadata.get_as<std::uint64_t>("seed");
      }
      const MethodSpec ms = detail::method_spec(eval_method, std::max(knob_tau, 0.0), threshold, patience);
      std::vector<TraceRow> trace;
      const bool want_trace = is_eval && !trace_path.empty();
      if (want_trace && ms.method != Method::dact) throw ConfigError("--trace needs --method dact");
      const Evaluation ev = evaluate(l.checkpoint.model, l.encoded, ms, metric, s, want_trace ? &trace : nullptr);
      std::ostringstream csv;
      if (is_eval) {
        const std::vector<TradeoffPoint> pts = {ev.point};
        write_tradeoff_csv(csv, pts);
      } else {
        write_histogram_csv(csv, ev.histogram);
      }
      out << csv.str();
      if (!eval_out.empty()) detail::write_file(eval_out, csv.str());
      if (want_trace) {
        std::ostringstream t;
        write_trace_csv(t, trace, l.checkpoint.model.config().num_classes);
        detail::write_file(trace_path, t.str());
        out << "# wrote trace " << trace_path << '\n';
      }
      out << "# " << l.encoded.size() << " examples, accuracy " << format_real(ev.metrics.accuracy) << ", f1 "
          << format_real(ev.metrics.f1) << ", mcc " << format_real(ev.metrics.mcc) << ", efficiency "
          << format_real(ev.point.efficiency) << '\n';
      detail::print_difficulty_split(out, l.data, ev);
      return 0;
    }

    if (curve_cmd->parsed()) {
      std::ifstream in(in_path, std::ios::binary);
      if (!in) throw DataError("cannot open " + in_path);
      const auto points = read_tradeoff_csv(in, in_path);
      const auto curves = curve(points);
      std::ostringstream curve_csv, auc_csv;
      write_curve_csv(curve_csv, curves);
      write_auc_csv(auc_csv, curves);
      if (!curve_out.empty()) {
        detail::write_file(curve_out + "curve.csv", curve_csv.str());
        detail::write_file(curve_out + "auc.csv", auc_csv.str());
      }
      out << auc_csv.str();
      out << "# " << points.size() << " points, " << curves.size() << " methods\n";
      return 0;
    }

    if (audit->parsed()) {
      out << "check,cases,passed\n";
      Rng rng(audit_seed);
      std::size_t holding = 0, passed = 0;
      for (std::size_t i = 0; i < triples; ++i) {
        const std::size_t c = 2 + rng.below(4);
        std::vector<double> a(c);
        double total = 0.0;
        for (double& v : a) total += (v = std::pow(rng.uniform(), 4.0));
        for (double& v : a) v /= total;
        const double p = std::pow(rng.uniform(), 3.0);
        const std::size_t d = rng.below(12);
        if (!halting_bound_holds(a, p, d)) continue;
        ++holding;
        passed += adversarial_bound_audit(a, p, d);
      }
      out << "random_triples," << holding << ',' << passed << '\n';
      bool ok = holding == passed;
      if (!checkpoint.empty()) {
        if (data_path.empty()) throw ConfigError("audit --checkpoint needs --data");
        detail::Loaded l = detail::load_for_eval(checkpoint, vocab_path, data_path, text_b, "all");
        const Model& model = l.checkpoint.model;
        const std::size_t blocks = model.config().num_blocks;
        std::size_t states = 0, states_ok = 0, agree = 0;
        for (std::size_t i = 0; i < l.encoded.size(); ++i) {
          std::vector<TraceRow> trace;
          const auto ids = strip_padding(l.encoded[i].ids);
          const AdaptiveResult r = forward_adaptive(model, ids, &trace, i);
          for (const auto& row : trace) {
            if (!row.halted || row.block == blocks) continue;
            ++states;
            states_ok += adversarial_bound_audit(row.a, row.p, blocks - row.block);
          }
          agree += r.prediction == full_depth_prediction(model, ids);
        }
        out << "model_exit_states," << states << ',' << states_ok << '\n';
        out << "early_exit_agreement," << l.encoded.size() << ',' << agree << '\n';
        ok = ok && states == states_ok && agree == l.encoded.size();
      }
      out << "# audit " << (ok ? "passed" : "FAILED") << '\n';
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dact::cli
