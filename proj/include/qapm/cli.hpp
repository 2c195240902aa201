#pragma once

// Command-line front end. Exit status: 0 success, 1 usage error, 2 runtime error.

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "qapm/harness.hpp"
#include "qapm/landscape.hpp"

namespace qapm::cli {

namespace detail {

// Options that override fields of an ExperimentConfig when given explicitly.
class ConfigFlags {
 public:
  void add_instance(CLI::App& app) {
    bind(app, "--model", model_, "graph model: er|regular", [this](ExperimentConfig& c) {
      c.instance.model = parse_graph_model(model_);
    });
    bind(app, "--n", n_, "nodes per graph", [this](ExperimentConfig& c) { c.instance.n = n_; });
    bind(app, "--p", p_, "edge density (er)", [this](ExperimentConfig& c) { c.instance.p = p_; });
    bind(app, "--deg", deg_, "degree (regular)", [this](ExperimentConfig& c) { c.instance.deg = deg_; });
  }

  void add_training(CLI::App& app) {
    bind(app, "--pe-min", pe_min_, "lowest training noise level", [this](ExperimentConfig& c) { c.train_pe_min = pe_min_; });
    bind(app, "--pe-max", pe_max_, "highest training noise level", [this](ExperimentConfig& c) { c.train_pe_max = pe_max_; });
    bind(app, "--train-size", train_size_, "samples per epoch", [this](ExperimentConfig& c) { c.train_size = train_size_; });
    bind(app, "--epochs", epochs_, "passes over the training samples", [this](ExperimentConfig& c) { c.epochs = epochs_; });
    bind(app, "--batch", batch_, "batch size", [this](ExperimentConfig& c) { c.batch = batch_; });
    bind(app, "--lr", lr_, "Adamax learning rate", [this](ExperimentConfig& c) { c.lr = lr_; });
    bind(app, "--mode", mode_, "stream|fixed", [this](ExperimentConfig& c) { c.train_mode = parse_train_mode(mode_); });
    bind(app, "--dataset", dataset_, "JSONL training corpus", [this](ExperimentConfig& c) { c.dataset = dataset_; });
    bind(app, "--out", out_dir_, "output directory", [this](ExperimentConfig& c) { c.output_dir = out_dir_; });
    flag(app, "--no-wall-time", "write wall_ms as 0 for byte-comparable logs",
         [](ExperimentConfig& c) { c.record_wall_time = false; });
  }

  void add_gnn(CLI::App& app) {
    bind(app, "--layers", layers_, "GNN depth", [this](ExperimentConfig& c) { c.gnn.layers = layers_; });
    bind(app, "--feat", feat_, "feature maps per layer", [this](ExperimentConfig& c) { c.gnn.feat = feat_; });
    bind(app, "--J", j_, "thresholded adjacency powers", [this](ExperimentConfig& c) { c.gnn.J = j_; });
    bind(app, "--input", input_, "degree|two_hop_degree", [this](ExperimentConfig& c) {
      c.gnn.input = parse_input_feature(input_);
    });
    bind(app, "--bn-mode", bn_mode_, "batch_stats|running_stats|disabled", [this](ExperimentConfig& c) {
      c.gnn.bn_mode = parse_bn_mode(bn_mode_);
    });
  }

  void add_evaluation(CLI::App& app) {
    bind(app, "--noise-grid", grid_, "noise levels to evaluate", [this](ExperimentConfig& c) { c.noise_grid = grid_; });
    bind(app, "--trials", trials_, "instances per noise level", [this](ExperimentConfig& c) { c.trials = trials_; });
    bind(app, "--baselines", baselines_, "subset of umeyama,lowrank", [this](ExperimentConfig& c) {
      c.baselines = baselines_;
    });
    bind(app, "--rank", rank_, "LowRankAlign rank k", [this](ExperimentConfig& c) { c.lowrank.k = rank_; });
    bind(app, "--rank-scaling", rank_scaling_, "none|eigenvalue", [this](ExperimentConfig& c) {
      c.lowrank.scaling = parse_low_rank_scaling(rank_scaling_);
    });
    bind(app, "--decode", decode_, "argmax|lap", [this](ExperimentConfig& c) { c.decode = parse_decode(decode_); });
  }

  void add_seed(CLI::App& app, bool required) {
    auto* opt = bind(app, "--seed", seed_, "master seed", [this](ExperimentConfig& c) { c.seed = seed_; });
    if (required) opt->required();
  }

  void add_config_file(CLI::App& app) { app.add_option("--config", config_file_, "serialized ExperimentConfig (JSON)"); }

  /// Defaults, then the config file, then every flag that was given.
  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config_file_.empty()) c = experiment_config_from_json(ad::read_json_file(config_file_));
    for (const auto& [opt, apply] : setters_) {
      if (opt->count() > 0) apply(c);
    }
    c.validate();
    return c;
  }

 private:
  template <typename T>
  CLI::Option* bind(CLI::App& app, const std::string& name, T& target, const std::string& help,
                    std::function<void(ExperimentConfig&)> apply) {
    CLI::Option* opt = app.add_option(name, target, help);
    setters_.emplace_back(opt, std::move(apply));
    return opt;
  }

  void flag(CLI::App& app, const std::string& name, const std::string& help, std::function<void(ExperimentConfig&)> apply) {
    CLI::Option* opt = app.add_flag(name, help);
    setters_.emplace_back(opt, std::move(apply));
  }

  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> setters_;
  std::string config_file_;
  std::string model_, mode_, dataset_, out_dir_, input_, bn_mode_, decode_, rank_scaling_;
  int n_ = 0, deg_ = 0, train_size_ = 0, epochs_ = 0, batch_ = 0, layers_ = 0, feat_ = 0, j_ = 0, trials_ = 0, rank_ = 0;
  double p_ = 0, pe_min_ = 0, pe_max_ = 0, lr_ = 0;
  std::vector<double> grid_;
  std::vector<std::string> baselines_;
  std::uint64_t seed_ = 0;
};

inline void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& write) {
  if (path.empty() || path == "-") {
    write(fallback);
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write(out);
}

}  // namespace detail

/// Runs one CLI invocation. `argv[0]` is the program name.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Learned and spectral graph matching on planted quadratic assignment instances"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  // generate
  auto* gen = app.add_subcommand("generate", "write planted instances as JSON lines");
  std::string gen_model = "er", gen_out;
  int gen_n = 50, gen_deg = 10;
  double gen_p = 0.2, gen_pe = 0.0;
  std::size_t gen_count = 1;
  std::uint64_t gen_seed = 0;
  gen->add_option("--model", gen_model, "er|regular");
  gen->add_option("--n", gen_n, "nodes per graph");
  gen->add_option("--p", gen_p, "edge density (er)");
  gen->add_option("--deg", gen_deg, "degree (regular)");
  gen->add_option("--pe", gen_pe, "noise level p_e");
  gen->add_option("--count", gen_count, "number of samples");
  gen->add_option("--seed", gen_seed, "master seed")->required();
  gen->add_option("--out", gen_out, "output file (default stdout)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the GNN; writes checkpoint.json and metrics.csv");
  detail::ConfigFlags train_flags;
  train_flags.add_config_file(*train_cmd);
  train_flags.add_instance(*train_cmd);
  train_flags.add_training(*train_cmd);
  train_flags.add_gnn(*train_cmd);
  train_flags.add_seed(*train_cmd, true);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "recovery of a trained GNN and the baselines per noise level");
  detail::ConfigFlags eval_flags;
  std::string checkpoint, eval_out;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
  eval_cmd->add_option("--out", eval_out, "recovery CSV (default stdout)");
  eval_flags.add_config_file(*eval_cmd);
  eval_flags.add_instance(*eval_cmd);
  eval_flags.add_evaluation(*eval_cmd);
  eval_flags.add_seed(*eval_cmd, true);

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "recovery of the spectral baselines only");
  detail::ConfigFlags base_flags;
  std::string base_out;
  base_cmd->add_option("--out", base_out, "recovery CSV (default stdout)");
  base_flags.add_config_file(*base_cmd);
  base_flags.add_instance(*base_cmd);
  base_flags.add_evaluation(*base_cmd);
  base_flags.add_seed(*base_cmd, false);

  // landscape
  auto* land = app.add_subcommand("landscape", "experiments on the polynomial embedding model");
  land->require_subcommand(1);
  auto* sweep = land->add_subcommand("sweep", "concentration of Q(A,A) around its expectation over Y");
  landscape::ConcentrationConfig sweep_cfg;
  std::string sweep_out;
  sweep->add_option("--d", sweep_cfg.d, "polynomial degree");
  sweep->add_option("--k", sweep_cfg.k, "random columns");
  sweep->add_option("--sigma2", sweep_cfg.sigma2, "variance of Y entries");
  sweep->add_option("--sizes", sweep_cfg.sizes, "ascending matrix sizes");
  sweep->add_option("--trials", sweep_cfg.trials, "trials per size");
  sweep->add_option("--probes", sweep_cfg.probes, "random unit coefficient vectors per trial");
  sweep->add_option("--exponent", sweep_cfg.spec.scale_exponent, "Wigner scaling exponent");
  sweep->add_option("--seed", sweep_cfg.seed, "master seed");
  sweep->add_option("--out", sweep_out, "CSV output (default stdout)");

  auto* gradgap = land->add_subcommand("gradgap", "distance between sampled and mean-field loss gradients");
  landscape::GradGapConfig gap_cfg;
  std::vector<int> gap_sizes{100, 400, 1600};
  std::vector<double> gap_beta;
  std::string gap_out;
  gradgap->add_option("--sizes", gap_sizes, "matrix sizes");
  gradgap->add_option("--d", gap_cfg.d, "polynomial degree");
  gradgap->add_option("--k", gap_cfg.k, "random columns");
  gradgap->add_option("--noise", gap_cfg.spec.noise_level, "noise level of B = A + nu");
  gradgap->add_option("--exponent", gap_cfg.spec.scale_exponent, "Wigner scaling exponent");
  gradgap->add_option("--trials", gap_cfg.trials, "trials per size");
  gradgap->add_option("--beta", gap_beta, "d+1 coefficients (default all ones)");
  gradgap->add_option("--seed", gap_cfg.seed, "master seed");
  gradgap->add_option("--out", gap_out, "CSV output (default stdout)");

  auto* moments = land->add_subcommand("moments", "semicircle-law moment of a given power");
  int moment_power = 2;
  int moment_n = 0;
  std::uint64_t moment_seed = 0;
  moments->add_option("--m", moment_power, "power of lambda")->required();
  moments->add_option("--n", moment_n, "also report the spectral moment of one n x n Wigner sample");
  moments->add_option("--seed", moment_seed, "seed for the Wigner sample");

  // report
  auto* report = app.add_subcommand("report", "merge recovery CSVs into one table (rows p_e, columns methods)");
  std::vector<std::string> report_inputs;
  std::string report_out;
  report->add_option("inputs", report_inputs, "recovery CSV files")->required();
  report->add_option("--out", report_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*gen) {
      InstanceConfig ic;
      ic.model = parse_graph_model(gen_model);
      ic.n = gen_n;
      ic.p = gen_p;
      ic.deg = gen_deg;
      ic.p_e = gen_pe;
      detail::emit(gen_out, out, [&](std::ostream& os) { write_dataset(os, ic, gen_count, gen_seed); });
    } else if (*train_cmd) {
      const ExperimentConfig cfg = train_flags.resolve();
      if (cfg.train_mode == TrainMode::stream && cfg.dataset.empty()) {
        err << "note: streaming fresh samples each epoch (use --mode fixed or --dataset for a fixed corpus)\n";
      }
      train(cfg, [&](const EpochLog& e, const GnnModel&) {
        err << "epoch " << e.epoch << " loss " << e.mean_loss << " recovery " << e.train_recovery << " (" << e.wall_ms
            << " ms)\n";
      });
      if (cfg.output_dir.empty()) err << "note: no --out directory given; nothing was saved\n";
    } else if (*eval_cmd) {
      ExperimentConfig cfg = eval_flags.resolve();
      const GnnModel model = GnnModel::load(checkpoint);
      cfg.gnn = model.config();
      const auto rows = evaluate(cfg, &model);
      detail::emit(eval_out, out, [&](std::ostream& os) { write_recovery_csv(os, rows); });
    } else if (*base_cmd) {
      const ExperimentConfig cfg = base_flags.resolve();
      const auto rows = evaluate(cfg, nullptr);
      detail::emit(base_out, out, [&](std::ostream& os) { write_recovery_csv(os, rows); });
    } else if (*sweep) {
      const auto rows = landscape::concentration_sweep(sweep_cfg);
      detail::emit(sweep_out, out, [&](std::ostream& os) { landscape::write_sweep_csv(os, rows); });
    } else if (*gradgap) {
      std::vector<landscape::SweepRow> rows;
      for (int n : gap_sizes) {
        landscape::GradGapConfig c = gap_cfg;
        c.spec.n = n;
        c.beta = gap_beta.empty() ? Vector(Vector::Ones(c.d + 1))
                                 : Vector(Eigen::Map<const Vector>(gap_beta.data(), static_cast<Eigen::Index>(gap_beta.size())));
        const auto rep = landscape::gradient_gap(c);
        for (auto& r : landscape::gradient_gap_rows(c, rep)) rows.push_back(r);
      }
      detail::emit(gap_out, out, [&](std::ostream& os) { landscape::write_sweep_csv(os, rows); });
    } else if (*moments) {
      out.precision(12);
      out << "semicircle_moment(" << moment_power << ") = " << landscape::semicircle_moment(moment_power) << '\n';
      if (moment_n > 0) {
        Rng rng = make_rng(moment_seed);
        const Matrix a = landscape::sample_wigner(moment_n, 0.5, rng);
        out << "spectral_moment(n=" << moment_n << ") = " << landscape::spectral_moment(a, moment_power) << '\n';
      }
    } else if (*report) {
      std::vector<RecoveryRow> rows;
      for (const auto& path : report_inputs) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read " + path);
        for (auto& r : read_recovery_csv(in)) rows.push_back(std::move(r));
      }
      detail::emit(report_out, out, [&](std::ostream& os) { write_report(os, rows); });
    }
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace qapm::cli
