#pragma once

// Experiment configuration, the training loop, recovery evaluation and the
// CSV tables they produce.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qapm/baselines.hpp"
#include "qapm/dataset.hpp"
#include "qapm/gnn.hpp"
#include "qapm/optim.hpp"
#include "qapm/parallel.hpp"

namespace qapm {

enum class TrainMode { stream, fixed };

inline std::string to_string(TrainMode m) { return m == TrainMode::stream ? "stream" : "fixed"; }

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "stream") return TrainMode::stream;
  if (s == "fixed") return TrainMode::fixed;
  throw ParameterError("unknown train mode '" + s + "' (expected stream|fixed)");
}

struct ExperimentConfig {
  InstanceConfig instance;  // p_e is ignored; see train_pe_* and noise_grid
  std::vector<double> noise_grid{0.0, 0.02, 0.05, 0.1};
  double train_pe_min = 0.0;
  double train_pe_max = 0.1;
  int train_size = 20000;
  int epochs = 1;
  int batch = 32;
  double lr = 1e-3;
  TrainMode train_mode = TrainMode::stream;
  std::string dataset;  // JSONL corpus; overrides generated samples when set
  GnnConfig gnn;
  std::vector<std::string> baselines{"umeyama", "lowrank"};
  LowRankOptions lowrank;
  Decode decode = Decode::argmax;
  int trials = 100;
  std::uint64_t seed = 0;
  std::string output_dir;
  bool record_wall_time = true;

  void validate() const {
    if (batch < 1) throw ParameterError("batch must be >= 1");
    if (train_size < 0 || epochs < 0 || trials < 0) throw ParameterError("sizes must be non-negative");
    if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
    check_probability(train_pe_min, "train_pe_min");
    check_probability(train_pe_max, "train_pe_max");
    if (train_pe_min > train_pe_max) throw ParameterError("train_pe_min exceeds train_pe_max");
    for (double pe : noise_grid) check_probability(pe, "noise grid value");
    for (const auto& b : baselines) {
      if (b != "umeyama" && b != "lowrank") throw ParameterError("unknown baseline '" + b + "'");
    }
    gnn.validate();
  }

  bool operator==(const ExperimentConfig& o) const = default;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"instance", to_json(c.instance)},
          {"noise_grid", c.noise_grid},
          {"train_pe_min", c.train_pe_min},
          {"train_pe_max", c.train_pe_max},
          {"train_size", c.train_size},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"train_mode", to_string(c.train_mode)},
          {"dataset", c.dataset},
          {"gnn", to_json(c.gnn)},
          {"baselines", c.baselines},
          {"lowrank_k", c.lowrank.k},
          {"lowrank_scaling", c.lowrank.scaling == LowRankScaling::eigenvalue ? "eigenvalue" : "none"},
          {"decode", to_string(c.decode)},
          {"trials", c.trials},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"record_wall_time", c.record_wall_time}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("instance")) c.instance = instance_config_from_json(j.at("instance"));
  c.noise_grid = j.value("noise_grid", c.noise_grid);
  c.train_pe_min = j.value("train_pe_min", c.train_pe_min);
  c.train_pe_max = j.value("train_pe_max", c.train_pe_max);
  c.train_size = j.value("train_size", c.train_size);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.train_mode = parse_train_mode(j.value("train_mode", to_string(c.train_mode)));
  c.dataset = j.value("dataset", c.dataset);
  if (j.contains("gnn")) c.gnn = gnn_config_from_json(j.at("gnn"));
  c.baselines = j.value("baselines", c.baselines);
  c.lowrank.k = j.value("lowrank_k", c.lowrank.k);
  c.lowrank.scaling = parse_low_rank_scaling(j.value("lowrank_scaling", std::string("eigenvalue")));
  c.decode = parse_decode(j.value("decode", to_string(c.decode)));
  c.trials = j.value("trials", c.trials);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- training

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_recovery = 0.0;
  long long wall_ms = 0;
};

inline void write_metrics_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,mean_loss,train_recovery,wall_ms\n";
  out.precision(17);
  for (const EpochLog& e : log) out << e.epoch << ',' << e.mean_loss << ',' << e.train_recovery << ',' << e.wall_ms << '\n';
}

struct TrainResult {
  GnnModel model;
  std::vector<EpochLog> log;
};

/// Called after every epoch with the log entry and the current weights.
using EpochCallback = std::function<void(const EpochLog&, const GnnModel&)>;

namespace detail {

// Noise level of training sample `seed`, uniform in [min, max].
inline double sample_noise_level(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.train_pe_max <= cfg.train_pe_min) return cfg.train_pe_min;
  Rng rng = make_rng(derive_seed(seed, 0x9e));
  return std::uniform_real_distribution<double>(cfg.train_pe_min, cfg.train_pe_max)(rng);
}

inline PlantedInstance training_sample(const ExperimentConfig& cfg, std::uint64_t seed) {
  InstanceConfig ic = cfg.instance;
  ic.p_e = sample_noise_level(cfg, seed);
  return make_instance(ic, seed);
}

inline void save_outputs(const ExperimentConfig& cfg, const GnnModel& model, const std::vector<EpochLog>& log) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  const std::string tmp = (dir / "checkpoint.json.tmp").string();
  model.save(tmp);
  std::filesystem::rename(tmp, dir / "checkpoint.json");
  std::ofstream metrics(dir / "metrics.csv");
  write_metrics_csv(metrics, log);
  ad::write_json_file((dir / "config.json").string(), to_json(cfg));
}

}  // namespace detail

/// Trains the siamese GNN with Adamax on planted instances.
///
/// Sample sources: a JSONL dataset when `cfg.dataset` is set; otherwise
/// `train_size` generated instances, either regenerated fresh every epoch
/// (stream) or the same corpus reshuffled each epoch (fixed). Every sample seed
/// derives from `cfg.seed`, so single-threaded runs are reproducible bit for
/// bit. A checkpoint is written after every epoch; a non-finite loss aborts the
/// run and leaves the last good checkpoint in place.
inline TrainResult train(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  TrainResult result{GnnModel::init(cfg.gnn, derive_seed(cfg.seed, 0)), {}};
  std::vector<DatasetSample> corpus;
  if (!cfg.dataset.empty()) corpus = read_dataset(cfg.dataset);
  const std::size_t size = cfg.dataset.empty() ? static_cast<std::size_t>(cfg.train_size) : corpus.size();
  if (size == 0 || cfg.epochs == 0) {
    detail::save_outputs(cfg, result.model, result.log);
    return result;
  }

  ad::Adamax opt(ad::AdamaxOptions{cfg.lr});
  GnnModel& model = result.model;
  const std::vector<ad::Parameter*> params = model.parameters();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.train_mode == TrainMode::fixed || !cfg.dataset.empty()) {
      Rng rng = make_rng(derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = size - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(order[i], order[pick(rng)]);
      }
    }
    auto sample_at = [&](std::size_t idx) {
      if (!corpus.empty()) return corpus[idx].instance;
      const std::uint64_t stream = cfg.train_mode == TrainMode::fixed ? 1 : 2 + static_cast<std::uint64_t>(epoch);
      return detail::training_sample(cfg, derive_seed(cfg.seed, stream, idx));
    };

    double loss_sum = 0.0;
    double rec_sum = 0.0;
    for (std::size_t first = 0; first < size; first += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t last = std::min(size, first + static_cast<std::size_t>(cfg.batch));
      std::vector<PlantedInstance> batch;
      batch.reserve(last - first);
      for (std::size_t i = first; i < last; ++i) batch.push_back(sample_at(order[i]));
      ad::Tape tape;
      const BatchLoss bl = batch_loss(tape, model, batch, Phase::train);
      const double value = bl.loss.value()(0, 0);
      if (!std::isfinite(value)) throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch));
      model.zero_grad();
      tape.backward(bl.loss);
      opt.step(params);
      loss_sum += value * static_cast<double>(batch.size());
      rec_sum += bl.recovery * static_cast<double>(batch.size());
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(size), rec_sum / static_cast<double>(size), 0};
    if (cfg.record_wall_time) {
      entry.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    }
    result.log.push_back(entry);
    detail::save_outputs(cfg, model, result.log);
    if (on_epoch) on_epoch(entry, model);
  }
  return result;
}

// -------------------------------------------------------------- evaluation

struct RecoveryRow {
  std::string method;
  double p_e = 0.0;
  double mean_recovery = 0.0;
  double std = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
};

inline std::uint64_t eval_instance_seed(std::uint64_t seed, std::size_t grid_index, std::size_t trial) {
  return derive_seed(seed, 1000 + grid_index, trial);
}

/// Recovery of the GNN (when given) and each configured baseline on `trials`
/// fresh instances per noise level. All methods see the same instances.
inline std::vector<RecoveryRow> evaluate(const ExperimentConfig& cfg, const GnnModel* model) {
  cfg.validate();
  if (model != nullptr) {
    const GnnConfig& m = model->config();
    if (m.layers != cfg.gnn.layers || m.feat != cfg.gnn.feat || m.J != cfg.gnn.J) {
      throw ConfigError("evaluate: checkpoint shapes do not match the configuration");
    }
  }
  std::vector<std::string> methods;
  if (model != nullptr) methods.push_back("gnn");
  for (const auto& b : cfg.baselines) methods.push_back(b);

  std::vector<RecoveryRow> rows;
  if (cfg.trials == 0) return rows;
  for (std::size_t g = 0; g < cfg.noise_grid.size(); ++g) {
    InstanceConfig ic = cfg.instance;
    ic.p_e = cfg.noise_grid[g];
    std::vector<std::vector<double>> scores(methods.size(), std::vector<double>(static_cast<std::size_t>(cfg.trials)));
    parallel_for(static_cast<std::size_t>(cfg.trials), [&](std::size_t t) {
      const PlantedInstance inst = make_instance(ic, eval_instance_seed(cfg.seed, g, t));
      for (std::size_t m = 0; m < methods.size(); ++m) {
        double r = 0.0;
        if (methods[m] == "gnn") {
          r = *match(*model, inst.g1, inst.g2, cfg.decode, inst.pi).recovery;
        } else if (methods[m] == "umeyama") {
          r = *umeyama(inst.g1, inst.g2, inst.pi).recovery;
        } else {
          r = *low_rank_align(inst.g1, inst.g2, cfg.lowrank, inst.pi).recovery;
        }
        scores[m][t] = r;
      }
    });
    for (std::size_t m = 0; m < methods.size(); ++m) {
      double mean = 0.0;
      for (double s : scores[m]) mean += s;
      mean /= cfg.trials;
      double var = 0.0;
      for (double s : scores[m]) var += (s - mean) * (s - mean);
      const double sd = cfg.trials > 1 ? std::sqrt(var / (cfg.trials - 1)) : 0.0;
      rows.push_back({methods[m], ic.p_e, mean, sd, cfg.trials, cfg.seed});
    }
  }
  return rows;
}

inline void write_recovery_csv(std::ostream& out, const std::vector<RecoveryRow>& rows) {
  out << "method,p_e,mean_recovery,std,trials,seed\n";
  out.precision(17);
  for (const RecoveryRow& r : rows) {
    out << r.method << ',' << r.p_e << ',' << r.mean_recovery << ',' << r.std << ',' << r.trials << ',' << r.seed << '\n';
  }
}

inline std::vector<RecoveryRow> read_recovery_csv(std::istream& in) {
  std::vector<RecoveryRow> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,p_e,mean_recovery", 0) != 0) {
    throw ParameterError("not a recovery table (missing header)");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 6) throw ParameterError("malformed recovery row: " + line);
    rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stoi(f[4]), std::stoull(f[5])});
  }
  return rows;
}

/// Wide table: one row per noise level, one mean-recovery column per method.
/// Duplicate (method, p_e) rows are pooled, weighted by trial count.
inline void write_report(std::ostream& out, const std::vector<RecoveryRow>& rows) {
  std::set<std::string> methods;
  std::map<double, std::map<std::string, std::pair<double, int>>> table;
  for (const RecoveryRow& r : rows) {
    methods.insert(r.method);
    auto& cell = table[r.p_e][r.method];
    cell.first += r.mean_recovery * r.trials;
    cell.second += r.trials;
  }
  out << "p_e";
  for (const auto& m : methods) out << ',' << m;
  out << '\n';
  out.precision(6);
  for (const auto& [pe, cells] : table) {
    out << pe;
    for (const auto& m : methods) {
      out << ',';
      auto it = cells.find(m);
      if (it != cells.end() && it->second.second > 0) out << it->second.first / it->second.second;
    }
    out << '\n';
  }
}

}  // namespace qapm
