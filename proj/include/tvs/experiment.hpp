#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tvs/checkpoint.hpp"
#include "tvs/data.hpp"
#include "tvs/engine.hpp"
#include "tvs/metrics.hpp"
#include "tvs/model_bsc.hpp"
#include "tvs/model_sbn.hpp"

namespace tvs {

// ---------------------------------------------------------------------------
// Flat key=value configuration with typed access. Unknown keys are rejected
// after parsing so typos surface before any compute starts.

class KvConfig {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw ConfigError(path + ": expected key=value at line " + std::to_string(line_no));
        continue;
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  // "key=value" as given on the command line.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  std::string require_str(const std::string& key) const {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
  }

  long get_int(const std::string& key, long fallback) const {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config key " + key + " is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double fallback) const {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config key " + key + " is not a number: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key " + key + " is not a boolean: " + it->second);
  }

  void reject_unknown_keys() const {
    for (const auto& [key, value] : kv_) {
      if (!consumed_.count(key)) throw ConfigError("unknown config key: " + key);
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> consumed_;
};

// ---------------------------------------------------------------------------
// Schedule DSL: comma-separated segments "begin-end:mp:mq", each count either
// a constant or a linear ramp "a->b" expanded to one entry per iteration.
// When both endpoint sums match, the per-iteration total is held exact.

namespace detail {

struct RampCount {
  double from = 0.0;
  double to = 0.0;
  bool is_ramp = false;
};

inline RampCount parse_count(const std::string& tok) {
  RampCount c;
  const auto arrow = tok.find("->");
  try {
    if (arrow == std::string::npos) {
      c.from = c.to = std::stod(tok);
    } else {
      c.from = std::stod(tok.substr(0, arrow));
      c.to = std::stod(tok.substr(arrow + 2));
      c.is_ramp = true;
    }
  } catch (...) {
    throw ConfigError("bad sample count in schedule: " + tok);
  }
  return c;
}

}  // namespace detail

inline std::vector<ScheduleEntry> parse_schedule(const std::string& text) {
  std::vector<ScheduleEntry> entries;
  std::stringstream ss(text);
  std::string seg;
  while (std::getline(ss, seg, ',')) {
    if (seg.empty()) continue;
    const auto dash = seg.find('-');
    const auto c1 = seg.find(':');
    if (dash == std::string::npos || c1 == std::string::npos || dash > c1)
      throw ConfigError("bad schedule segment (want begin-end:mp:mq): " + seg);
    const auto c2 = seg.find(':', c1 + 1);
    if (c2 == std::string::npos) throw ConfigError("bad schedule segment (want begin-end:mp:mq): " + seg);
    int begin = 0, end = 0;
    try {
      begin = std::stoi(seg.substr(0, dash));
      end = std::stoi(seg.substr(dash + 1, c1 - dash - 1));
    } catch (...) {
      throw ConfigError("bad iteration range in schedule: " + seg);
    }
    const detail::RampCount mp = detail::parse_count(seg.substr(c1 + 1, c2 - c1 - 1));
    const detail::RampCount mq = detail::parse_count(seg.substr(c2 + 1));
    if (!mp.is_ramp && !mq.is_ramp) {
      entries.push_back({begin, end, static_cast<int>(mp.from), static_cast<int>(mq.from)});
      continue;
    }
    if (end <= begin) throw ConfigError("empty ramp segment in schedule: " + seg);
    const bool constant_total = mp.from + mq.from == mp.to + mq.to;
    const double span = static_cast<double>(end - begin);
    for (int t = begin; t < end; ++t) {
      const double alpha = static_cast<double>(t - begin) / span;
      const int p = static_cast<int>(std::lround(mp.from + alpha * (mp.to - mp.from)));
      const int q = constant_total
                        ? static_cast<int>(std::lround(mp.from + mq.from)) - p
                        : static_cast<int>(std::lround(mq.from + alpha * (mq.to - mq.from)));
      entries.push_back({t, t + 1, p, q});
    }
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  ModelKind model = ModelKind::bsc;
  std::string dataset = "bars";       // "bars" or a file path
  std::string dataset_format = "auto";  // auto | tvsd | txt | mnist
  BarsSpec bars;
  int H = 10;
  TvsConfig tvs;
  MarginalSource marginal_source = MarginalSource::truncated;
  double clamp_lo = 0.01;
  double clamp_hi = 0.99;
  int amortizer_hidden = 50;
  AmortizerTrainOpts amortizer_opts;
  BscClamps bsc_clamps;
  SbnClamps sbn_clamps;
  double sbn_lr = 0.5;
  double sbn_lr_decay = 0.999;
  double sbn_init_w_std = 0.01;
  double sbn_init_pi = 0.0;  // 0: 1/H
  std::string output_dir = "out";
  int checkpoint_every = 0;  // 0: final state checkpoint only
  int eval_e_steps = 50;
  int eval_m_p = 10;
  int eval_m_q = 20;
  bool eval_exact_ll = false;
};

inline ExperimentConfig build_experiment(const KvConfig& kv) {
  ExperimentConfig cfg;
  const std::string model = kv.get_str("model", "bsc");
  if (model == "bsc") {
    cfg.model = ModelKind::bsc;
  } else if (model == "sbn") {
    cfg.model = ModelKind::sbn;
  } else {
    throw ConfigError("model must be bsc or sbn, got: " + model);
  }

  cfg.dataset = kv.get_str("dataset", "bars");
  cfg.dataset_format = kv.get_str("dataset_format", "auto");
  if (cfg.dataset_format != "auto" && cfg.dataset_format != "tvsd" && cfg.dataset_format != "txt" &&
      cfg.dataset_format != "mnist")
    throw ConfigError("dataset_format must be auto, tvsd, txt or mnist");

  cfg.bars.grid = static_cast<int>(kv.get_int("bars.grid", 5));
  cfg.bars.bar_value = kv.get_double("bars.value", 10.0);
  cfg.bars.pi = kv.get_double("bars.pi", 0.2);
  cfg.bars.sigma = kv.get_double("bars.sigma", 2.0);
  cfg.bars.bias = kv.get_double("bars.bias", -5.0);
  cfg.bars.n = static_cast<int>(kv.get_int("bars.n", cfg.model == ModelKind::bsc ? 10000 : 2000));

  cfg.H = static_cast<int>(kv.get_int("H", 2 * cfg.bars.grid));
  cfg.tvs.S = static_cast<int>(kv.get_int("S", 64));
  cfg.tvs.total_iterations = static_cast<int>(kv.get_int("iterations", 100));
  cfg.tvs.rng_seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  cfg.tvs.dedup_retry_cap = static_cast<int>(kv.get_int("dedup_retry_cap", 1000));
  cfg.tvs.threads = static_cast<int>(kv.get_int("threads", 0));
  cfg.tvs.amortizer_enabled = kv.get_bool("amortizer.enabled", false);
  cfg.tvs.amortizer_refresh_period = static_cast<int>(kv.get_int("amortizer.refresh", 5));

  const int m_p = static_cast<int>(kv.get_int("m_p", 32));
  const int m_q = static_cast<int>(kv.get_int("m_q", 32));
  const std::string schedule = kv.get_str("schedule", "");
  if (!schedule.empty()) {
    cfg.tvs.schedule = parse_schedule(schedule);
  } else if (cfg.tvs.total_iterations > 0) {
    cfg.tvs.schedule.push_back({0, cfg.tvs.total_iterations, m_p, m_q});
  }

  const std::string source = kv.get_str("marginal.source", cfg.tvs.amortizer_enabled ? "amortized" : "truncated");
  if (source == "truncated") {
    cfg.marginal_source = MarginalSource::truncated;
  } else if (source == "amortized") {
    cfg.marginal_source = MarginalSource::amortized;
  } else {
    throw ConfigError("marginal.source must be truncated or amortized");
  }
  cfg.clamp_lo = kv.get_double("marginal.clamp_lo", 0.01);
  cfg.clamp_hi = kv.get_double("marginal.clamp_hi", 0.99);

  cfg.amortizer_hidden = static_cast<int>(kv.get_int("amortizer.hidden", 50));
  cfg.amortizer_opts.epochs = static_cast<int>(kv.get_int("amortizer.epochs", 3));
  cfg.amortizer_opts.batch = static_cast<int>(kv.get_int("amortizer.batch", 100));
  cfg.amortizer_opts.step = kv.get_double("amortizer.step", 0.1);

  cfg.bsc_clamps.pi_min = kv.get_double("bsc.pi_min", 1e-4);
  cfg.bsc_clamps.sigma2_min = kv.get_double("bsc.sigma2_min", 1e-8);
  cfg.sbn_clamps.pi_min = kv.get_double("sbn.pi_min", 1e-4);
  cfg.sbn_lr = kv.get_double("sbn.lr", 0.5);
  cfg.sbn_lr_decay = kv.get_double("sbn.lr_decay", 0.999);
  cfg.sbn_init_w_std = kv.get_double("sbn.init_w_std", 0.01);
  cfg.sbn_init_pi = kv.get_double("sbn.init_pi", 0.0);

  cfg.output_dir = kv.get_str("output_dir", "out");
  cfg.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", 0));
  cfg.eval_e_steps = static_cast<int>(kv.get_int("eval.e_steps", 50));
  cfg.eval_m_p = static_cast<int>(kv.get_int("eval.m_p", 10));
  cfg.eval_m_q = static_cast<int>(kv.get_int("eval.m_q", 20));
  cfg.eval_exact_ll = kv.get_bool("eval.exact_ll", false);

  kv.reject_unknown_keys();
  validate_config(cfg.tvs);
  if (cfg.eval_exact_ll && cfg.H > 20)
    throw ConfigError("eval.exact_ll requires H <= 20");
  if (cfg.H < 1) throw ConfigError("H must be >= 1");
  return cfg;
}

// ---------------------------------------------------------------------------
// Dataset resolution

inline Dataset generate_inline_bars(const ExperimentConfig& cfg) {
  if (cfg.model == ModelKind::bsc) {
    BscParams p;
    p.pi = cfg.bars.pi;
    p.W = make_bars_dictionary(cfg.bars.grid, cfg.bars.bar_value);
    p.sigma2 = cfg.bars.sigma * cfg.bars.sigma;
    return BscModel::generate(p, cfg.bars.n, cfg.tvs.rng_seed);
  }
  const SbnParams p =
      sbn_bars_ground_truth(cfg.bars.grid, cfg.bars.bar_value, cfg.bars.bias, cfg.bars.pi);
  return SbnModel::generate(p, cfg.bars.n, cfg.tvs.rng_seed);
}

inline Dataset load_dataset_file(const ExperimentConfig& cfg, const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("dataset file not found: " + path);
  std::string format = cfg.dataset_format;
  if (format == "auto") {
    std::ifstream sniff(path, std::ios::binary);
    char m[4] = {};
    sniff.read(m, 4);
    format = std::memcmp(m, "TVSD", 4) == 0 ? "tvsd" : "txt";
  }
  Dataset ds;
  if (format == "tvsd") {
    ds = load_dataset(path);
  } else if (format == "mnist") {
    ds = load_binarized_mnist(path);
  } else {
    ds.Y = load_matrix_txt(path);
    ds.kind = DataKind::continuous;
  }
  if (cfg.model == ModelKind::sbn) {
    if ((ds.Y.array() != 0.0 && ds.Y.array() != 1.0).any())
      throw ConfigError("sbn requires binary data, but " + path + " has non-binary entries");
    ds.kind = DataKind::binary;
  }
  return ds;
}

inline Dataset resolve_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "bars") return generate_inline_bars(cfg);
  return load_dataset_file(cfg, cfg.dataset);
}

// ---------------------------------------------------------------------------
// Dictionary rasterization

inline bool perfect_square(int d, int* side) {
  const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  if (r * r == d) {
    *side = r;
    return true;
  }
  return false;
}

// One PGM per dictionary column, min-max normalized, rasterized side x side.
inline void write_dictionary_pgms(const Eigen::MatrixXd& W, const std::string& dir) {
  int side = 0;
  if (!perfect_square(static_cast<int>(W.rows()), &side))
    throw Error("write_dictionary_pgms: data dimension is not a perfect square");
  std::filesystem::create_directories(dir);
  for (Eigen::Index h = 0; h < W.cols(); ++h) {
    const double lo = W.col(h).minCoeff();
    const double hi = W.col(h).maxCoeff();
    const double span = hi - lo;
    MatrixRM img(side, side);
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        const double v = W(i * side + j, h);
        img(i, j) = span == 0.0 ? 128.0 : 255.0 * (v - lo) / span;
      }
    write_pgm(dir + "/w_" + std::to_string(h) + ".pgm", img);
  }
}

// ---------------------------------------------------------------------------
// Commands. Each throws ConfigError for anything detectable before compute;
// the CLI maps exceptions to exit codes.

inline void cmd_generate(const ExperimentConfig& cfg, const std::string& out_path) {
  if (cfg.dataset != "bars")
    throw ConfigError("generate only supports inline bars data (set dataset = bars)");
  const Dataset ds = generate_inline_bars(cfg);
  std::filesystem::path out(out_path);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_dataset(ds, out_path);
  write_matrix_csv(out_path + ".gt.csv", ds.ground_truth->W);
  std::cout << "generated " << model_kind_name(cfg.model) << " bars dataset: N=" << ds.n()
            << " D=" << ds.d() << " H=" << ds.ground_truth->W.cols() << " seed=" << cfg.tvs.rng_seed
            << " -> " << out_path << "\n";
}

struct FitOutcome {
  TrajectoryLog log;
  ParamsCheckpoint params;
  double final_free_energy = 0.0;
};

namespace detail {

template <typename Model>
FitOutcome fit_with_model(Model& model, ModelKind kind, const ExperimentConfig& ecfg,
                          const Dataset& data, SamplerBundle& bundle,
                          VariationalState& vs, int start_iteration) {
  const std::filesystem::path dir(ecfg.output_dir);
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "trajectory.csv", start_iteration == 0 ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("cannot open trajectory csv in " + ecfg.output_dir);
  if (start_iteration == 0) csv << trajectory_csv_header(model.scalar_names()) << "\n";

  auto snapshot_params = [&]() {
    ParamsCheckpoint p;
    p.kind = kind;
    p.params = model.params();
    return p;
  };
  auto snapshot_state = [&](int next_iteration) {
    FitStateCheckpoint ck;
    ck.rng_seed = ecfg.tvs.rng_seed;
    ck.next_iteration = next_iteration;
    if constexpr (std::is_same_v<Model, SbnModel>) ck.sbn_lr = model.learning_rate();
    ck.params = snapshot_params();
    ck.state = vs;
    ck.net = bundle.net;
    return ck;
  };

  const FitObserver observer = [&](const TrajectoryRow& row, const VariationalState& state) {
    csv << trajectory_csv_row(row) << "\n";
    csv.flush();
    if (ecfg.checkpoint_every > 0 && (row.iteration + 1) % ecfg.checkpoint_every == 0 &&
        row.iteration + 1 < ecfg.tvs.total_iterations) {
      (void)state;
      save_fit_state(snapshot_state(row.iteration + 1),
                     (dir / ("state_" + std::to_string(row.iteration + 1) + ".tvsf")).string());
    }
  };

  FitOutcome out;
  out.log = run_tvs(model, data, ecfg.tvs, bundle, vs, start_iteration, observer);
  out.params = snapshot_params();
  out.final_free_energy =
      out.log.rows.empty() ? free_energy(vs, resolve_threads(ecfg.tvs.threads))
                           : out.log.rows.back().free_energy;

  save_params(out.params, (dir / "params.tvsp").string());
  save_fit_state(snapshot_state(ecfg.tvs.total_iterations), (dir / "state.tvsf").string());
  write_matrix_csv((dir / "dictionary.csv").string(), out.params.W());
  int side = 0;
  if (perfect_square(static_cast<int>(out.params.W().rows()), &side))
    write_dictionary_pgms(out.params.W(), (dir / "dictionary").string());
  return out;
}

}  // namespace detail

inline FitOutcome cmd_fit(const ExperimentConfig& ecfg, const std::string& resume_path = "") {
  const Dataset data = resolve_dataset(ecfg);

  std::optional<FitStateCheckpoint> resume;
  if (!resume_path.empty()) {
    if (!std::filesystem::exists(resume_path))
      throw ConfigError("resume checkpoint not found: " + resume_path);
    resume = load_fit_state(resume_path);
    if (resume->params.kind != ecfg.model)
      throw ConfigError("resume checkpoint model kind does not match the config");
  }

  SamplerBundle bundle;
  bundle.source = ecfg.marginal_source;
  bundle.clamp_lo = ecfg.clamp_lo;
  bundle.clamp_hi = ecfg.clamp_hi;
  bundle.train_opts = ecfg.amortizer_opts;
  const bool needs_net = ecfg.tvs.amortizer_enabled || ecfg.marginal_source == MarginalSource::amortized;
  if (resume && resume->net) {
    bundle.net = resume->net;
  } else if (needs_net) {
    Rng rng = derive_rng(ecfg.tvs.rng_seed, Stream::model_init, 1, 0);
    bundle.net = AmortizerNet::init(data.d(), ecfg.amortizer_hidden, ecfg.H, rng);
  }

  FitOutcome out;
  if (ecfg.model == ModelKind::bsc) {
    Rng rng = derive_rng(ecfg.tvs.rng_seed, Stream::model_init, 0, 0);
    BscModel model = resume ? BscModel(std::get<BscParams>(resume->params.params), ecfg.bsc_clamps)
                            : BscModel::init_from_data(data, ecfg.H, rng, ecfg.bsc_clamps);
    VariationalState vs;
    int start = 0;
    if (resume) {
      vs = std::move(resume->state);
      refresh_log_joints(vs, model, data, resolve_threads(ecfg.tvs.threads));
      start = resume->next_iteration;
    } else {
      vs = init_ksets(model, ecfg.tvs, data);
    }
    out = detail::fit_with_model(model, ModelKind::bsc, ecfg, data, bundle, vs, start);
    std::cout << "fit complete: model=bsc iterations=" << ecfg.tvs.total_iterations
              << " free_energy=" << format_double(out.final_free_energy)
              << " sigma2=" << format_double(model.params().sigma2)
              << " pi_H=" << format_double(model.params().pi * model.latent_dim()) << "\n";
  } else {
    Rng rng = derive_rng(ecfg.tvs.rng_seed, Stream::model_init, 0, 0);
    SbnModel model = resume
                         ? SbnModel(std::get<SbnParams>(resume->params.params), ecfg.sbn_clamps,
                                    resume->sbn_lr, ecfg.sbn_lr_decay)
                         : SbnModel::init_from_data(data, ecfg.H, rng, ecfg.sbn_clamps, ecfg.sbn_lr,
                                                    ecfg.sbn_lr_decay);
    VariationalState vs;
    int start = 0;
    if (resume) {
      vs = std::move(resume->state);
      refresh_log_joints(vs, model, data, resolve_threads(ecfg.tvs.threads));
      start = resume->next_iteration;
    } else {
      vs = init_ksets(model, ecfg.tvs, data);
    }
    out = detail::fit_with_model(model, ModelKind::sbn, ecfg, data, bundle, vs, start);
    std::cout << "fit complete: model=sbn iterations=" << ecfg.tvs.total_iterations
              << " free_energy=" << format_double(out.final_free_energy)
              << " pi_mean=" << format_double(model.params().pi.mean()) << "\n";
  }
  return out;
}

struct EvalOutcome {
  std::vector<double> curve;  // free energy after init and after each E-step
  double total = 0.0;
  double per_datapoint = 0.0;
  std::optional<double> exact_loglik;
  std::optional<double> recovery;
};

inline EvalOutcome cmd_eval(const ExperimentConfig& ecfg, const std::string& params_path,
                            const std::string& dataset_path = "") {
  if (!std::filesystem::exists(params_path))
    throw ConfigError("checkpoint not found: " + params_path);
  const ParamsCheckpoint ckpt = load_any_params(params_path);
  ExperimentConfig cfg = ecfg;
  cfg.model = ckpt.kind;
  const Dataset data =
      dataset_path.empty() ? resolve_dataset(cfg) : load_dataset_file(cfg, dataset_path);
  if (ckpt.data_dim() != data.d())
    throw ConfigError("checkpoint dimension " + std::to_string(ckpt.data_dim()) +
                      " does not match dataset dimension " + std::to_string(data.d()));
  if (cfg.eval_exact_ll && ckpt.latent_dim() > 20)
    throw ConfigError("eval.exact_ll requires H <= 20");

  EvalOpts opts;
  opts.e_steps = cfg.eval_e_steps;
  opts.m_p = cfg.eval_m_p;
  opts.m_q = cfg.eval_m_q;
  opts.clamp_lo = cfg.clamp_lo;
  opts.clamp_hi = cfg.clamp_hi;
  opts.seed = cfg.tvs.rng_seed;
  opts.dedup_retry_cap = cfg.tvs.dedup_retry_cap;
  opts.threads = cfg.tvs.threads;

  EvalOutcome out;
  const int threads = resolve_threads(cfg.tvs.threads);
  if (ckpt.kind == ModelKind::bsc) {
    const BscModel model(std::get<BscParams>(ckpt.params), cfg.bsc_clamps);
    out.curve = eval_free_energy_curve(model, data, cfg.tvs.S, opts);
    if (cfg.eval_exact_ll) out.exact_loglik = model.exact_loglik(data, threads);
  } else {
    const SbnModel model(std::get<SbnParams>(ckpt.params), cfg.sbn_clamps);
    out.curve = eval_free_energy_curve(model, data, cfg.tvs.S, opts);
    if (cfg.eval_exact_ll) out.exact_loglik = model.exact_loglik(data, threads);
  }
  out.total = out.curve.back();
  out.per_datapoint = out.total / data.n();
  if (data.ground_truth && data.ground_truth->W.cols() == ckpt.latent_dim())
    out.recovery =
        dictionary_recovery_score(ckpt.W(), data.ground_truth->W, ckpt.kind == ModelKind::sbn);

  std::filesystem::create_directories(cfg.output_dir);
  std::string report = "e_step,free_energy\n";
  for (std::size_t i = 0; i < out.curve.size(); ++i)
    report += std::to_string(i) + "," + format_double(out.curve[i]) + "\n";
  write_text_file(cfg.output_dir + "/eval.csv", report);

  std::cout << "eval: datapoints=" << data.n() << " e_steps=" << opts.e_steps
            << " free_energy=" << format_double(out.total)
            << " per_datapoint=" << format_double(out.per_datapoint);
  if (out.exact_loglik) std::cout << " exact_loglik=" << format_double(*out.exact_loglik);
  if (out.recovery) std::cout << " recovery=" << format_double(*out.recovery);
  std::cout << "\n";
  return out;
}

inline void cmd_dump(const std::string& params_path, const std::string& out_dir) {
  if (!std::filesystem::exists(params_path))
    throw ConfigError("checkpoint not found: " + params_path);
  const ParamsCheckpoint ckpt = load_any_params(params_path);
  std::filesystem::create_directories(out_dir);
  write_matrix_csv(out_dir + "/dictionary.csv", ckpt.W());
  int side = 0;
  if (perfect_square(ckpt.data_dim(), &side)) {
    write_dictionary_pgms(ckpt.W(), out_dir + "/dictionary");
  } else {
    std::cout << "note: D=" << ckpt.data_dim() << " is not a perfect square; skipping PGM output\n";
  }
  std::cout << "model=" << model_kind_name(ckpt.kind) << " D=" << ckpt.data_dim()
            << " H=" << ckpt.latent_dim();
  if (ckpt.kind == ModelKind::bsc) {
    const auto& p = std::get<BscParams>(ckpt.params);
    std::cout << " pi=" << format_double(p.pi) << " sigma2=" << format_double(p.sigma2);
  } else {
    const auto& p = std::get<SbnParams>(ckpt.params);
    std::cout << " pi_mean=" << format_double(p.pi.mean()) << " b_mean=" << format_double(p.b.mean());
  }
  std::cout << "\n";
}

}  // namespace tvs
