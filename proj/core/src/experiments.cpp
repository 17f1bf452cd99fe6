#include "csipred/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "csipred/csvio.hpp"
#include "json.hpp"

namespace csipred {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) + a + 1) + b + 1);
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || (it.key() == k);
    if (!ok)
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + where +
                                  " of the experiment config");
  }
}

double mean_linear_db(const std::vector<double>& per_tau_db) {
  double acc = 0.0;
  for (double db : per_tau_db) acc += std::pow(10.0, db / 10.0);
  acc /= static_cast<double>(per_tau_db.size());
  return std::max(10.0 * std::log10(acc), kMseFloorDb);
}

// Fixed mixture axis for the generalized-training study.
const std::vector<double> kMixedDopplerHz = {1.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0};

// Runs fn(0..n-1) on `workers` threads. The first exception wins and is
// rethrown after all threads join.
void run_pool(std::size_t workers, std::size_t n, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::size_t slots_for_windows(std::size_t n_windows, std::size_t t_csi,
                              std::size_t input_len) {
  return t_csi * (input_len + n_windows - 1) + t_csi;
}

std::string ExperimentConfig::fingerprint() const {
  std::ostringstream ss;
  ss << "seed=" << seed << ";cqi=" << cqi_table.fingerprint()
     << ";channel=" << channel.fingerprint() << ";split=" << format_double(split[0]) << ","
     << format_double(split[1]) << "," << format_double(split[2]);
  for (const PredictorSpec& p : predictors) {
    ss << ";pred=" << to_string(p.kind) << "," << p.input_len << "," << p.hidden << ","
       << p.t_csi << "," << to_string(p.mode) << "," << p.fdd_horizon << ","
       << to_string(p.target);
  }
  ss << ";train=" << train.epochs << "," << train.batch_size << ","
     << format_double(train.learning_rate) << "," << train.shuffle_seed << ","
     << train.patience;
  ss << ";sweep.doppler=";
  for (double d : sweep.doppler_hz) ss << format_double(d) << "|";
  ss << ";sweep.t_csi=";
  for (std::size_t t : sweep.t_csi) ss << t << "|";
  ss << ";sweep.horizons=";
  for (std::size_t h : sweep.fdd_horizons) ss << h << "|";
  ss << ";sweep.hidden=";
  for (std::size_t h : sweep.hidden) ss << h << "|";
  ss << ";sweep.input_len=";
  for (std::size_t p : sweep.input_len) ss << p << "|";
  ss << ";sweep.train_windows=" << sweep.train_windows
     << ";sweep.eval_intervals=" << sweep.eval_intervals;
  return ss.str();
}

ExperimentConfig load_experiment_config(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument("cannot parse experiment config " + path + ": " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (base / p).string();
  };

  reject_unknown(doc,
                 {"seed", "out_dir", "cqi_table_path", "channel", "split", "predictors",
                  "train", "sweep"},
                 "top level");

  ExperimentConfig cfg;
  cfg.seed = doc.value("seed", 1ull);
  cfg.out_dir = doc.value("out_dir", std::string("out"));
  if (doc.contains("out_dir")) cfg.out_dir = resolve(cfg.out_dir);

  if (doc.contains("cqi_table_path")) {
    cfg.cqi_table_path = resolve(doc.at("cqi_table_path").get<std::string>());
    if (!fs::exists(cfg.cqi_table_path))
      throw std::invalid_argument("cqi_table_path does not exist: " + cfg.cqi_table_path);
    cfg.cqi_table = load_cqi_table(cfg.cqi_table_path);
  } else {
    cfg.cqi_table = default_cqi_table();
  }

  if (doc.contains("channel")) {
    const json& ch = doc.at("channel");
    reject_unknown(ch,
                   {"doppler_hz", "n_slots", "slot_duration_s", "n_layers", "n_rb",
                    "avg_snr_db", "profile", "delay_spread_ns", "profile_path"},
                   "channel");
    cfg.channel.doppler_hz = ch.value("doppler_hz", 10.0);
    cfg.channel.n_slots = ch.value("n_slots", 60000ull);
    cfg.channel.slot_duration_s = ch.value("slot_duration_s", 1e-3);
    cfg.channel.n_layers = ch.value("n_layers", 4ull);
    cfg.channel.n_rb = ch.value("n_rb", 52ull);
    cfg.channel.avg_snr_db = ch.value("avg_snr_db", 12.5);
    const double ds = ch.value("delay_spread_ns", 300.0) * 1e-9;
    const std::string profile_name = ch.value("profile", std::string("tdl-a"));
    if (ch.contains("profile_path")) {
      const std::string profile_path = resolve(ch.at("profile_path").get<std::string>());
      if (!fs::exists(profile_path))
        throw std::invalid_argument("profile_path does not exist: " + profile_path);
      cfg.channel.profile = load_pdp_profile(profile_path, profile_name);
    } else {
      cfg.channel.profile = pdp_profile(profile_name, ds);
    }
  } else {
    cfg.channel.n_slots = 60000;
    cfg.channel.profile = pdp_profile("tdl-a");
  }
  cfg.channel.seed = cfg.seed;

  if (doc.contains("split")) {
    const json& sp = doc.at("split");
    reject_unknown(sp, {"train", "val", "test"}, "split");
    cfg.split = {sp.at("train").get<double>(), sp.at("val").get<double>(),
                 sp.at("test").get<double>()};
  }

  if (doc.contains("predictors")) {
    for (const json& p : doc.at("predictors")) {
      reject_unknown(p,
                     {"kind", "input_len", "hidden", "t_csi", "mode", "fdd_horizon",
                      "target"},
                     "predictor entry");
      PredictorSpec spec;
      spec.kind = predictor_kind_from_string(p.at("kind").get<std::string>());
      spec.input_len = p.value("input_len", 4ull);
      spec.hidden = p.value("hidden", 16ull);
      spec.t_csi = p.value("t_csi", 4ull);
      spec.mode = prediction_mode_from_string(p.value("mode", std::string("tdd_vector")));
      spec.fdd_horizon = p.value("fdd_horizon", 1ull);
      spec.target = target_strategy_from_string(p.value("target", std::string("best_cqi")));
      spec.validate();
      cfg.predictors.push_back(spec);
    }
  }
  if (cfg.predictors.empty()) {
    PredictorSpec spec;
    spec.kind = PredictorKind::gru;
    cfg.predictors.push_back(spec);
  }

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    reject_unknown(t,
                   {"epochs", "batch_size", "learning_rate", "shuffle_seed", "patience"},
                   "train");
    cfg.train.epochs = t.value("epochs", 200ull);
    cfg.train.batch_size = t.value("batch_size", 2048ull);
    cfg.train.learning_rate = t.value("learning_rate", 1e-3);
    cfg.train.shuffle_seed = t.value("shuffle_seed", cfg.seed);
    cfg.train.patience = t.value("patience", 0ull);
  } else {
    cfg.train.shuffle_seed = cfg.seed;
  }

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    reject_unknown(s,
                   {"doppler_hz", "t_csi", "fdd_horizons", "hidden", "input_len",
                    "train_windows", "eval_intervals"},
                   "sweep");
    if (s.contains("doppler_hz"))
      cfg.sweep.doppler_hz = s.at("doppler_hz").get<std::vector<double>>();
    if (s.contains("t_csi")) cfg.sweep.t_csi = s.at("t_csi").get<std::vector<std::size_t>>();
    if (s.contains("fdd_horizons"))
      cfg.sweep.fdd_horizons = s.at("fdd_horizons").get<std::vector<std::size_t>>();
    if (s.contains("hidden")) cfg.sweep.hidden = s.at("hidden").get<std::vector<std::size_t>>();
    if (s.contains("input_len"))
      cfg.sweep.input_len = s.at("input_len").get<std::vector<std::size_t>>();
    cfg.sweep.train_windows = s.value("train_windows", 12000ull);
    cfg.sweep.eval_intervals = s.value("eval_intervals", 300ull);
  }
  if (cfg.sweep.doppler_hz.empty() || cfg.sweep.t_csi.empty() ||
      cfg.sweep.fdd_horizons.empty() || cfg.sweep.hidden.empty() ||
      cfg.sweep.input_len.empty())
    throw std::invalid_argument("sweep axes must be non-empty");

  return cfg;
}

namespace {

ChannelConfig channel_for(const ExperimentConfig& cfg, double doppler_hz,
                          std::size_t n_slots, std::uint64_t salt) {
  ChannelConfig ch = cfg.channel;
  ch.doppler_hz = doppler_hz;
  ch.n_slots = n_slots;
  ch.seed = mix_seed(cfg.seed, salt);
  return ch;
}

// Training traces + an independent evaluation trace for one sweep point.
struct PointData {
  TraceSet train_traces;
  EffSinrTrace eval_trace;
  PredictionBatch eval_windows;  // over the whole evaluation trace
};

PointData point_data(const ExperimentConfig& cfg, double doppler_hz,
                     const PredictorSpec& spec, std::uint64_t salt, int track = -1) {
  const std::size_t total_windows = static_cast<std::size_t>(
      std::ceil(static_cast<double>(cfg.sweep.train_windows) / cfg.split[0]));
  const std::size_t train_slots = slots_for_windows(total_windows, spec.t_csi, spec.input_len);
  const std::size_t eval_slots =
      slots_for_windows(cfg.sweep.eval_intervals + spec.input_len, spec.t_csi, spec.input_len);

  PointData data;
  data.train_traces = build_traces(
      {channel_for(cfg, doppler_hz, train_slots, salt)}, cfg.cqi_table, cfg.split[0]);
  FadingChannel eval_channel(channel_for(cfg, doppler_hz, eval_slots, salt + 0x9E37));
  data.eval_trace = build_trace(eval_channel, cfg.cqi_table, cfg.split[0]);
  data.eval_windows = build_windows(standardized_track(data.eval_trace, track), spec);
  return data;
}

WienerBank wiener_bank_from_traces(const TraceSet& traces, const PredictorSpec& spec,
                                   int track) {
  const std::size_t max_lag = spec.t_csi * (spec.input_len - 1) + spec.t_csi - 1;
  std::vector<AutocorrEstimate> parts;
  for (const EffSinrTrace& trace : traces.traces) {
    const std::vector<double> series = standardized_track(trace, track);
    parts.push_back(estimate_autocorrelation(
        {series.data(), trace.train_slots}, max_lag));
  }
  return build_filter_bank(average_autocorrelation(parts), spec.input_len, spec.t_csi);
}

NeuralModel train_neural(const ExperimentConfig& cfg, const Dataset& ds,
                         const PredictorSpec& spec, std::uint64_t salt) {
  NeuralModel init = init_model(spec.kind, spec.input_len, spec.hidden, spec.output_len(),
                                mix_seed(cfg.seed, salt, 0xA11CE));
  TrainConfig tc = cfg.train;
  tc.shuffle_seed = mix_seed(cfg.seed, salt, 0x5EED);
  return train(init, ds.train, ds.val, tc).model;
}

struct SweepRow {
  std::size_t order = 0;
  std::string text;
};

std::string figure_csv(const ExperimentConfig& cfg, const std::string& header,
                       std::vector<SweepRow> rows) {
  std::sort(rows.begin(), rows.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.order < b.order; });
  std::string out = csv_comment(fnv1a_hash(cfg.fingerprint()), cfg.seed) + "\n";
  out += header + "\n";
  for (const SweepRow& row : rows) out += row.text;
  return out;
}

PredictorSpec spec_like(PredictorKind kind, std::size_t t_csi,
                        std::size_t input_len = 4, std::size_t hidden = 16) {
  PredictorSpec spec;
  spec.kind = kind;
  spec.input_len = input_len;
  spec.hidden = hidden;
  spec.t_csi = t_csi;
  spec.mode = PredictionMode::tdd_vector;
  spec.target = TargetStrategy::best_cqi;
  return spec;
}

// ---------------------------------------------------------------------------
// Figures

std::string sweep_complexity(const ExperimentConfig& cfg, std::size_t workers,
                             const std::string& out_path) {
  const std::size_t t_csi = cfg.sweep.t_csi.front();
  const double doppler = cfg.channel.doppler_hz;
  struct Point {
    PredictorKind kind;
    std::size_t hidden;
  };
  std::vector<Point> points;
  for (std::size_t d : cfg.sweep.hidden)
    for (PredictorKind kind :
         {PredictorKind::dnn, PredictorKind::gru, PredictorKind::lstm})
      points.push_back({kind, d});
  points.push_back({PredictorKind::wiener, 0});

  std::vector<SweepRow> rows(points.size());
  run_pool(workers, points.size(), [&](std::size_t i) {
    const Point& pt = points[i];
    PredictorSpec spec = spec_like(pt.kind, t_csi, 4, std::max<std::size_t>(pt.hidden, 1));
    const PointData data = point_data(cfg, doppler, spec, 0x100 + i);
    std::vector<double> mse_db;
    if (pt.kind == PredictorKind::wiener) {
      const WienerBank bank = wiener_bank_from_traces(data.train_traces, spec, -1);
      mse_db = evaluate_mse_db(bank, data.eval_windows);
    } else {
      const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
      const NeuralModel model = train_neural(cfg, ds, spec, 0x100 + i);
      mse_db = evaluate_mse_db(model, data.eval_windows);
    }
    spec.hidden = std::max<std::size_t>(pt.hidden, 1);
    std::ostringstream ss;
    ss << to_string(pt.kind) << "," << pt.hidden << "," << predictor_flops(spec) << ","
       << format_double(mean_linear_db(mse_db)) << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(out_path, figure_csv(cfg, "arch,hidden,flops,mse_db", rows));
  return out_path;
}

std::string sweep_input_len(const ExperimentConfig& cfg, std::size_t workers,
                            const std::string& out_path) {
  const std::size_t t_csi = cfg.sweep.t_csi.front();
  struct Point {
    PredictorKind kind;
    double doppler;
    std::size_t p;
  };
  std::vector<Point> points;
  for (PredictorKind kind : {PredictorKind::gru, PredictorKind::wiener})
    for (double doppler : cfg.sweep.doppler_hz)
      for (std::size_t p : cfg.sweep.input_len) points.push_back({kind, doppler, p});

  std::vector<SweepRow> rows(points.size());
  run_pool(workers, points.size(), [&](std::size_t i) {
    const Point& pt = points[i];
    PredictorSpec spec = spec_like(pt.kind, t_csi, pt.p);
    // Same channel seed for every input length of one (model, doppler) curve,
    // so the curve isolates the input-length effect.
    const std::uint64_t salt = 0x200 + 16 * static_cast<std::uint64_t>(pt.doppler) +
                               (pt.kind == PredictorKind::gru ? 1 : 0);
    const PointData data = point_data(cfg, pt.doppler, spec, salt);
    std::vector<double> mse_db;
    if (pt.kind == PredictorKind::wiener) {
      const WienerBank bank = wiener_bank_from_traces(data.train_traces, spec, -1);
      mse_db = evaluate_mse_db(bank, data.eval_windows);
    } else {
      const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
      const NeuralModel model = train_neural(cfg, ds, spec, salt + 7 * pt.p);
      mse_db = evaluate_mse_db(model, data.eval_windows);
    }
    std::ostringstream ss;
    ss << to_string(pt.kind) << "," << format_double(pt.doppler) << "," << pt.p << ","
       << format_double(mean_linear_db(mse_db)) << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(out_path, figure_csv(cfg, "model,doppler_hz,input_len,mse_db", rows));
  return out_path;
}

std::string sweep_fd_tcsi(const ExperimentConfig& cfg, std::size_t workers,
                          const std::string& out_path) {
  struct Point {
    PredictorKind kind;
    double doppler;
    std::size_t t_csi;
  };
  std::vector<Point> points;
  for (PredictorKind kind : {PredictorKind::gru, PredictorKind::wiener})
    for (double doppler : cfg.sweep.doppler_hz)
      for (std::size_t t : cfg.sweep.t_csi) points.push_back({kind, doppler, t});

  std::vector<SweepRow> rows(points.size());
  run_pool(workers, points.size(), [&](std::size_t i) {
    const Point& pt = points[i];
    PredictorSpec spec = spec_like(pt.kind, pt.t_csi);
    const std::uint64_t salt =
        0x300 + 64 * static_cast<std::uint64_t>(pt.doppler) + pt.t_csi;
    const PointData data = point_data(cfg, pt.doppler, spec, salt);
    std::vector<double> mse_db;
    if (pt.kind == PredictorKind::wiener) {
      const WienerBank bank = wiener_bank_from_traces(data.train_traces, spec, -1);
      mse_db = evaluate_mse_db(bank, data.eval_windows);
    } else {
      const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
      const NeuralModel model = train_neural(cfg, ds, spec, salt);
      mse_db = evaluate_mse_db(model, data.eval_windows);
    }
    const double product = pt.doppler * static_cast<double>(pt.t_csi) *
                           cfg.channel.slot_duration_s / 1e-3;
    std::ostringstream ss;
    ss << to_string(pt.kind) << "," << format_double(pt.doppler) << "," << pt.t_csi << ","
       << format_double(product) << "," << format_double(mean_linear_db(mse_db)) << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(out_path,
                    figure_csv(cfg, "model,doppler_hz,t_csi,fd_tcsi_product,mse_db", rows));
  return out_path;
}

// Windows whose inputs are a densified reconstruction of the report samples
// covering the same time span as the sparse window; targets stay true values.
PredictionBatch interpolated_windows(const std::vector<double>& series, std::size_t t_csi,
                                     std::size_t p, InterpMethod method,
                                     const std::function<double(std::size_t)>& autocorr) {
  const std::size_t dense_len = (p - 1) * t_csi + 1;
  const std::size_t n = series.size();
  PredictionBatch batch;
  batch.input_len = dense_len;
  batch.t_csi = t_csi;

  // Sparse samples the receiver actually observes.
  const std::size_t n_sparse = (n - 1) / t_csi + 1;
  std::vector<double> sparse(n_sparse);
  for (std::size_t j = 0; j < n_sparse; ++j) sparse[j] = series[j * t_csi];
  const std::vector<double> dense = interpolate(sparse, t_csi, method, autocorr);

  const std::size_t k_min = p - 1;
  const std::size_t k_max = (n - t_csi) / t_csi;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const std::size_t n0 = t_csi * k;
    batch.slot_index.push_back(n0);
    for (std::size_t j = 0; j < dense_len; ++j) batch.inputs.push_back(dense[n0 - j]);
    for (std::size_t tau = 1; tau < t_csi; ++tau)
      batch.targets_tdd.push_back(series[n0 + tau]);
  }
  return batch;
}

std::string sweep_interpolation(const ExperimentConfig& cfg, std::size_t workers,
                                const std::string& out_path) {
  const double doppler = cfg.channel.doppler_hz;
  struct Point {
    std::string processing;
    std::size_t t_csi;
  };
  std::vector<Point> points;
  for (std::size_t t : cfg.sweep.t_csi)
    for (const char* proc : {"decimated", "linear", "lmmse"})
      points.push_back({proc, t});

  std::vector<SweepRow> rows(points.size());
  run_pool(workers, points.size(), [&](std::size_t i) {
    const Point& pt = points[i];
    PredictorSpec spec = spec_like(PredictorKind::gru, pt.t_csi);
    const std::uint64_t salt = 0x400 + pt.t_csi;
    const PointData data = point_data(cfg, doppler, spec, salt);

    std::vector<double> mse_db;
    if (pt.processing == "decimated") {
      const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
      const NeuralModel model = train_neural(cfg, ds, spec, salt);
      mse_db = evaluate_mse_db(model, data.eval_windows);
    } else {
      const InterpMethod method =
          pt.processing == "linear" ? InterpMethod::linear : InterpMethod::lmmse;
      const EffSinrTrace& train_trace = data.train_traces.traces.front();
      const std::vector<double> train_series = standardized_track(train_trace, -1);
      const std::size_t max_lag = pt.t_csi;
      const AutocorrEstimate ac = estimate_autocorrelation(
          {train_series.data(), train_trace.train_slots}, max_lag);
      auto autocorr = [&ac](std::size_t lag) { return ac.at(lag); };

      PredictionBatch all =
          interpolated_windows(train_series, pt.t_csi, spec.input_len, method, autocorr);
      // Chronological split matching the dataset fractions.
      const std::size_t n = all.n_windows();
      const auto n_train =
          static_cast<std::size_t>(std::llround(cfg.split[0] * static_cast<double>(n)));
      const auto n_val =
          static_cast<std::size_t>(std::llround(cfg.split[1] * static_cast<double>(n)));
      PredictionBatch train_b, val_b;
      train_b.input_len = val_b.input_len = all.input_len;
      train_b.t_csi = val_b.t_csi = all.t_csi;
      auto copy_rows = [&all](PredictionBatch& dst, std::size_t first, std::size_t last) {
        for (std::size_t r = first; r < last && r < all.n_windows(); ++r) {
          dst.slot_index.push_back(all.slot_index[r]);
          for (double v : all.input_row(r)) dst.inputs.push_back(v);
          for (double v : all.tdd_target_row(r)) dst.targets_tdd.push_back(v);
        }
      };
      copy_rows(train_b, 0, n_train);
      copy_rows(val_b, n_train, n_train + n_val);

      NeuralModel init = init_model(PredictorKind::gru, all.input_len, spec.hidden,
                                    spec.t_csi - 1, mix_seed(cfg.seed, salt, 0xA11CE));
      TrainConfig tc = cfg.train;
      tc.shuffle_seed = mix_seed(cfg.seed, salt, 0x5EED);
      const NeuralModel model = train(init, train_b, val_b, tc).model;

      const std::vector<double> eval_series = standardized_track(data.eval_trace, -1);
      const PredictionBatch eval_b =
          interpolated_windows(eval_series, pt.t_csi, spec.input_len, method, autocorr);
      mse_db = evaluate_mse_db(model, eval_b);
    }
    const double product = doppler * static_cast<double>(pt.t_csi);
    std::ostringstream ss;
    ss << pt.processing << "," << pt.t_csi << "," << format_double(product) << ","
       << format_double(mean_linear_db(mse_db)) << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(out_path,
                    figure_csv(cfg, "processing,t_csi,fd_tcsi_product,mse_db", rows));
  return out_path;
}

std::string sweep_target_strategy(const ExperimentConfig& cfg, std::size_t workers,
                                  const std::string& out_path) {
  const std::size_t t_csi = cfg.sweep.t_csi.front();
  const double doppler = cfg.channel.doppler_hz;
  struct Point {
    PredictorKind kind;
    TargetStrategy target;
  };
  const std::vector<Point> points = {{PredictorKind::wiener, TargetStrategy::best_cqi},
                                     {PredictorKind::wiener, TargetStrategy::by_cqi},
                                     {PredictorKind::gru, TargetStrategy::best_cqi},
                                     {PredictorKind::gru, TargetStrategy::by_cqi}};

  std::vector<SweepRow> rows(points.size());
  run_pool(workers, points.size(), [&](std::size_t i) {
    const Point& pt = points[i];
    PredictorSpec spec = spec_like(pt.kind, t_csi);
    spec.target = pt.target;
    const std::uint64_t salt = 0x500 + i;
    const PointData data = point_data(cfg, doppler, spec, 0x500);  // shared channel

    double mse_db = 0.0;
    if (pt.target == TargetStrategy::best_cqi) {
      if (pt.kind == PredictorKind::wiener) {
        const WienerBank bank = wiener_bank_from_traces(data.train_traces, spec, -1);
        mse_db = mean_linear_db(evaluate_mse_db(bank, data.eval_windows));
      } else {
        const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
        const NeuralModel model = train_neural(cfg, ds, spec, salt);
        mse_db = mean_linear_db(evaluate_mse_db(model, data.eval_windows));
      }
    } else {
      // Mean linear MSE over the 15 per-CQI tracks.
      double acc = 0.0;
      for (int track = 0; track < kNumCqi; ++track) {
        const PredictionBatch eval_b =
            build_windows(standardized_track(data.eval_trace, track), spec);
        std::vector<double> per_tau;
        if (pt.kind == PredictorKind::wiener) {
          const WienerBank bank = wiener_bank_from_traces(data.train_traces, spec, track);
          per_tau = evaluate_mse_db(bank, eval_b);
        } else {
          const Dataset ds = make_dataset(data.train_traces, spec, track, cfg.split);
          const NeuralModel model =
              train_neural(cfg, ds, spec, salt + 31 * static_cast<std::uint64_t>(track));
          per_tau = evaluate_mse_db(model, eval_b);
        }
        acc += std::pow(10.0, mean_linear_db(per_tau) / 10.0);
      }
      mse_db = 10.0 * std::log10(acc / kNumCqi);
    }
    std::ostringstream ss;
    ss << to_string(pt.kind) << "," << to_string(pt.target) << "," << predictor_flops(spec)
       << "," << format_double(mse_db) << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(out_path, figure_csv(cfg, "model,strategy,flops,mse_db", rows));
  return out_path;
}

std::string sweep_tdd_throughput(const ExperimentConfig& cfg, std::size_t workers,
                                 const std::string& out_path, const std::string& bundles_dir) {
  struct Point {
    double doppler;
    std::size_t t_csi;
  };
  std::vector<Point> points;
  for (double doppler : cfg.sweep.doppler_hz)
    for (std::size_t t : cfg.sweep.t_csi) points.push_back({doppler, t});

  std::vector<SweepRow> rows(points.size());
  run_pool(workers, points.size(), [&](std::size_t i) {
    const Point& pt = points[i];
    PredictorSpec spec = spec_like(PredictorKind::gru, pt.t_csi);
    const std::uint64_t salt = 0x600 + 64 * static_cast<std::uint64_t>(pt.doppler) + pt.t_csi;
    const PointData data = point_data(cfg, pt.doppler, spec, salt);

    const WienerBank bank = wiener_bank_from_traces(data.train_traces, spec, -1);
    const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
    const NeuralModel gru = train_neural(cfg, ds, spec, salt);

    RunOptions opt;
    opt.t_csi = pt.t_csi;
    opt.min_intervals = std::min<std::size_t>(cfg.sweep.eval_intervals, 100);

    std::vector<std::pair<std::string, LinkPredictor>> predictors;
    predictors.emplace_back("ideal", ideal_link(spec.input_len));
    predictors.emplace_back("zoh", zoh_link(spec.input_len, pt.t_csi - 1));
    predictors.emplace_back("wiener", wiener_link(bank));
    predictors.emplace_back("gru", neural_link(gru));

    double zoh_tp = 0.0;
    std::vector<std::pair<std::string, RunReport>> reports;
    for (auto& [name, link] : predictors) {
      RunReport report = run_tdd(data.eval_trace, cfg.cqi_table, link, opt);
      if (name == "zoh") zoh_tp = report.unconditioned_tp;
      reports.emplace_back(name, std::move(report));
    }

    std::ostringstream point_dir;
    point_dir << bundles_dir << "/fd" << pt.doppler << "_tcsi" << pt.t_csi;
    std::ostringstream ss;
    for (auto& [name, report] : reports) {
      write_run_report(report, point_dir.str() + "/" + name, cfg.seed);
      const double gain = zoh_tp > 0.0
                              ? 100.0 * (report.unconditioned_tp - zoh_tp) / zoh_tp
                              : 0.0;
      ss << format_double(pt.doppler) << "," << pt.t_csi << "," << name << ","
         << report.flops << "," << format_double(report.unconditioned_tp) << ","
         << format_double(gain) << "\n";
    }
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(
      out_path,
      figure_csv(cfg, "doppler_hz,t_csi,predictor,flops,unconditioned_tp_mbps,gain_vs_zoh_pct",
                 rows));
  return out_path;
}

std::string sweep_fdd_horizon(const ExperimentConfig& cfg, std::size_t workers,
                              const std::string& out_path, const std::string& bundles_dir) {
  const std::size_t t_csi = *std::max_element(cfg.sweep.t_csi.begin(), cfg.sweep.t_csi.end());
  const double doppler = cfg.channel.doppler_hz;
  std::vector<std::size_t> horizons;
  for (std::size_t h : cfg.sweep.fdd_horizons)
    if (h >= 1 && h <= t_csi - 1) horizons.push_back(h);
  if (horizons.empty())
    throw std::invalid_argument("no fdd_horizons lie inside [1, t_csi-1]");

  PredictorSpec base = spec_like(PredictorKind::gru, t_csi);
  const PointData data = point_data(cfg, doppler, base, 0x700);

  std::vector<SweepRow> rows(horizons.size());
  run_pool(workers, horizons.size(), [&](std::size_t i) {
    PredictorSpec spec = base;
    spec.mode = PredictionMode::fdd_scalar;
    spec.fdd_horizon = horizons[i];
    const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
    const NeuralModel model = train_neural(cfg, ds, spec, 0x700 + 3 * horizons[i]);

    RunOptions opt;
    opt.t_csi = t_csi;
    opt.min_intervals = std::min<std::size_t>(cfg.sweep.eval_intervals, 100);
    LinkPredictor link = neural_link(model);
    const RunReport report = run_fdd(data.eval_trace, cfg.cqi_table, link, horizons[i], opt);
    write_run_report(report, bundles_dir + "/horizon_" + std::to_string(horizons[i]),
                     cfg.seed);

    double mean = 0.0;
    for (double tp : report.conditioned_tp) mean += tp;
    mean /= static_cast<double>(report.conditioned_tp.size());
    double var = 0.0;
    for (double tp : report.conditioned_tp) var += (tp - mean) * (tp - mean);
    var /= static_cast<double>(report.conditioned_tp.size());

    auto prob = [&report](int err) {
      const auto it = report.cqi_error_hist.find(err);
      return it == report.cqi_error_hist.end() ? 0.0 : it->second;
    };
    std::ostringstream ss;
    ss << horizons[i] << "," << format_double(report.unconditioned_tp) << ","
       << format_double(std::sqrt(var)) << "," << format_double(prob(-1)) << ","
       << format_double(prob(0)) << "," << format_double(prob(1)) << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(
      out_path,
      figure_csv(cfg,
                 "fdd_horizon,unconditioned_tp_mbps,conditioned_tp_std,p_err_minus1,p_err_0,"
                 "p_err_plus1",
                 rows));
  return out_path;
}

std::string sweep_doppler_generalization(const ExperimentConfig& cfg, std::size_t workers,
                                         const std::string& out_path) {
  const std::size_t t_csi = cfg.sweep.t_csi.front();
  PredictorSpec spec = spec_like(PredictorKind::gru, t_csi);

  // Mixed-Doppler training pool (one trace per mixture point).
  const std::size_t total_windows = static_cast<std::size_t>(
      std::ceil(static_cast<double>(cfg.sweep.train_windows) / cfg.split[0]));
  const std::size_t per_cfg_windows =
      std::max<std::size_t>(total_windows / kMixedDopplerHz.size(), spec.input_len + 8);
  std::vector<ChannelConfig> mixed_cfgs;
  for (std::size_t j = 0; j < kMixedDopplerHz.size(); ++j)
    mixed_cfgs.push_back(channel_for(
        cfg, kMixedDopplerHz[j],
        slots_for_windows(per_cfg_windows, spec.t_csi, spec.input_len), 0x800 + j));
  const TraceSet mixed_traces = build_traces(mixed_cfgs, cfg.cqi_table, cfg.split[0]);
  const Dataset mixed_ds = make_dataset(mixed_traces, spec, -1, cfg.split);
  const NeuralModel mixed_gru = train_neural(cfg, mixed_ds, spec, 0x8F0);
  const WienerBank mixed_bank = wiener_bank_from_traces(mixed_traces, spec, -1);

  std::vector<SweepRow> rows(cfg.sweep.doppler_hz.size());
  run_pool(workers, cfg.sweep.doppler_hz.size(), [&](std::size_t i) {
    const double doppler = cfg.sweep.doppler_hz[i];
    const std::uint64_t salt = 0x900 + 8 * static_cast<std::uint64_t>(doppler);
    const PointData data = point_data(cfg, doppler, spec, salt);

    const Dataset ds = make_dataset(data.train_traces, spec, -1, cfg.split);
    const NeuralModel specific_gru = train_neural(cfg, ds, spec, salt);
    const WienerBank specific_bank = wiener_bank_from_traces(data.train_traces, spec, -1);

    std::ostringstream ss;
    ss << "gru,specific," << format_double(doppler) << ","
       << format_double(mean_linear_db(evaluate_mse_db(specific_gru, data.eval_windows)))
       << "\n";
    ss << "gru,generalized," << format_double(doppler) << ","
       << format_double(mean_linear_db(evaluate_mse_db(mixed_gru, data.eval_windows)))
       << "\n";
    ss << "wiener,specific," << format_double(doppler) << ","
       << format_double(mean_linear_db(evaluate_mse_db(specific_bank, data.eval_windows)))
       << "\n";
    ss << "wiener,generalized," << format_double(doppler) << ","
       << format_double(mean_linear_db(evaluate_mse_db(mixed_bank, data.eval_windows)))
       << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(out_path, figure_csv(cfg, "model,strategy,doppler_hz,mse_db", rows));
  return out_path;
}

std::string sweep_profile_generalization(const ExperimentConfig& cfg, std::size_t workers,
                                         const std::string& out_path) {
  const std::size_t t_csi = cfg.sweep.t_csi.front();
  PredictorSpec spec = spec_like(PredictorKind::gru, t_csi);
  const std::vector<std::string> profiles = pdp_profile_names();

  struct Point {
    double doppler;
    std::string profile;
  };
  std::vector<Point> points;
  for (double doppler : cfg.sweep.doppler_hz)
    for (const std::string& profile : profiles) points.push_back({doppler, profile});

  std::vector<SweepRow> rows(points.size());
  run_pool(workers, points.size(), [&](std::size_t i) {
    const Point& pt = points[i];
    const std::uint64_t salt = 0xA00 + 8 * static_cast<std::uint64_t>(pt.doppler);
    // Train on tdl-a at this Doppler (shared across target profiles).
    const PointData tdla = point_data(cfg, pt.doppler, spec, salt);
    const Dataset ds = make_dataset(tdla.train_traces, spec, -1, cfg.split);
    const NeuralModel gru = train_neural(cfg, ds, spec, salt);
    const WienerBank bank = wiener_bank_from_traces(tdla.train_traces, spec, -1);

    // Evaluate on the target profile.
    ChannelConfig eval_cfg = channel_for(
        cfg, pt.doppler,
        slots_for_windows(cfg.sweep.eval_intervals + spec.input_len, spec.t_csi,
                          spec.input_len),
        salt + 0x50 + std::hash<std::string>{}(pt.profile) % 997);
    eval_cfg.profile = pdp_profile(pt.profile, cfg.channel.profile.delay_spread_s);
    FadingChannel eval_channel(eval_cfg);
    const EffSinrTrace eval_trace = build_trace(eval_channel, cfg.cqi_table, cfg.split[0]);
    const PredictionBatch eval_b = build_windows(standardized_track(eval_trace, -1), spec);

    std::ostringstream ss;
    ss << "gru," << pt.profile << "," << format_double(pt.doppler) << ","
       << format_double(mean_linear_db(evaluate_mse_db(gru, eval_b))) << "\n";
    ss << "wiener," << pt.profile << "," << format_double(pt.doppler) << ","
       << format_double(mean_linear_db(evaluate_mse_db(bank, eval_b))) << "\n";
    rows[i] = {i, ss.str()};
  });
  write_file_atomic(out_path, figure_csv(cfg, "model,profile,doppler_hz,mse_db", rows));
  return out_path;
}

}  // namespace

std::vector<std::string> sweep_figure_keys() {
  return {"complexity",     "input_len",      "fd_tcsi",
          "interpolation",  "target_strategy", "tdd_throughput",
          "fdd_horizon",    "doppler_generalization", "profile_generalization"};
}

void cmd_generate(const ExperimentConfig& cfg) {
  const fs::path dir = fs::path(cfg.out_dir) / "dataset";
  fs::create_directories(dir);
  const std::uint64_t hash = fnv1a_hash(cfg.fingerprint());

  json manifest;
  manifest["config_hash"] = hash;
  manifest["seed"] = cfg.seed;
  manifest["split"] = {{"train", cfg.split[0]}, {"val", cfg.split[1]}, {"test", cfg.split[2]}};
  manifest["datasets"] = json::array();

  for (std::size_t idx = 0; idx < cfg.predictors.size(); ++idx) {
    const PredictorSpec& spec = cfg.predictors[idx];
    const std::vector<ChannelConfig> configs = {cfg.channel};
    const TraceSet traces = build_traces(configs, cfg.cqi_table, cfg.split[0]);

    json entry;
    entry["kind"] = to_string(spec.kind);
    entry["t_csi"] = spec.t_csi;
    entry["input_len"] = spec.input_len;
    entry["mode"] = to_string(spec.mode);
    entry["target"] = to_string(spec.target);
    entry["channel_seed"] = cfg.channel.seed;
    entry["files"] = json::array();

    const std::string prefix = std::to_string(idx) + "_" + to_string(spec.kind);
    const int first_track = spec.target == TargetStrategy::by_cqi ? 0 : -1;
    const int last_track = spec.target == TargetStrategy::by_cqi ? kNumCqi - 1 : -1;
    for (int track = first_track; track <= last_track; ++track) {
      const Dataset ds = make_dataset(traces, spec, track, cfg.split);
      const std::string track_tag =
          track < 0 ? std::string() : "_track_" + std::to_string(track);
      for (const auto& [name, batch] :
           {std::pair<std::string, const PredictionBatch*>{"train", &ds.train},
            {"val", &ds.val},
            {"test", &ds.test}}) {
        const std::string file = prefix + track_tag + "_" + name + ".csv";
        write_batch_csv(*batch, (dir / file).string(), hash, cfg.seed);
        entry["files"].push_back(file);
        entry["split_sizes"][name] = batch->n_windows();
      }
    }
    manifest["datasets"].push_back(entry);
  }
  write_file_atomic((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

void cmd_train(const ExperimentConfig& cfg) {
  const fs::path dir = fs::path(cfg.out_dir) / "models";
  fs::create_directories(dir);
  const std::uint64_t hash = fnv1a_hash(cfg.fingerprint());

  for (std::size_t idx = 0; idx < cfg.predictors.size(); ++idx) {
    const PredictorSpec& spec = cfg.predictors[idx];
    if (!spec.is_neural()) continue;
    const TraceSet traces = build_traces({cfg.channel}, cfg.cqi_table, cfg.split[0]);
    const std::string prefix = std::to_string(idx) + "_" + to_string(spec.kind);

    const int first_track = spec.target == TargetStrategy::by_cqi ? 0 : -1;
    const int last_track = spec.target == TargetStrategy::by_cqi ? kNumCqi - 1 : -1;
    for (int track = first_track; track <= last_track; ++track) {
      const Dataset ds = make_dataset(traces, spec, track, cfg.split);
      NeuralModel init =
          init_model(spec.kind, spec.input_len, spec.hidden, spec.output_len(),
                     mix_seed(cfg.seed, idx, static_cast<std::uint64_t>(track + 1)));
      TrainConfig tc = cfg.train;
      tc.shuffle_seed = mix_seed(cfg.seed, idx, 0x5EED + static_cast<std::uint64_t>(track + 1));
      const TrainResult result = train(init, ds.train, ds.val, tc);

      const std::string track_tag =
          track < 0 ? std::string() : "_track_" + std::to_string(track);
      save_checkpoint(result.model, (dir / (prefix + track_tag + ".ckpt")).string());
      write_loss_history_csv(result, (dir / (prefix + track_tag + "_loss.csv")).string(),
                             hash, cfg.seed);
    }
  }
}

std::string cmd_sweep(const ExperimentConfig& cfg, const std::string& figure,
                      std::size_t workers) {
  const fs::path dir = fs::path(cfg.out_dir) / "sweeps";
  fs::create_directories(dir);
  const std::string out_path = (dir / (figure + ".csv")).string();
  const std::string bundles = (dir / figure).string();

  if (figure == "complexity") return sweep_complexity(cfg, workers, out_path);
  if (figure == "input_len") return sweep_input_len(cfg, workers, out_path);
  if (figure == "fd_tcsi") return sweep_fd_tcsi(cfg, workers, out_path);
  if (figure == "interpolation") return sweep_interpolation(cfg, workers, out_path);
  if (figure == "target_strategy") return sweep_target_strategy(cfg, workers, out_path);
  if (figure == "tdd_throughput") return sweep_tdd_throughput(cfg, workers, out_path, bundles);
  if (figure == "fdd_horizon") return sweep_fdd_horizon(cfg, workers, out_path, bundles);
  if (figure == "doppler_generalization")
    return sweep_doppler_generalization(cfg, workers, out_path);
  if (figure == "profile_generalization")
    return sweep_profile_generalization(cfg, workers, out_path);

  std::string keys;
  for (const std::string& k : sweep_figure_keys()) keys += (keys.empty() ? "" : ", ") + k;
  throw std::invalid_argument("unknown figure '" + figure + "' (valid: " + keys + ")");
}

}  // namespace csipred
