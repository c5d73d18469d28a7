#pragma once

#include <atomic>
#include <complex>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "omnifield/datagen.hpp"
#include "omnifield/model.hpp"
#include "omnifield/training.hpp"

namespace omnifield {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Per-modality RMSE in physical units: normalization is inverted before the
/// error is taken. Modalities with an empty target set are omitted.
template <class Scalar>
std::map<std::string, double> rmse_per_modality(const std::vector<VecX<Scalar>>& preds,
                                                const std::vector<VecX<Scalar>>& targets,
                                                const std::vector<ZScoreStats<Scalar>>& stats,
                                                const std::vector<std::string>& names) {
  if (preds.size() != targets.size() || preds.size() != names.size())
    throw Error("value", "rmse: misaligned inputs");
  std::map<std::string, double> out;
  for (std::size_t m = 0; m < preds.size(); ++m) {
    if (targets[m].size() == 0) continue;
    if (preds[m].size() != targets[m].size())
      throw Error("shape", "rmse: prediction/target length mismatch for " + names[m]);
    double sq = 0;
    for (Index i = 0; i < targets[m].size(); ++i) {
      const double p = double(preds[m](i)) * double(stats[m].std) + double(stats[m].mean);
      const double t = double(targets[m](i)) * double(stats[m].std) + double(stats[m].mean);
      sq += (p - t) * (p - t);
    }
    out[names[m]] = std::sqrt(sq / double(targets[m].size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fusion strategies over the dataset
// ---------------------------------------------------------------------------

enum class Strategy { co_location, interpolation, mid_fusion, icmr };

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "co-location" || s == "co_location") return Strategy::co_location;
  if (s == "interpolation") return Strategy::interpolation;
  if (s == "mid-fusion" || s == "mid_fusion") return Strategy::mid_fusion;
  if (s == "icmr") return Strategy::icmr;
  throw Error("config", "unknown strategy: " + s);
}

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::co_location: return "co-location";
    case Strategy::interpolation: return "interpolation";
    case Strategy::mid_fusion: return "mid-fusion";
    case Strategy::icmr: return "icmr";
  }
  return "?";
}

/// Inverse-distance-weighted estimate from (coord, value) sensor pairs:
/// power-2 weights over the k nearest sensors, exact at distance zero.
template <class Scalar>
Scalar idw_value(const std::vector<Scalar>& coords, const std::vector<Scalar>& values,
                 Scalar query, Scalar power = Scalar(2), int k = 4) {
  if (coords.empty() || coords.size() != values.size())
    throw Error("value", "idw: empty or misaligned sensor set");
  std::vector<std::pair<Scalar, std::size_t>> dist;
  dist.reserve(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i)
    dist.emplace_back(std::abs(coords[i] - query), i);
  std::sort(dist.begin(), dist.end());
  const int use = std::min<int>(k, int(dist.size()));
  if (dist[0].first == Scalar(0)) return values[dist[0].second];
  Scalar wsum = 0, acc = 0;
  for (int i = 0; i < use; ++i) {
    const Scalar w = Scalar(1) / std::pow(dist[i].first, power);
    wsum += w;
    acc += w * values[dist[i].second];
  }
  return acc / wsum;
}

/// Data-side realization of the fusion strategies. co_location restricts
/// every modality to the shared sensors; interpolation imputes each modality
/// onto the union of sensor locations with IDW (contexts only; targets stay
/// truthful). mid_fusion and icmr pass the data through untouched.
template <class Scalar>
FieldDataset<Scalar> apply_strategy(const FieldDataset<Scalar>& ds, Strategy strategy,
                                    Scalar idw_power = Scalar(2), int idw_k = 4) {
  FieldDataset<Scalar> out = ds;
  if (strategy == Strategy::mid_fusion || strategy == Strategy::icmr) return out;

  if (strategy == Strategy::co_location) {
    const auto inter = ds.masks.intersection();
    if (inter.empty())
      throw Error("infeasible", "co-location: the sensor intersection is empty");
    std::vector<std::uint32_t> bits(ds.masks.catalog_size, 0);
    const std::uint32_t all = (1u << ds.masks.n_modalities) - 1u;
    for (int i : inter) bits[i] = all;
    out.masks = SensorMaskSet::from_incidence(std::move(bits), ds.masks.n_modalities);
    return out;
  }

  // interpolation: every modality becomes defined on the union.
  const auto uni = ds.masks.union_locations();
  if (uni.empty()) throw Error("infeasible", "interpolation: no sensors at all");
  out.context_fields.clear();
  for (int m = 0; m < ds.n_modalities(); ++m) {
    MatX<Scalar> imputed = ds.fields[m];
    const auto& own = ds.masks.sensors[m];
    std::vector<Scalar> coords(own.size());
    for (std::size_t i = 0; i < own.size(); ++i) coords[i] = ds.x_coords(own[i]);
    std::vector<char> is_own(ds.x_points(), 0);
    for (int s : own) is_own[s] = 1;
    for (int t = 0; t < ds.t_points(); ++t) {
      std::vector<Scalar> values(own.size());
      for (std::size_t i = 0; i < own.size(); ++i) values[i] = ds.fields[m](own[i], t);
      for (int loc : uni) {
        if (is_own[loc]) continue;
        imputed(loc, t) = idw_value<Scalar>(coords, values, ds.x_coords(loc), idw_power, idw_k);
      }
    }
    out.context_fields.push_back(std::move(imputed));
  }
  std::vector<std::uint32_t> bits(ds.masks.catalog_size, 0);
  const std::uint32_t all = (1u << ds.masks.n_modalities) - 1u;
  for (int i : uni) bits[i] = all;
  out.masks = SensorMaskSet::from_incidence(std::move(bits), ds.masks.n_modalities);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation protocols
// ---------------------------------------------------------------------------

enum class QuerySplit { full_grid, union_sensors, intersection };

inline QuerySplit split_from_string(const std::string& s) {
  if (s == "full" || s == "full_grid") return QuerySplit::full_grid;
  if (s == "union") return QuerySplit::union_sensors;
  if (s == "intersection") return QuerySplit::intersection;
  throw Error("config", "unknown query split: " + s);
}

template <class Scalar>
std::vector<int> split_locations(const FieldDataset<Scalar>& ds, QuerySplit split) {
  switch (split) {
    case QuerySplit::full_grid: {
      std::vector<int> idx(ds.x_points());
      for (int i = 0; i < ds.x_points(); ++i) idx[i] = i;
      return idx;
    }
    case QuerySplit::union_sensors:
      return ds.masks.union_locations();
    case QuerySplit::intersection: {
      auto inter = ds.masks.intersection();
      if (inter.empty()) throw Error("infeasible", "evaluation: empty sensor intersection");
      return inter;
    }
  }
  throw Error("value", "unreachable split");
}

/// Forecast RMSE (physical units) at lead `dt` over evenly spaced validation
/// windows, querying the given grid locations for every modality.
template <class Scalar>
std::map<std::string, double> forecast_rmse(const OmniFieldModel<Scalar>& model,
                                            const FieldDataset<Scalar>& ds,
                                            const std::vector<int>& input_set,
                                            const std::vector<int>& query_locs, int dt,
                                            int max_windows) {
  const int M = ds.n_modalities();
  const int n_val = ds.n_windows - ds.train_windows;
  if (n_val < 1) throw Error("value", "forecast_rmse: no validation windows");
  const int take = std::min(max_windows, n_val);
  std::vector<double> sq(M, 0.0);
  std::vector<std::int64_t> count(M, 0);
  for (int i = 0; i < take; ++i) {
    const int w = ds.train_windows + int(std::int64_t(i) * n_val / take);
    if (ds.t_in_index(w) + dt >= ds.t_points()) continue;
    auto ctx = context_for_window(ds, w, input_set);
    QuerySet<Scalar> q;
    q.locations.assign(M, ds.normalized_coords(query_locs));
    q.supervised.assign(M, 1);
    q.dt = Scalar(dt);
    q.dt_norm = Scalar(dt) / Scalar(std::max(1, ds.horizon_steps));
    ag::Tape<Scalar> tape;
    auto b = model.bind(tape);
    auto preds = model.forward(b, ctx, q);
    for (int m = 0; m < M; ++m) {
      const VecX<Scalar> truth = ds.values_at(m, query_locs, ds.t_in_index(w) + dt);
      for (Index r = 0; r < truth.size(); ++r) {
        const double p = ds.denorm_value(m, preds[m].value(r, 0));
        const double t = ds.denorm_value(m, truth(r));
        sq[m] += (p - t) * (p - t);
        ++count[m];
      }
    }
  }
  std::map<std::string, double> out;
  for (int m = 0; m < M; ++m)
    out[ds.modalities[m]] = count[m] ? std::sqrt(sq[m] / double(count[m])) : 0.0;
  return out;
}

/// Task-specific evaluation used by the eval command. Reconstruction queries
/// the provided sensor locations at dt=0; interpolation queries unseen
/// locations at dt=0; forecasting queries the split at the maximum lead;
/// cross-modal drops each modality in turn and predicts it from the rest.
template <class Scalar>
std::map<std::string, double> evaluate_task(const OmniFieldModel<Scalar>& model,
                                            const FieldDataset<Scalar>& ds,
                                            const std::vector<int>& input_set,
                                            const std::string& task, QuerySplit split,
                                            int max_windows) {
  const int M = ds.n_modalities();
  const int n_val = ds.n_windows - ds.train_windows;
  if (n_val < 1) throw Error("value", "evaluate: no validation windows");
  const int take = std::min(max_windows, n_val);

  if (task == "forecasting")
    return forecast_rmse(model, ds, input_set, split_locations(ds, split),
                         std::max(1, ds.horizon_steps), max_windows);

  std::vector<double> sq(M, 0.0);
  std::vector<std::int64_t> count(M, 0);
  auto accumulate = [&](const ContextSet<Scalar>& ctx, const QuerySet<Scalar>& q,
                        const std::vector<std::vector<int>>& idx_per_m, int t_idx) {
    ag::Tape<Scalar> tape;
    auto b = model.bind(tape);
    auto preds = model.forward(b, ctx, q);
    for (int m = 0; m < M; ++m) {
      if (idx_per_m[m].empty()) continue;
      const VecX<Scalar> truth = ds.values_at(m, idx_per_m[m], t_idx);
      for (Index r = 0; r < truth.size(); ++r) {
        const double p = ds.denorm_value(m, preds[m].value(r, 0));
        const double t = ds.denorm_value(m, truth(r));
        sq[m] += (p - t) * (p - t);
        ++count[m];
      }
    }
  };

  for (int i = 0; i < take; ++i) {
    const int w = ds.train_windows + int(std::int64_t(i) * n_val / take);
    const int t_in = ds.t_in_index(w);
    if (task == "reconstruction" || task == "interpolation") {
      auto ctx = context_for_window(ds, w, input_set);
      QuerySet<Scalar> q;
      q.locations.resize(M);
      q.supervised.assign(M, 0);
      q.dt = 0;
      q.dt_norm = 0;
      std::vector<std::vector<int>> idx_per_m(M);
      for (int m : input_set) {
        if (task == "reconstruction") {
          idx_per_m[m] = ds.masks.sensors[m];
        } else {
          std::vector<char> is_sensor(ds.x_points(), 0);
          for (int s : ds.masks.sensors[m]) is_sensor[s] = 1;
          for (int loc = 0; loc < ds.x_points(); ++loc)
            if (!is_sensor[loc]) idx_per_m[m].push_back(loc);
        }
        if (idx_per_m[m].empty()) continue;
        q.locations[m] = ds.normalized_coords(idx_per_m[m]);
        q.supervised[m] = 1;
      }
      accumulate(ctx, q, idx_per_m, t_in);
    } else if (task == "cross-modal" || task == "crossmodal") {
      if (input_set.size() < 2)
        throw Error("infeasible", "cross-modal evaluation needs >= 2 input modalities");
      for (int drop : input_set) {
        std::vector<int> rest;
        for (int m : input_set)
          if (m != drop) rest.push_back(m);
        auto ctx = context_for_window(ds, w, rest);
        QuerySet<Scalar> q;
        q.locations.resize(M);
        q.supervised.assign(M, 0);
        q.dt = 0;
        q.dt_norm = 0;
        std::vector<std::vector<int>> idx_per_m(M);
        idx_per_m[drop] = split_locations(ds, split);
        q.locations[drop] = ds.normalized_coords(idx_per_m[drop]);
        q.supervised[drop] = 1;
        accumulate(ctx, q, idx_per_m, t_in);
      }
    } else {
      throw Error("config", "unknown task: " + task);
    }
  }
  std::map<std::string, double> out;
  for (int m = 0; m < M; ++m)
    if (count[m]) out[ds.modalities[m]] = std::sqrt(sq[m] / double(count[m]));
  return out;
}

// ---------------------------------------------------------------------------
// Harness plumbing: matched-budget train/eval runs, optionally parallel.
// ---------------------------------------------------------------------------

inline int worker_threads() {
  if (const char* env = std::getenv("OMNIFIELD_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return int(std::max(1u, std::min(4u, hw ? hw : 1u)));
}

/// Runs fn(0..n-1) across worker threads; each index is independent and the
/// caller stores results by index, so output order is deterministic.
template <class F>
void parallel_runs(int n, F&& fn) {
  const int workers = std::min(worker_threads(), std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// One matched-budget run: train a fresh model, return the best validation
/// RMSE per modality (falling back to a final evaluation when validation
/// never ran).
template <class Scalar>
struct RunOutcome {
  std::vector<double> val_rmse;
  double mean_rmse = 0;
  std::string fingerprint;
  std::uint64_t seed = 0;
};

template <class Scalar>
RunOutcome<Scalar> train_and_validate(const ModelSettings& mcfg, const TrainSettings& tcfg,
                                      const FieldDataset<Scalar>& ds, std::uint64_t seed,
                                      const std::vector<int>& input_set = {}) {
  OmniFieldModel<Scalar> model(mcfg, derive_seed(seed, "model-seed"));
  Trainer<Scalar> trainer(model, ds, tcfg, seed, input_set);
  trainer.run(tcfg.steps);
  RunOutcome<Scalar> out;
  out.seed = seed;
  if (trainer.best_step() >= 0) {
    out.val_rmse = trainer.best_val();
  } else {
    out.val_rmse = validation_rmse(model, ds, trainer.input_set(), tcfg.val_windows);
  }
  double mean = 0;
  for (double r : out.val_rmse) mean += r;
  out.mean_rmse = out.val_rmse.empty() ? 0 : mean / double(out.val_rmse.size());
  return out;
}

// ---------------------------------------------------------------------------
// Ablation harness (the six toggle rows).
// ---------------------------------------------------------------------------

struct AblationRow {
  bool gff = true, sin_init = true, icmr = true;
  std::uint64_t seed = 0;
  std::vector<double> val_rmse;
  double mean_rmse = 0;
  std::string fingerprint;
};

inline std::vector<std::array<bool, 3>> ablation_toggle_rows() {
  // (GFF, sinusoidal init, ICMR): the published toggle set.
  return {{true, true, true},  {false, true, true},  {true, false, true},
          {true, true, false}, {false, false, true}, {false, false, false}};
}

template <class Scalar>
std::vector<AblationRow> run_ablation(const FieldDataset<Scalar>& ds, ModelSettings base,
                                      TrainSettings budget, std::uint64_t base_seed,
                                      int n_seeds) {
  const auto rows = ablation_toggle_rows();
  std::vector<AblationRow> out(rows.size() * n_seeds);
  parallel_runs(int(out.size()), [&](int i) {
    const auto& toggles = rows[i / n_seeds];
    const int seed_idx = i % n_seeds;
    ModelSettings cfg = base;
    cfg.use_gff = toggles[0];
    cfg.sinusoidal_init = toggles[1];
    cfg.icmr = toggles[2];
    RunConfig rc;
    rc.model = cfg;
    rc.train = budget;
    rc.seed = derive_seed(base_seed, "ablation", std::uint64_t(seed_idx));
    auto res = train_and_validate<Scalar>(cfg, budget, ds, rc.seed);
    AblationRow row;
    row.gff = toggles[0];
    row.sin_init = toggles[1];
    row.icmr = toggles[2];
    row.seed = rc.seed;
    row.val_rmse = res.val_rmse;
    row.mean_rmse = res.mean_rmse;
    row.fingerprint = config_fingerprint(rc);
    out[i] = std::move(row);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Noise-robustness sweep.
// ---------------------------------------------------------------------------

struct NoiseRow {
  std::string variant;  // "icmr" or "mid-fusion"
  double sigma = 0;
  std::uint64_t seed = 0;
  std::vector<double> val_rmse;  // evaluated on clean inputs
  double mean_rmse = 0;
};

template <class Scalar>
std::vector<NoiseRow> noise_sweep(const FieldDataset<Scalar>& ds, ModelSettings base,
                                  TrainSettings budget, const std::vector<double>& sigmas,
                                  std::uint64_t base_seed, int n_seeds) {
  struct Cell {
    bool icmr;
    double sigma;
    int seed_idx;
  };
  std::vector<Cell> cells;
  for (bool icmr : {true, false})
    for (double s : sigmas)
      for (int k = 0; k < n_seeds; ++k) cells.push_back({icmr, s, k});
  std::vector<NoiseRow> out(cells.size());
  parallel_runs(int(cells.size()), [&](int i) {
    const Cell& c = cells[i];
    ModelSettings cfg = base;
    cfg.icmr = c.icmr;
    TrainSettings t = budget;
    t.noise_sigma = c.sigma;
    t.noise_max_corrupted = std::min(2, std::max(1, int(ds.n_modalities()) - 1));
    const std::uint64_t seed = derive_seed(base_seed, "noise", std::uint64_t(c.seed_idx));
    auto res = train_and_validate<Scalar>(cfg, t, ds, seed);
    NoiseRow row;
    row.variant = c.icmr ? "icmr" : "mid-fusion";
    row.sigma = c.sigma;
    row.seed = seed;
    row.val_rmse = res.val_rmse;  // validation contexts are never corrupted
    row.mean_rmse = res.mean_rmse;
    out[i] = std::move(row);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Fusion-strategy comparison.
// ---------------------------------------------------------------------------

struct FusionRow {
  Strategy strategy = Strategy::icmr;
  std::string input_label;
  std::vector<int> input_set;
  std::string test_split;  // co-location reports on the intersection
  std::uint64_t seed = 0;
  std::map<std::string, double> rmse;
};

template <class Scalar>
std::vector<FusionRow> compare_fusion_strategies(const FieldDataset<Scalar>& ds,
                                                 ModelSettings base, TrainSettings budget,
                                                 const std::vector<std::vector<int>>& input_sets,
                                                 std::uint64_t base_seed, int n_seeds,
                                                 const std::vector<Strategy>& strategies = {
                                                     Strategy::co_location,
                                                     Strategy::interpolation,
                                                     Strategy::mid_fusion, Strategy::icmr}) {
  struct Cell {
    Strategy strategy;
    int input_idx;
    int seed_idx;
  };
  std::vector<Cell> cells;
  for (Strategy s : strategies)
    for (int in = 0; in < int(input_sets.size()); ++in)
      for (int k = 0; k < n_seeds; ++k) cells.push_back({s, in, k});

  // Strategy-transformed datasets are shared across runs (read-only).
  std::map<int, FieldDataset<Scalar>> transformed;
  for (Strategy s : strategies)
    transformed.emplace(int(s), apply_strategy(ds, s));

  std::vector<FusionRow> out(cells.size());
  parallel_runs(int(cells.size()), [&](int i) {
    const Cell& c = cells[i];
    const FieldDataset<Scalar>& data = transformed.at(int(c.strategy));
    ModelSettings cfg = base;
    cfg.icmr = c.strategy != Strategy::mid_fusion;
    const std::uint64_t seed = derive_seed(base_seed, "fusion", std::uint64_t(c.seed_idx));
    OmniFieldModel<Scalar> model(cfg, derive_seed(seed, "model-seed"));
    Trainer<Scalar> trainer(model, data, budget, seed, input_sets[c.input_idx]);
    trainer.run(budget.steps);
    // report with the best-validation parameters when tracked
    if (trainer.best_step() >= 0 && !trainer.best_params().empty()) {
      for (int p = 0; p < model.params().size(); ++p)
        model.params().value(p) = trainer.best_params()[p];
    }
    const QuerySplit split = c.strategy == Strategy::co_location ? QuerySplit::intersection
                                                                 : QuerySplit::union_sensors;
    FusionRow row;
    row.strategy = c.strategy;
    row.input_set = input_sets[c.input_idx];
    for (int m : row.input_set) row.input_label += (row.input_label.empty() ? "" : "+") +
                                                   ds.modalities[m];
    row.test_split = c.strategy == Strategy::co_location ? "intersection" : "union";
    row.seed = seed;
    row.rmse = forecast_rmse(model, data, input_sets[c.input_idx],
                             split_locations(data, split), std::max(1, ds.horizon_steps),
                             budget.val_windows);
    out[i] = std::move(row);
  });
  return out;
}

// ---------------------------------------------------------------------------
// FFT power-spectrum analysis.
// ---------------------------------------------------------------------------

/// Centered 2-d magnitude spectrum |FFTshift(FFT2(x))|; the DC bin lands at
/// (rows/2, cols/2).
template <class Scalar>
MatX<Scalar> power_spectrum(const MatX<Scalar>& grid) {
  using Cx = std::complex<Scalar>;
  const Index R = grid.rows(), C = grid.cols();
  Eigen::FFT<Scalar> fft;
  Eigen::Matrix<Cx, Eigen::Dynamic, Eigen::Dynamic> freq(R, C);
  // rows first
  for (Index r = 0; r < R; ++r) {
    std::vector<Cx> in(C), out(C);
    for (Index c = 0; c < C; ++c) in[c] = Cx(grid(r, c), 0);
    fft.fwd(out, in);
    for (Index c = 0; c < C; ++c) freq(r, c) = out[c];
  }
  // then columns
  for (Index c = 0; c < C; ++c) {
    std::vector<Cx> in(R), out(R);
    for (Index r = 0; r < R; ++r) in[r] = freq(r, c);
    fft.fwd(out, in);
    for (Index r = 0; r < R; ++r) freq(r, c) = out[r];
  }
  MatX<Scalar> mag(R, C);
  for (Index r = 0; r < R; ++r)
    for (Index c = 0; c < C; ++c) {
      const Index rs = (r + R / 2) % R;
      const Index cs = (c + C / 2) % C;
      mag(rs, cs) = std::abs(freq(r, c));
    }
  return mag;
}

/// Elementwise |spectrum(truth) - spectrum(pred)|; symmetric in its
/// arguments.
template <class Scalar>
MatX<Scalar> power_spectrum_delta(const MatX<Scalar>& pred, const MatX<Scalar>& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw Error("shape", "power_spectrum_delta: grid shapes differ");
  return (power_spectrum(truth) - power_spectrum(pred)).cwiseAbs();
}

// ---------------------------------------------------------------------------
// CSV helpers (canonical report artifact).
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace omnifield
