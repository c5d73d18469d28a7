#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnifield/common.hpp"
#include "omnifield/context.hpp"

namespace omnifield {

// ---------------------------------------------------------------------------
// Driving modality S1: sum of sinusoidal components on a uniform grid.
// ---------------------------------------------------------------------------

template <class Scalar>
struct S1Params {
  int n_components = 3;
  std::vector<Scalar> amplitudes;       // A_i, sampled from [0.5, 1.5] if empty
  std::vector<Scalar> spatial_freqs;    // k_i, [0.5, 3]
  std::vector<Scalar> temporal_freqs;   // w_i, [0.5, 3]
  std::vector<Scalar> phases;           // phi_i, [0, 2pi)
  bool noise = false;
  Scalar noise_std = Scalar(0.1);
  int x_points = 100;
  int t_points = 500;
  Scalar x_extent = Scalar(10);
  Scalar t_extent = Scalar(50);

  Scalar x_step() const { return x_extent / Scalar(x_points); }
  Scalar t_step() const { return t_extent / Scalar(t_points); }

  void validate() const {
    if (n_components < 1) throw Error("value", "s1: need at least one component");
    if (x_points < 2 || t_points < 2) throw Error("value", "s1: grid must have >= 2 points");
    for (const auto* v : {&amplitudes, &spatial_freqs, &temporal_freqs, &phases})
      if (!v->empty() && int(v->size()) != n_components)
        throw Error("value", "s1: component parameter lists must match n_components");
  }
};

namespace detail {

template <class Scalar>
void fill_uniform(std::vector<Scalar>& v, int n, Rng& rng, double lo, double hi) {
  if (!v.empty()) return;
  v.resize(n);
  for (auto& x : v) x = Scalar(rng.uniform(lo, hi));
}

}  // namespace detail

/// Draws any unspecified component parameters from their seeded ranges and
/// records them back into the params struct.
template <class Scalar>
void resolve_s1_params(S1Params<Scalar>& p, std::uint64_t seed) {
  p.validate();
  Rng rng(derive_seed(seed, "s1-params"));
  detail::fill_uniform(p.amplitudes, p.n_components, rng, 0.5, 1.5);
  detail::fill_uniform(p.spatial_freqs, p.n_components, rng, 0.5, 3.0);
  detail::fill_uniform(p.temporal_freqs, p.n_components, rng, 0.5, 3.0);
  detail::fill_uniform(p.phases, p.n_components, rng, 0.0, 2.0 * std::numbers::pi);
}

/// S1[x,t] = sum_i A_i sin(k_i x - w_i t + phi_i), x_j = j dx, t_n = n dt.
/// Mutates `p` only by resolving unspecified parameters.
template <class Scalar>
MatX<Scalar> gen_s1(S1Params<Scalar>& p, std::uint64_t seed) {
  resolve_s1_params(p, seed);
  const Scalar dx = p.x_step(), dt = p.t_step();
  MatX<Scalar> field(p.x_points, p.t_points);
  for (int xi = 0; xi < p.x_points; ++xi) {
    const Scalar x = Scalar(xi) * dx;
    for (int ti = 0; ti < p.t_points; ++ti) {
      const Scalar t = Scalar(ti) * dt;
      Scalar v = 0;
      for (int i = 0; i < p.n_components; ++i)
        v += p.amplitudes[i] *
             std::sin(p.spatial_freqs[i] * x - p.temporal_freqs[i] * t + p.phases[i]);
      field(xi, ti) = v;
    }
  }
  if (p.noise) {
    Rng rng(derive_seed(seed, "s1-noise"));
    for (int xi = 0; xi < p.x_points; ++xi)
      for (int ti = 0; ti < p.t_points; ++ti)
        field(xi, ti) += Scalar(rng.normal(0.0, double(p.noise_std)));
  }
  return field;
}

// ---------------------------------------------------------------------------
// Coupled modality S2: Kuramoto-style phase oscillators driven by the S1
// component phases, integrated per spatial column.
// ---------------------------------------------------------------------------

enum class OdeIntegrator { euler, rk4 };

template <class Scalar>
struct KuramotoParams {
  int n_oscillators = 2;
  std::vector<Scalar> natural_freqs;  // w'_j, sampled from [0.5, 2] if empty
  std::vector<Scalar> output_amps;    // B_j, [0.5, 1.5]
  std::vector<Scalar> init_phases;    // theta_j(0), [0, 2pi)
  Scalar coupling = Scalar(2.5);      // K
  Scalar dt = 0;                      // 0 -> the t grid spacing
  OdeIntegrator integrator = OdeIntegrator::euler;

  void validate() const {
    if (n_oscillators < 1) throw Error("value", "kuramoto: need at least one oscillator");
    if (coupling < Scalar(0)) throw Error("value", "kuramoto: coupling must be >= 0");
    for (const auto* v : {&natural_freqs, &output_amps, &init_phases})
      if (!v->empty() && int(v->size()) != n_oscillators)
        throw Error("value", "kuramoto: oscillator parameter lists must match n_oscillators");
  }
};

template <class Scalar>
void resolve_kuramoto_params(KuramotoParams<Scalar>& p, std::uint64_t seed) {
  p.validate();
  Rng rng(derive_seed(seed, "s2-params"));
  detail::fill_uniform(p.natural_freqs, p.n_oscillators, rng, 0.5, 2.0);
  detail::fill_uniform(p.output_amps, p.n_oscillators, rng, 0.5, 1.5);
  detail::fill_uniform(p.init_phases, p.n_oscillators, rng, 0.0, 2.0 * std::numbers::pi);
}

template <class Scalar>
struct KuramotoResult {
  std::vector<MatX<Scalar>> theta;  // per oscillator: x_points x t_points
  MatX<Scalar> field;               // S2(x, t) = sum_j B_j sin(theta_j)
};

/// Integrates dtheta_j/dt = w'_j + (K/N) sum_i sin(psi_i(x,t) - theta_j) with
/// psi_i the S1 component phases. The step must divide the t grid spacing.
/// `s1p` must already be resolved (gen_s1 does this).
template <class Scalar>
KuramotoResult<Scalar> gen_s2_kuramoto(KuramotoParams<Scalar>& kp, const S1Params<Scalar>& s1p,
                                       std::uint64_t seed) {
  resolve_kuramoto_params(kp, seed);
  if (int(s1p.amplitudes.size()) != s1p.n_components)
    throw Error("value", "kuramoto: S1 parameters are unresolved");
  const Scalar grid_dt = s1p.t_step();
  if (kp.dt < Scalar(0)) throw Error("value", "kuramoto: dt must be positive");
  Scalar step = kp.dt > Scalar(0) ? kp.dt : grid_dt;
  const Scalar ratio = grid_dt / step;
  const int substeps = int(std::lround(double(ratio)));
  if (substeps < 1 || std::abs(double(ratio) - substeps) > 1e-9)
    throw Error("value", "kuramoto: dt must divide the t grid spacing");
  if (substeps == 1) step = grid_dt;  // avoid drift when dt == spacing

  const int N = s1p.n_components, M = kp.n_oscillators;
  const Scalar k_over_n = kp.coupling / Scalar(N);

  KuramotoResult<Scalar> out;
  out.theta.assign(M, MatX<Scalar>(s1p.x_points, s1p.t_points));
  out.field.resize(s1p.x_points, s1p.t_points);

  std::vector<Scalar> th(M), k1(M), k2(M), k3(M), k4(M), tmp(M);
  const Scalar dx = s1p.x_step();
  for (int xi = 0; xi < s1p.x_points; ++xi) {
    const Scalar x = Scalar(xi) * dx;
    auto deriv = [&](const std::vector<Scalar>& cur, Scalar t, std::vector<Scalar>& d) {
      for (int j = 0; j < M; ++j) {
        Scalar c = 0;
        for (int i = 0; i < N; ++i) {
          const Scalar psi =
              s1p.spatial_freqs[i] * x - s1p.temporal_freqs[i] * t + s1p.phases[i];
          c += std::sin(psi - cur[j]);
        }
        d[j] = kp.natural_freqs[j] + k_over_n * c;
      }
    };

    th = kp.init_phases;
    for (int ti = 0; ti < s1p.t_points; ++ti) {
      for (int j = 0; j < M; ++j) out.theta[j](xi, ti) = th[j];
      Scalar s2v = 0;
      for (int j = 0; j < M; ++j) s2v += kp.output_amps[j] * std::sin(th[j]);
      out.field(xi, ti) = s2v;
      if (ti + 1 == s1p.t_points) break;

      Scalar t = Scalar(ti) * grid_dt;
      for (int s = 0; s < substeps; ++s) {
        if (kp.integrator == OdeIntegrator::euler) {
          deriv(th, t, k1);
          for (int j = 0; j < M; ++j) th[j] += step * k1[j];
        } else {
          deriv(th, t, k1);
          for (int j = 0; j < M; ++j) tmp[j] = th[j] + Scalar(0.5) * step * k1[j];
          deriv(tmp, t + Scalar(0.5) * step, k2);
          for (int j = 0; j < M; ++j) tmp[j] = th[j] + Scalar(0.5) * step * k2[j];
          deriv(tmp, t + Scalar(0.5) * step, k3);
          for (int j = 0; j < M; ++j) tmp[j] = th[j] + step * k3[j];
          deriv(tmp, t + step, k4);
          for (int j = 0; j < M; ++j)
            th[j] += step / Scalar(6) * (k1[j] + Scalar(2) * k2[j] + Scalar(2) * k3[j] + k4[j]);
        }
        t += step;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sensor incidence construction with exact overlap-class counts.
// ---------------------------------------------------------------------------

/// Location counts per nonempty modality subset, keyed by bitmask (bit m set
/// means modality m observes the location). Classes absent from the map are
/// empty.
struct OverlapClassCounts {
  int n_modalities = 0;
  std::map<std::uint32_t, int> counts;

  int per_modality_total(int m) const {
    int total = 0;
    for (const auto& [bits, n] : counts)
      if (bits & (1u << m)) total += n;
    return total;
  }
  int union_size() const {
    int u = 0;
    for (const auto& [bits, n] : counts) u += n;
    return u;
  }
  void validate(int catalog_size) const {
    if (n_modalities < 1 || n_modalities > 31)
      throw Error("value", "sensor masks: unsupported modality count");
    for (const auto& [bits, n] : counts) {
      if (bits == 0 || bits >= (1u << n_modalities))
        throw Error("infeasible", "sensor masks: overlap class outside the catalog");
      if (n < 0) throw Error("infeasible", "sensor masks: negative class count");
    }
    if (union_size() > catalog_size)
      throw Error("infeasible", "sensor masks: classes need " + std::to_string(union_size()) +
                                    " locations but the catalog has " +
                                    std::to_string(catalog_size));
  }
};

/// Fixed location-by-modality incidence with exact class counts; identical
/// across all instances of a dataset.
struct SensorMaskSet {
  int catalog_size = 0;
  int n_modalities = 0;
  std::vector<std::uint32_t> incidence;   // catalog_size bitmasks
  std::vector<std::vector<int>> sensors;  // per modality, ascending indices

  int count_with_bits(std::uint32_t bits) const {
    int n = 0;
    for (auto b : incidence) n += (b == bits) ? 1 : 0;
    return n;
  }
  int union_count() const {
    int n = 0;
    for (auto b : incidence) n += (b != 0) ? 1 : 0;
    return n;
  }
  std::vector<int> intersection() const {
    const std::uint32_t all = (1u << n_modalities) - 1u;
    std::vector<int> out;
    for (int i = 0; i < catalog_size; ++i)
      if (incidence[i] == all) out.push_back(i);
    return out;
  }
  std::vector<int> union_locations() const {
    std::vector<int> out;
    for (int i = 0; i < catalog_size; ++i)
      if (incidence[i] != 0) out.push_back(i);
    return out;
  }

  static SensorMaskSet from_incidence(std::vector<std::uint32_t> bits, int n_modalities) {
    SensorMaskSet s;
    s.catalog_size = int(bits.size());
    s.n_modalities = n_modalities;
    s.incidence = std::move(bits);
    s.sensors.assign(n_modalities, {});
    for (int i = 0; i < s.catalog_size; ++i)
      for (int m = 0; m < n_modalities; ++m)
        if (s.incidence[i] & (1u << m)) s.sensors[m].push_back(i);
    return s;
  }
};

/// Randomly assigns catalog locations to overlap classes so that every class
/// count is met integer-for-integer. Deterministic given the seed.
inline SensorMaskSet build_sensor_masks(int catalog_size, const OverlapClassCounts& classes,
                                        std::uint64_t seed) {
  classes.validate(catalog_size);
  std::vector<int> pool(catalog_size);
  for (int i = 0; i < catalog_size; ++i) pool[i] = i;
  Rng rng(derive_seed(seed, "sensor-masks"));
  rng.shuffle(pool);

  std::vector<std::uint32_t> incidence(catalog_size, 0);
  std::size_t next = 0;
  for (const auto& [bits, n] : classes.counts) {
    for (int i = 0; i < n; ++i) incidence[pool[next++]] = bits;
  }
  return SensorMaskSet::from_incidence(std::move(incidence), classes.n_modalities);
}

/// Named mask presets.
inline OverlapClassCounts mask_preset(const std::string& name, int n_modalities,
                                      int catalog_size) {
  OverlapClassCounts c;
  c.n_modalities = n_modalities;
  if (name == "climsim-5.1") {
    if (n_modalities != 3) throw Error("config", "climsim-5.1 masks need 3 modalities");
    c.counts = {{0b111, 108}, {0b011, 81}, {0b101, 81}, {0b110, 81},
                {0b001, 162}, {0b010, 162}, {0b100, 162}};
  } else if (name == "climsim-appendix-d") {
    if (n_modalities != 3) throw Error("config", "climsim-appendix-d masks need 3 modalities");
    c.counts = {{0b111, 108}, {0b011, 18}, {0b101, 18}, {0b110, 18},
                {0b001, 72}, {0b010, 72}, {0b100, 72}};
  } else if (name == "sparse50" || name == "sparse30") {
    const int per_class = name == "sparse50" ? 25 : 15;
    c.counts[(1u << n_modalities) - 1u] = per_class;
    for (int m = 0; m < n_modalities; ++m) c.counts[1u << m] = per_class;
  } else if (name == "dense") {
    c.counts[(1u << n_modalities) - 1u] = catalog_size;
  } else {
    throw Error("config", "unknown sparsity preset: " + name);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Windowing, normalization, datasets.
// ---------------------------------------------------------------------------

struct WindowSpec {
  int input_len = 20;   // L_in
  int horizon = 1;      // L_pred
  int stride = 1;       // s

  void validate() const {
    if (input_len < 1 || horizon < 1 || stride < 1)
      throw Error("value", "window spec: L_in, L_pred, s must all be >= 1");
  }
};

/// N_win = T - L_in - L_pred at stride 1; the general-stride count keeps the
/// same trailing frame unused.
inline int window_count(int t_points, const WindowSpec& w) {
  w.validate();
  if (t_points <= w.input_len + w.horizon)
    throw Error("value", "windows: need T > L_in + L_pred (got T=" + std::to_string(t_points) +
                             ")");
  return (t_points - w.input_len - w.horizon - 1) / w.stride + 1;
}

template <class Scalar>
struct ZScoreStats {
  Scalar mean = 0;
  Scalar std = 1;
};

template <class Scalar>
ZScoreStats<Scalar> zscore_fit(const MatX<Scalar>& values) {
  if (values.size() == 0) throw Error("value", "zscore: empty sample");
  ZScoreStats<Scalar> s;
  s.mean = values.mean();
  s.std = std::sqrt((values.array() - s.mean).square().mean());
  if (!(s.std > Scalar(0)))
    throw Error("value", "zscore: modality has zero variance, cannot normalize");
  return s;
}

template <class Scalar>
MatX<Scalar> zscore_apply(const MatX<Scalar>& values, const ZScoreStats<Scalar>& s) {
  return ((values.array() - s.mean) / s.std).matrix();
}

template <class Scalar>
MatX<Scalar> zscore_invert(const MatX<Scalar>& values, const ZScoreStats<Scalar>& s) {
  return (values.array() * s.std + s.mean).matrix();
}

/// Windowed multimodal field instances over one synthetic realization.
/// Fields are stored raw; contexts/targets are normalized on access.
template <class Scalar>
struct FieldDataset {
  std::vector<std::string> modalities;
  std::vector<MatX<Scalar>> fields;  // per modality, x_points x t_points (raw)
  // When non-empty, contexts read these instead of `fields` (imputation
  // strategies); targets always come from `fields`.
  std::vector<MatX<Scalar>> context_fields;
  VecX<Scalar> x_coords;             // raw spatial coordinates
  Scalar x_extent = 1;
  SensorMaskSet masks;
  WindowSpec window;
  int n_windows = 0;
  int train_windows = 0;
  int horizon_steps = 1;  // t_h in frames
  bool normalized = true;
  std::vector<ZScoreStats<Scalar>> stats;
  nlohmann::json metadata;

  int n_modalities() const { return int(modalities.size()); }
  int x_points() const { return int(x_coords.size()); }
  int t_points() const { return fields.empty() ? 0 : int(fields[0].cols()); }

  int window_start(int w) const { return w * window.stride; }
  int t_in_index(int w) const { return window_start(w) + window.input_len - 1; }

  int modality_index(const std::string& name) const {
    for (int m = 0; m < n_modalities(); ++m)
      if (modalities[m] == name) return m;
    throw Error("value", "unknown modality: " + name);
  }

  Scalar norm_value(int m, Scalar raw) const {
    return normalized ? (raw - stats[m].mean) / stats[m].std : raw;
  }
  Scalar denorm_value(int m, Scalar v) const {
    return normalized ? v * stats[m].std + stats[m].mean : v;
  }

  MatX<Scalar> normalized_coords(const std::vector<int>& idx) const {
    MatX<Scalar> c(idx.size(), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) c(i, 0) = x_coords(idx[i]) / x_extent;
    return c;
  }

  /// Normalized values of modality m at the given grid indices and frame.
  VecX<Scalar> values_at(int m, const std::vector<int>& idx, int t_idx) const {
    VecX<Scalar> v(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      v(i) = norm_value(m, fields[m](idx[i], t_idx));
    return v;
  }

  /// Same, but reading the context-side field (imputed under some fusion
  /// strategies).
  VecX<Scalar> context_values_at(int m, const std::vector<int>& idx, int t_idx) const {
    const MatX<Scalar>& f = context_fields.empty() ? fields[m] : context_fields[m];
    VecX<Scalar> v(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) v(i) = norm_value(m, f(idx[i], t_idx));
    return v;
  }

  void validate() const {
    if (modalities.empty() || fields.size() != modalities.size())
      throw Error("value", "dataset: fields do not cover the modality catalog");
    if (int(stats.size()) != n_modalities())
      throw Error("value", "dataset: missing normalization stats");
  }
};

/// Restriction of one modality's field to its sensors at one frame; values
/// are read off the field with locations in canonical (ascending) index
/// order. Raw units; normalization happens when contexts are assembled.
template <class Scalar>
ModalityObservations<Scalar> sparsify(const MatX<Scalar>& field, const std::vector<int>& sensors,
                                      const VecX<Scalar>& x_coords, int t_idx,
                                      const std::string& name) {
  if (t_idx < 0 || t_idx >= field.cols()) throw Error("value", "sparsify: frame out of range");
  ModalityObservations<Scalar> obs;
  obs.modality = name;
  obs.locations.resize(sensors.size(), 1);
  obs.values.resize(sensors.size());
  obs.input_time = Scalar(t_idx);
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const int s = sensors[i];
    if (s < 0 || s >= field.rows()) throw Error("value", "sparsify: mask index out of range");
    obs.locations(i, 0) = x_coords(s);
    obs.values(i) = field(s, t_idx);
  }
  return obs;
}

/// Normalized context for a window, restricted to `input_set` (catalog
/// indices). Other modalities are present in the catalog but absent (pi = 0).
template <class Scalar>
ContextSet<Scalar> context_for_window(const FieldDataset<Scalar>& ds, int w,
                                      const std::vector<int>& input_set) {
  const int t_in = ds.t_in_index(w);
  ContextSet<Scalar> ctx;
  ctx.observations.resize(ds.n_modalities());
  ctx.presence.assign(ds.n_modalities(), 0);
  for (int m = 0; m < ds.n_modalities(); ++m) {
    ctx.observations[m].modality = ds.modalities[m];
    ctx.observations[m].input_time = Scalar(t_in);
  }
  for (int m : input_set) {
    const auto& sensors = ds.masks.sensors[m];
    if (sensors.empty()) continue;
    auto& obs = ctx.observations[m];
    obs.locations = ds.normalized_coords(sensors);
    obs.values = ds.context_values_at(m, sensors, t_in);
    ctx.presence[m] = 1;
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Noise corruption (training-time augmentation; evaluation stays clean).
// ---------------------------------------------------------------------------

template <class Scalar>
struct NoiseSpec {
  Scalar sigma = 0;  // noise std as a multiple of the per-sample observed std
  int max_corrupted = 1;  // k_max
};

/// Adds zero-mean Gaussian noise with std = sigma * std(values of the chosen
/// modality in this sample) to k uniformly chosen present modalities,
/// k ~ U{1..max_corrupted}. At least one modality always stays clean;
/// untouched modalities are bitwise unchanged.
template <class Scalar>
void corrupt(ContextSet<Scalar>& ctx, const NoiseSpec<Scalar>& spec, Rng& rng) {
  if (spec.sigma == Scalar(0)) return;
  std::vector<int> present;
  for (int m = 0; m < ctx.n_modalities(); ++m)
    if (ctx.presence[m]) present.push_back(m);
  if (int(present.size()) < 2)
    throw Error("infeasible", "corrupt: need >= 2 present modalities so one stays clean");
  const int k_cap = std::min<int>(spec.max_corrupted, int(present.size()) - 1);
  if (k_cap < 1) throw Error("infeasible", "corrupt: k exceeds the modality budget");
  const int k = 1 + int(rng.uniform_int(std::uint64_t(k_cap)));
  std::vector<int> chosen = rng.sample_without_replacement(int(present.size()), k);
  for (int c : chosen) {
    auto& values = ctx.observations[present[c]].values;
    if (values.size() < 1) continue;
    const Scalar mean = values.mean();
    const Scalar sd = std::sqrt((values.array() - mean).square().mean());
    const Scalar noise_std = spec.sigma * sd;
    for (Index i = 0; i < values.size(); ++i)
      values(i) += Scalar(rng.normal(0.0, double(noise_std)));
  }
}

// ---------------------------------------------------------------------------
// Synthetic dataset assembly.
// ---------------------------------------------------------------------------

template <class Scalar>
struct SyntheticConfig {
  S1Params<Scalar> s1;
  KuramotoParams<Scalar> s2;
  WindowSpec window;
  Scalar train_fraction = Scalar(0.8);
  std::string sparsity = "sparse50";
  int horizon_steps = 1;
  bool normalize = true;
};

/// Frames visible to training windows; normalization statistics use only
/// these columns.
inline int train_frame_end(int train_windows, const WindowSpec& w) {
  return (train_windows - 1) * w.stride + w.input_len + w.horizon;
}

template <class Scalar>
FieldDataset<Scalar> generate_synthetic_dataset(SyntheticConfig<Scalar> cfg,
                                                std::uint64_t seed) {
  FieldDataset<Scalar> ds;
  ds.modalities = {"s1", "s2"};
  MatX<Scalar> s1 = gen_s1(cfg.s1, seed);
  KuramotoResult<Scalar> s2 = gen_s2_kuramoto(cfg.s2, cfg.s1, seed);
  ds.fields = {std::move(s1), std::move(s2.field)};

  ds.x_coords.resize(cfg.s1.x_points);
  const Scalar dx = cfg.s1.x_step();
  for (int i = 0; i < cfg.s1.x_points; ++i) ds.x_coords(i) = Scalar(i) * dx;
  ds.x_extent = cfg.s1.x_extent;

  ds.window = cfg.window;
  ds.n_windows = window_count(cfg.s1.t_points, cfg.window);
  ds.train_windows = std::max(1, int(std::floor(double(cfg.train_fraction) * ds.n_windows)));
  ds.horizon_steps = cfg.horizon_steps;
  ds.normalized = cfg.normalize;

  const auto classes = mask_preset(cfg.sparsity, 2, cfg.s1.x_points);
  ds.masks = build_sensor_masks(cfg.s1.x_points, classes, seed);

  const int fit_end = train_frame_end(ds.train_windows, cfg.window);
  ds.stats.resize(2);
  for (int m = 0; m < 2; ++m) {
    if (cfg.normalize)
      ds.stats[m] = zscore_fit<Scalar>(ds.fields[m].leftCols(fit_end));
    else
      ds.stats[m] = ZScoreStats<Scalar>{};
  }

  ds.metadata = {
      {"generator", "synthetic-s1s2"},
      {"seed", seed},
      {"coupling", double(cfg.s2.coupling)},
      {"integrator", cfg.s2.integrator == OdeIntegrator::euler ? "euler" : "rk4"},
      {"sparsity", cfg.sparsity},
      {"x_points", cfg.s1.x_points},
      {"t_points", cfg.s1.t_points},
      {"n_windows", ds.n_windows},
      {"train_windows", ds.train_windows},
      {"s1", {{"amplitudes", cfg.s1.amplitudes},
              {"spatial_freqs", cfg.s1.spatial_freqs},
              {"temporal_freqs", cfg.s1.temporal_freqs},
              {"phases", cfg.s1.phases},
              {"noise", cfg.s1.noise}}},
      {"s2", {{"natural_freqs", cfg.s2.natural_freqs},
              {"output_amps", cfg.s2.output_amps},
              {"init_phases", cfg.s2.init_phases}}},
  };
  ds.validate();
  return ds;
}

}  // namespace omnifield
