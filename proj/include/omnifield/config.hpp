#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnifield/common.hpp"

namespace omnifield {

// Structured run configuration. Round-trips losslessly through JSON and
// rejects unknown keys; named presets realize the published hyperparameter
// tables plus a fast desk-scale default.

namespace cfgdetail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  if (!j.is_object()) throw Error("config", where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw Error("config", "unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace cfgdetail

struct ModelSettings {
  std::vector<std::string> modalities = {"s1", "s2"};
  int d_spatial = 1;
  int latent_dim = 32;   // D
  int n_latents = 16;    // per modality per stage
  int stages = 3;        // MCT stages
  int stage_blocks = 1;  // processor SA+FF repeats per stage
  int trunk_blocks = 1;  // final self-attention trunk
  int cross_heads = 2;
  int self_heads = 2;
  int head_dim = 16;
  int ff_mult = 4;
  int input_mlp_hidden = 32;
  int input_mlp_dim = 32;
  int space_bands = 16;
  double space_sigma = 2.0;
  int time_bands = 8;
  double time_sigma = 1.0;
  std::string query_combine = "concat";  // or "sum"
  bool use_gff = true;
  bool sinusoidal_init = true;
  bool icmr = true;
  bool share_stage_encoders = false;
  double sin_init_base = 10000.0;

  void validate() const {
    if (modalities.empty()) throw Error("config", "model: empty modality catalog");
    if (latent_dim < 2 || latent_dim % 2 != 0)
      throw Error("config", "model: latent_dim must be even and >= 2");
    if (stages < 1) throw Error("config", "model: need at least one stage");
    if (query_combine != "concat" && query_combine != "sum")
      throw Error("config", "model: query_combine must be 'concat' or 'sum'");
    if (query_combine == "sum" && space_bands != time_bands)
      throw Error("config", "model: sum combine requires equal space/time widths");
  }
};

inline void to_json(nlohmann::json& j, const ModelSettings& m) {
  j = {{"modalities", m.modalities},
       {"d_spatial", m.d_spatial},
       {"latent_dim", m.latent_dim},
       {"n_latents", m.n_latents},
       {"stages", m.stages},
       {"stage_blocks", m.stage_blocks},
       {"trunk_blocks", m.trunk_blocks},
       {"cross_heads", m.cross_heads},
       {"self_heads", m.self_heads},
       {"head_dim", m.head_dim},
       {"ff_mult", m.ff_mult},
       {"input_mlp_hidden", m.input_mlp_hidden},
       {"input_mlp_dim", m.input_mlp_dim},
       {"space_bands", m.space_bands},
       {"space_sigma", m.space_sigma},
       {"time_bands", m.time_bands},
       {"time_sigma", m.time_sigma},
       {"query_combine", m.query_combine},
       {"use_gff", m.use_gff},
       {"sinusoidal_init", m.sinusoidal_init},
       {"icmr", m.icmr},
       {"share_stage_encoders", m.share_stage_encoders},
       {"sin_init_base", m.sin_init_base}};
}

inline void from_json(const nlohmann::json& j, ModelSettings& m) {
  cfgdetail::reject_unknown(
      j,
      {"modalities", "d_spatial", "latent_dim", "n_latents", "stages", "stage_blocks",
       "trunk_blocks", "cross_heads", "self_heads", "head_dim", "ff_mult", "input_mlp_hidden",
       "input_mlp_dim", "space_bands", "space_sigma", "time_bands", "time_sigma",
       "query_combine", "use_gff", "sinusoidal_init", "icmr", "share_stage_encoders",
       "sin_init_base"},
      "model");
  cfgdetail::maybe(j, "modalities", m.modalities);
  cfgdetail::maybe(j, "d_spatial", m.d_spatial);
  cfgdetail::maybe(j, "latent_dim", m.latent_dim);
  cfgdetail::maybe(j, "n_latents", m.n_latents);
  cfgdetail::maybe(j, "stages", m.stages);
  cfgdetail::maybe(j, "stage_blocks", m.stage_blocks);
  cfgdetail::maybe(j, "trunk_blocks", m.trunk_blocks);
  cfgdetail::maybe(j, "cross_heads", m.cross_heads);
  cfgdetail::maybe(j, "self_heads", m.self_heads);
  cfgdetail::maybe(j, "head_dim", m.head_dim);
  cfgdetail::maybe(j, "ff_mult", m.ff_mult);
  cfgdetail::maybe(j, "input_mlp_hidden", m.input_mlp_hidden);
  cfgdetail::maybe(j, "input_mlp_dim", m.input_mlp_dim);
  cfgdetail::maybe(j, "space_bands", m.space_bands);
  cfgdetail::maybe(j, "space_sigma", m.space_sigma);
  cfgdetail::maybe(j, "time_bands", m.time_bands);
  cfgdetail::maybe(j, "time_sigma", m.time_sigma);
  cfgdetail::maybe(j, "query_combine", m.query_combine);
  cfgdetail::maybe(j, "use_gff", m.use_gff);
  cfgdetail::maybe(j, "sinusoidal_init", m.sinusoidal_init);
  cfgdetail::maybe(j, "icmr", m.icmr);
  cfgdetail::maybe(j, "share_stage_encoders", m.share_stage_encoders);
  cfgdetail::maybe(j, "sin_init_base", m.sin_init_base);
}

struct ScheduleSettings {
  double max_lr = 2e-3;
  double min_lr = 2e-4;
  int warmup_steps = 50;
  int cycle_steps = 600;  // full cycle length including warmup
  int cycle_mult = 1;     // next cycle length multiplier

  void validate() const {
    if (min_lr > max_lr) throw Error("config", "schedule: min_lr exceeds max_lr");
    if (warmup_steps < 0 || cycle_steps < 2 || warmup_steps >= cycle_steps)
      throw Error("config", "schedule: need 0 <= warmup < cycle");
    if (cycle_mult < 1) throw Error("config", "schedule: cycle_mult must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const ScheduleSettings& s) {
  j = {{"max_lr", s.max_lr},
       {"min_lr", s.min_lr},
       {"warmup_steps", s.warmup_steps},
       {"cycle_steps", s.cycle_steps},
       {"cycle_mult", s.cycle_mult}};
}

inline void from_json(const nlohmann::json& j, ScheduleSettings& s) {
  cfgdetail::reject_unknown(
      j, {"max_lr", "min_lr", "warmup_steps", "cycle_steps", "cycle_mult"}, "schedule");
  cfgdetail::maybe(j, "max_lr", s.max_lr);
  cfgdetail::maybe(j, "min_lr", s.min_lr);
  cfgdetail::maybe(j, "warmup_steps", s.warmup_steps);
  cfgdetail::maybe(j, "cycle_steps", s.cycle_steps);
  cfgdetail::maybe(j, "cycle_mult", s.cycle_mult);
}

struct TrainSettings {
  int steps = 600;
  int batch_size = 4;
  ScheduleSettings schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;  // 0 disables clipping
  std::vector<double> task_weights = {0.2, 0.2, 0.5, 0.1};  // recon/interp/forecast/crossmodal
  int queries_per_modality = 32;
  int val_every = 100;
  int val_windows = 16;
  double noise_sigma = 0.0;
  int noise_max_corrupted = 1;
  std::string nonfinite_grad = "abort";  // or "skip"

  void validate() const {
    schedule.validate();
    if (steps < 1 || batch_size < 1) throw Error("config", "train: steps/batch must be >= 1");
    if (task_weights.size() != 4) throw Error("config", "train: need 4 task weights");
    double sum = 0;
    for (double w : task_weights) {
      if (w < 0) throw Error("config", "train: task weights must be non-negative");
      sum += w;
    }
    if (sum <= 0) throw Error("config", "train: task weights sum to zero");
    if (nonfinite_grad != "abort" && nonfinite_grad != "skip")
      throw Error("config", "train: nonfinite_grad must be 'abort' or 'skip'");
  }
};

inline void to_json(nlohmann::json& j, const TrainSettings& t) {
  j = {{"steps", t.steps},
       {"batch_size", t.batch_size},
       {"schedule", t.schedule},
       {"beta1", t.beta1},
       {"beta2", t.beta2},
       {"eps", t.eps},
       {"weight_decay", t.weight_decay},
       {"clip_norm", t.clip_norm},
       {"task_weights", t.task_weights},
       {"queries_per_modality", t.queries_per_modality},
       {"val_every", t.val_every},
       {"val_windows", t.val_windows},
       {"noise_sigma", t.noise_sigma},
       {"noise_max_corrupted", t.noise_max_corrupted},
       {"nonfinite_grad", t.nonfinite_grad}};
}

inline void from_json(const nlohmann::json& j, TrainSettings& t) {
  cfgdetail::reject_unknown(j,
                            {"steps", "batch_size", "schedule", "beta1", "beta2", "eps",
                             "weight_decay", "clip_norm", "task_weights",
                             "queries_per_modality", "val_every", "val_windows", "noise_sigma",
                             "noise_max_corrupted", "nonfinite_grad"},
                            "train");
  cfgdetail::maybe(j, "steps", t.steps);
  cfgdetail::maybe(j, "batch_size", t.batch_size);
  cfgdetail::maybe(j, "schedule", t.schedule);
  cfgdetail::maybe(j, "beta1", t.beta1);
  cfgdetail::maybe(j, "beta2", t.beta2);
  cfgdetail::maybe(j, "eps", t.eps);
  cfgdetail::maybe(j, "weight_decay", t.weight_decay);
  cfgdetail::maybe(j, "clip_norm", t.clip_norm);
  cfgdetail::maybe(j, "task_weights", t.task_weights);
  cfgdetail::maybe(j, "queries_per_modality", t.queries_per_modality);
  cfgdetail::maybe(j, "val_every", t.val_every);
  cfgdetail::maybe(j, "val_windows", t.val_windows);
  cfgdetail::maybe(j, "noise_sigma", t.noise_sigma);
  cfgdetail::maybe(j, "noise_max_corrupted", t.noise_max_corrupted);
  cfgdetail::maybe(j, "nonfinite_grad", t.nonfinite_grad);
}

struct DataSettings {
  std::string kind = "synthetic";
  int x_points = 100;
  int t_points = 500;
  double x_extent = 10.0;
  double t_extent = 50.0;
  int s1_components = 3;
  bool s1_noise = false;
  int s2_oscillators = 2;
  double coupling = 2.5;
  std::string integrator = "euler";
  int window_input = 20;
  int window_horizon = 1;
  int window_stride = 1;
  double train_fraction = 0.8;
  std::string sparsity = "sparse50";
  int horizon_steps = 1;
  bool normalize = true;

  void validate() const {
    if (kind != "synthetic") throw Error("config", "data: only the synthetic kind is generable");
    if (horizon_steps < 1 || horizon_steps > window_horizon)
      throw Error("config", "data: horizon_steps must lie in [1, window_horizon]");
  }
};

inline void to_json(nlohmann::json& j, const DataSettings& d) {
  j = {{"kind", d.kind},
       {"x_points", d.x_points},
       {"t_points", d.t_points},
       {"x_extent", d.x_extent},
       {"t_extent", d.t_extent},
       {"s1_components", d.s1_components},
       {"s1_noise", d.s1_noise},
       {"s2_oscillators", d.s2_oscillators},
       {"coupling", d.coupling},
       {"integrator", d.integrator},
       {"window_input", d.window_input},
       {"window_horizon", d.window_horizon},
       {"window_stride", d.window_stride},
       {"train_fraction", d.train_fraction},
       {"sparsity", d.sparsity},
       {"horizon_steps", d.horizon_steps},
       {"normalize", d.normalize}};
}

inline void from_json(const nlohmann::json& j, DataSettings& d) {
  cfgdetail::reject_unknown(j,
                            {"kind", "x_points", "t_points", "x_extent", "t_extent",
                             "s1_components", "s1_noise", "s2_oscillators", "coupling",
                             "integrator", "window_input", "window_horizon", "window_stride",
                             "train_fraction", "sparsity", "horizon_steps", "normalize"},
                            "data");
  cfgdetail::maybe(j, "kind", d.kind);
  cfgdetail::maybe(j, "x_points", d.x_points);
  cfgdetail::maybe(j, "t_points", d.t_points);
  cfgdetail::maybe(j, "x_extent", d.x_extent);
  cfgdetail::maybe(j, "t_extent", d.t_extent);
  cfgdetail::maybe(j, "s1_components", d.s1_components);
  cfgdetail::maybe(j, "s1_noise", d.s1_noise);
  cfgdetail::maybe(j, "s2_oscillators", d.s2_oscillators);
  cfgdetail::maybe(j, "coupling", d.coupling);
  cfgdetail::maybe(j, "integrator", d.integrator);
  cfgdetail::maybe(j, "window_input", d.window_input);
  cfgdetail::maybe(j, "window_horizon", d.window_horizon);
  cfgdetail::maybe(j, "window_stride", d.window_stride);
  cfgdetail::maybe(j, "train_fraction", d.train_fraction);
  cfgdetail::maybe(j, "sparsity", d.sparsity);
  cfgdetail::maybe(j, "horizon_steps", d.horizon_steps);
  cfgdetail::maybe(j, "normalize", d.normalize);
}

struct RunConfig {
  std::string preset = "desk-synthetic";
  std::string precision = "f64";
  std::uint64_t seed = 0;
  ModelSettings model;
  TrainSettings train;
  DataSettings data;

  void validate() const {
    if (precision != "f64" && precision != "f32")
      throw Error("config", "precision must be 'f64' or 'f32'");
    model.validate();
    train.validate();
    data.validate();
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"preset", c.preset}, {"precision", c.precision}, {"seed", c.seed},
       {"model", c.model},   {"train", c.train},         {"data", c.data}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  cfgdetail::reject_unknown(j, {"preset", "precision", "seed", "model", "train", "data"},
                            "config");
  cfgdetail::maybe(j, "preset", c.preset);
  cfgdetail::maybe(j, "precision", c.precision);
  cfgdetail::maybe(j, "seed", c.seed);
  cfgdetail::maybe(j, "model", c.model);
  cfgdetail::maybe(j, "train", c.train);
  cfgdetail::maybe(j, "data", c.data);
}

/// Stable 64-bit fingerprint of the fully resolved configuration.
inline std::string config_fingerprint(const RunConfig& c) {
  nlohmann::json j = c;
  const std::string dump = j.dump();
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump)));
  return hex;
}

/// Named presets. desk-synthetic is the fast default; climsim-thw and
/// epa-aqs realize the published hyperparameter tables.
inline RunConfig make_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk-synthetic") {
    return c;  // struct defaults are the desk-scale configuration
  }
  if (name == "climsim-thw") {
    c.model.modalities = {"t", "h", "w"};
    c.model.d_spatial = 2;
    c.model.latent_dim = 128;
    c.model.n_latents = 128;
    c.model.stages = 3;
    c.model.stage_blocks = 1;
    c.model.trunk_blocks = 3;
    c.model.cross_heads = 4;
    c.model.self_heads = 8;
    c.model.head_dim = 128;
    c.model.ff_mult = 4;
    c.model.input_mlp_hidden = 128;
    c.model.input_mlp_dim = 128;
    c.model.space_bands = 32;
    c.model.space_sigma = 15.0;
    c.model.time_bands = 16;
    c.model.time_sigma = 10.0;
    c.model.query_combine = "concat";
    c.train.steps = 100000;
    c.train.batch_size = 8;
    c.train.schedule = {8e-5, 8e-6, 1000, 100000, 1};
    c.data.horizon_steps = 6;
    c.data.window_horizon = 6;
    return c;
  }
  if (name == "epa-aqs") {
    c.model.modalities = {"o3", "pm25", "pm10", "no2", "co", "so2"};
    c.model.d_spatial = 2;
    c.model.latent_dim = 64;
    c.model.n_latents = 64;
    c.model.stages = 3;
    c.model.stage_blocks = 1;
    c.model.trunk_blocks = 3;
    c.model.cross_heads = 2;
    c.model.self_heads = 2;
    c.model.head_dim = 32;
    c.model.ff_mult = 4;
    c.model.input_mlp_hidden = 128;
    c.model.input_mlp_dim = 128;
    c.model.space_bands = 32;
    c.model.space_sigma = 15.0;
    c.model.time_bands = 32;
    c.model.time_sigma = 15.0;
    c.model.query_combine = "sum";
    c.train.batch_size = 4;
    c.train.schedule = {8e-5, 8e-6, 100, 1000, 1};  // warmup = 10% of cycle
    c.data.horizon_steps = 5;
    c.data.window_horizon = 5;
    return c;
  }
  throw Error("config", "unknown preset: " + name +
                            " (known: desk-synthetic, climsim-thw, epa-aqs)");
}

}  // namespace omnifield
