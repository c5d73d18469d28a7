#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "omnifield/config.hpp"
#include "omnifield/container.hpp"
#include "omnifield/datagen.hpp"
#include "omnifield/model.hpp"

namespace omnifield {

// ---------------------------------------------------------------------------
// Learning-rate schedule: linear warmup into a cosine decay, restarting.
// ---------------------------------------------------------------------------

/// lr at an optimizer step. Within each cycle: 0 -> max_lr over the warmup,
/// then cosine from max_lr down to exactly min_lr at the cycle's last step.
/// Restarts begin the next cycle (length scaled by cycle_mult) back at the
/// warmup, the only discontinuity.
inline double lr_at(std::int64_t step, const ScheduleSettings& s) {
  s.validate();
  if (step < 0) throw Error("value", "lr_at: negative step");
  std::int64_t cycle_len = s.cycle_steps;
  std::int64_t warmup = s.warmup_steps;
  std::int64_t pos = step;
  while (pos >= cycle_len) {
    pos -= cycle_len;
    cycle_len *= s.cycle_mult;
    warmup = std::int64_t(double(cycle_len) * double(s.warmup_steps) / double(s.cycle_steps));
    if (cycle_len <= 0) throw Error("value", "lr_at: cycle length overflow");
  }
  if (warmup > 0 && pos < warmup) return s.max_lr * double(pos) / double(warmup);
  const double denom = double(cycle_len - 1 - warmup);
  const double phase = denom > 0 ? double(pos - warmup) / denom : 0.0;
  return s.min_lr + 0.5 * (s.max_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * phase));
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay and bias-corrected moments.
// ---------------------------------------------------------------------------

template <class Scalar>
class AdamW {
 public:
  AdamW(Scalar beta1, Scalar beta2, Scalar eps, Scalar weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void init(const ParamSet<Scalar>& params) {
    m_.clear();
    v_.clear();
    for (int i = 0; i < params.size(); ++i) {
      const auto [r, c] = params.shape(i);
      m_.push_back(MatX<Scalar>::Zero(r, c));
      v_.push_back(MatX<Scalar>::Zero(r, c));
    }
    step_ = 0;
  }

  /// One update. Decay is applied directly to the parameters, not through
  /// the moments.
  void step(ParamSet<Scalar>& params, const std::vector<MatX<Scalar>>& grads, Scalar lr) {
    if (int(grads.size()) != params.size())
      throw Error("value", "adamw: gradient list does not match the parameter set");
    ++step_;
    const Scalar bc1 = Scalar(1) - std::pow(beta1_, Scalar(step_));
    const Scalar bc2 = Scalar(1) - std::pow(beta2_, Scalar(step_));
    for (int i = 0; i < params.size(); ++i) {
      auto& m = m_[i];
      auto& v = v_[i];
      const auto& g = grads[i];
      m = beta1_ * m + (Scalar(1) - beta1_) * g;
      v = beta2_ * v + (Scalar(1) - beta2_) * g.cwiseProduct(g);
      MatX<Scalar> update =
          ((m / bc1).array() / ((v / bc2).array().sqrt() + eps_)).matrix();
      if (weight_decay_ != Scalar(0)) update += weight_decay_ * params.value(i);
      params.value(i) -= lr * update;
    }
  }

  std::int64_t step_count() const { return step_; }
  const std::vector<MatX<Scalar>>& first_moments() const { return m_; }
  const std::vector<MatX<Scalar>>& second_moments() const { return v_; }
  void restore(std::vector<MatX<Scalar>> m, std::vector<MatX<Scalar>> v, std::int64_t step) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_ = step;
  }

 private:
  Scalar beta1_, beta2_, eps_, weight_decay_;
  std::vector<MatX<Scalar>> m_, v_;
  std::int64_t step_ = 0;
};

/// Global-norm gradient clipping; returns the pre-clip norm.
template <class Scalar>
Scalar clip_gradients(std::vector<MatX<Scalar>>& grads, Scalar max_norm) {
  Scalar sq = 0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const Scalar norm = std::sqrt(sq);
  if (max_norm > Scalar(0) && norm > max_norm) {
    const Scalar s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Task sampling over the four tasks.
// ---------------------------------------------------------------------------

enum class Task { reconstruction = 0, interpolation = 1, forecasting = 2, crossmodal = 3 };

template <class Scalar>
struct TaskSampler {
  std::vector<double> weights = {0.2, 0.2, 0.5, 0.1};
  int queries_per_modality = 32;
  std::vector<int> input_set;  // catalog indices usable as inputs

  void validate(int n_modalities) const {
    if (weights.size() != 4) throw Error("value", "task sampler: need 4 weights");
    double sum = 0;
    for (double w : weights) {
      if (w < 0) throw Error("value", "task sampler: negative weight");
      sum += w;
    }
    if (sum <= 0) throw Error("value", "task sampler: weights sum to zero");
    for (int m : input_set)
      if (m < 0 || m >= n_modalities) throw Error("value", "task sampler: bad input set");
  }
};

namespace traindetail {

inline std::vector<int> sorted_sample(Rng& rng, int n, int k) {
  auto idx = rng.sample_without_replacement(n, std::min(n, k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace traindetail

/// Draws one (context, queries, targets) instance from the training split.
/// Infeasible tasks for the drawn configuration (cross-modal with a single
/// input modality, interpolation with no unseen locations) are excluded
/// before the draw.
template <class Scalar>
TaskInstance<Scalar> sample_task(const FieldDataset<Scalar>& ds, const TaskSampler<Scalar>& s,
                                 Rng& rng) {
  const int M = ds.n_modalities();
  s.validate(M);
  std::vector<int> input_set = s.input_set;
  if (input_set.empty())
    for (int m = 0; m < M; ++m) input_set.push_back(m);

  std::vector<double> w = s.weights;
  if (input_set.size() < 2) w[int(Task::crossmodal)] = 0;
  bool any_complement = false;
  for (int m : input_set)
    if (int(ds.masks.sensors[m].size()) < ds.x_points()) any_complement = true;
  if (!any_complement) w[int(Task::interpolation)] = 0;
  double wsum = w[0] + w[1] + w[2] + w[3];
  if (wsum <= 0) throw Error("infeasible", "sample_task: no feasible task for this dataset");

  const int window = int(rng.uniform_int(std::uint64_t(ds.train_windows)));
  double u = rng.uniform() * wsum;
  int task = 0;
  for (; task < 3; ++task) {
    if (u < w[task]) break;
    u -= w[task];
  }

  TaskInstance<Scalar> inst;
  inst.context = context_for_window(ds, window, input_set);
  inst.queries.locations.resize(M);
  inst.queries.supervised.assign(M, 0);
  inst.targets.resize(M);
  const int t_in = ds.t_in_index(window);
  const int horizon = std::max(1, ds.horizon_steps);

  auto fill_queries = [&](int m, const std::vector<int>& idx, int t_idx) {
    inst.queries.locations[m] = ds.normalized_coords(idx);
    inst.targets[m] = ds.values_at(m, idx, t_idx);
    inst.queries.supervised[m] = 1;
  };

  switch (Task(task)) {
    case Task::reconstruction: {
      inst.queries.dt = 0;
      for (int m : input_set) fill_queries(m, ds.masks.sensors[m], t_in);
      break;
    }
    case Task::interpolation: {
      inst.queries.dt = 0;
      for (int m : input_set) {
        std::vector<char> is_sensor(ds.x_points(), 0);
        for (int sidx : ds.masks.sensors[m]) is_sensor[sidx] = 1;
        std::vector<int> complement;
        for (int i = 0; i < ds.x_points(); ++i)
          if (!is_sensor[i]) complement.push_back(i);
        if (complement.empty()) continue;
        auto pick = traindetail::sorted_sample(rng, int(complement.size()),
                                               s.queries_per_modality);
        std::vector<int> idx;
        for (int p : pick) idx.push_back(complement[p]);
        fill_queries(m, idx, t_in);
      }
      break;
    }
    case Task::forecasting: {
      const int dt = 1 + int(rng.uniform_int(std::uint64_t(horizon)));
      inst.queries.dt = Scalar(dt);
      for (int m = 0; m < M; ++m) {
        auto idx = traindetail::sorted_sample(rng, ds.x_points(), s.queries_per_modality);
        fill_queries(m, idx, t_in + dt);
      }
      break;
    }
    case Task::crossmodal: {
      const int drop = input_set[rng.uniform_int(input_set.size())];
      inst.context.presence[drop] = 0;
      inst.context.observations[drop].locations.resize(0, 1);
      inst.context.observations[drop].values.resize(0);
      inst.queries.dt = 0;
      auto idx = traindetail::sorted_sample(rng, ds.x_points(), s.queries_per_modality);
      fill_queries(drop, idx, t_in);
      break;
    }
  }
  inst.queries.dt_norm = Scalar(inst.queries.dt) / Scalar(horizon);
  return inst;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::int64_t step = 0;
  double lr = 0;
  double train_loss = 0;
  std::vector<double> val_rmse;  // per modality, filled on validation steps
};

/// Deterministic forecast evaluation at the maximum lead over evenly spaced
/// validation windows; returns per-modality RMSE in physical units.
template <class Scalar>
std::vector<double> validation_rmse(const OmniFieldModel<Scalar>& model,
                                    const FieldDataset<Scalar>& ds,
                                    const std::vector<int>& input_set, int max_windows) {
  const int M = ds.n_modalities();
  const int n_val = ds.n_windows - ds.train_windows;
  if (n_val < 1) throw Error("value", "validation: no validation windows");
  const int take = std::min(max_windows, n_val);
  std::vector<int> grid_idx(ds.x_points());
  for (int i = 0; i < ds.x_points(); ++i) grid_idx[i] = i;

  std::vector<double> sq(M, 0.0);
  std::vector<std::int64_t> count(M, 0);
  const int dt = std::max(1, ds.horizon_steps);
  for (int i = 0; i < take; ++i) {
    const int w = ds.train_windows + std::int64_t(i) * n_val / take;
    if (ds.t_in_index(w) + dt >= ds.t_points()) continue;
    auto ctx = context_for_window(ds, w, input_set);
    QuerySet<Scalar> q;
    q.locations.assign(M, ds.normalized_coords(grid_idx));
    q.supervised.assign(M, 1);
    q.dt = Scalar(dt);
    q.dt_norm = Scalar(1);
    ag::Tape<Scalar> tape;
    auto b = model.bind(tape);
    auto preds = model.forward(b, ctx, q);
    for (int m = 0; m < M; ++m) {
      const VecX<Scalar> truth = ds.values_at(m, grid_idx, ds.t_in_index(w) + dt);
      for (Index r = 0; r < truth.size(); ++r) {
        const double p = ds.denorm_value(m, preds[m].value(r, 0));
        const double t = ds.denorm_value(m, truth(r));
        sq[m] += (p - t) * (p - t);
        ++count[m];
      }
    }
  }
  std::vector<double> rmse(M, 0.0);
  for (int m = 0; m < M; ++m) rmse[m] = count[m] ? std::sqrt(sq[m] / double(count[m])) : 0.0;
  return rmse;
}

template <class Scalar>
class Trainer {
 public:
  Trainer(OmniFieldModel<Scalar>& model, const FieldDataset<Scalar>& ds, TrainSettings settings,
          std::uint64_t seed, std::vector<int> input_set = {})
      : model_(model),
        ds_(ds),
        settings_(std::move(settings)),
        seed_(seed),
        opt_(Scalar(settings_.beta1), Scalar(settings_.beta2), Scalar(settings_.eps),
             Scalar(settings_.weight_decay)),
        input_set_(std::move(input_set)) {
    settings_.validate();
    if (input_set_.empty())
      for (int m = 0; m < ds.n_modalities(); ++m) input_set_.push_back(m);
    opt_.init(model.params());
    sampler_.weights = settings_.task_weights;
    sampler_.queries_per_modality = settings_.queries_per_modality;
    sampler_.input_set = input_set_;
  }

  std::int64_t step() const { return step_; }
  AdamW<Scalar>& optimizer() { return opt_; }
  const std::vector<int>& input_set() const { return input_set_; }
  const std::vector<double>& best_val() const { return best_val_; }
  double best_val_mean() const { return best_val_mean_; }
  std::int64_t best_step() const { return best_step_; }
  const std::vector<MatX<Scalar>>& best_params() const { return best_params_; }
  void set_step(std::int64_t s) { step_ = s; }

  /// Runs optimizer steps up to `until_step` (exclusive upper bound on the
  /// completed-step counter), invoking `sink` once per step.
  void run(std::int64_t until_step, const std::function<void(const MetricsRow&)>& sink = {}) {
    while (step_ < until_step) {
      MetricsRow row = one_step();
      const bool validate_now =
          settings_.val_every > 0 &&
          (step_ % settings_.val_every == 0 || step_ == until_step);
      if (validate_now) {
        row.val_rmse = validation_rmse(model_, ds_, input_set_, settings_.val_windows);
        double mean = 0;
        for (double r : row.val_rmse) mean += r;
        mean /= double(row.val_rmse.size());
        if (mean < best_val_mean_) {
          best_val_mean_ = mean;
          best_val_ = row.val_rmse;
          best_step_ = step_;
          best_params_.clear();
          for (int i = 0; i < model_.params().size(); ++i)
            best_params_.push_back(model_.params().value(i));
        }
      }
      if (sink) sink(row);
    }
  }

 private:
  MetricsRow one_step() {
    const double lr = lr_at(step_, settings_.schedule);
    ag::Tape<Scalar> tape;
    auto binding = model_.bind(tape);
    ag::Tensor<Scalar> loss = ag::scalar_constant<Scalar>(0);
    for (int i = 0; i < settings_.batch_size; ++i) {
      const std::uint64_t instance = std::uint64_t(step_) * settings_.batch_size + i;
      Rng rng(derive_seed(seed_, "sample", instance));
      auto inst = sample_task(ds_, sampler_, rng);
      if (settings_.noise_sigma > 0 && inst.context.n_present() >= 2) {
        Rng crng(derive_seed(seed_, "corrupt", instance));
        corrupt(inst.context,
                NoiseSpec<Scalar>{Scalar(settings_.noise_sigma), settings_.noise_max_corrupted},
                crng);
      }
      auto preds = model_.forward(binding, inst.context, inst.queries);
      loss = ag::add(loss, masked_loss<Scalar>(preds, inst.targets, inst.queries.supervised));
    }
    loss = ag::scale(loss, Scalar(1) / Scalar(settings_.batch_size));

    const double loss_value = double(loss.scalar());
    if (!std::isfinite(loss_value))
      throw Error("numeric", "non-finite loss at step " + std::to_string(step_ + 1));

    if (loss.attached()) {
      tape.backward(loss);
      auto grads = binding.parameter_grads();
      bool finite = true;
      for (const auto& g : grads)
        if (!g.allFinite()) finite = false;
      if (!finite) {
        if (settings_.nonfinite_grad == "abort")
          throw Error("numeric", "non-finite gradient at step " + std::to_string(step_ + 1));
        std::cerr << "warning: skipping step " << (step_ + 1) << ": non-finite gradient\n";
      } else {
        clip_gradients<Scalar>(grads, Scalar(settings_.clip_norm));
        opt_.step(model_.params(), grads, Scalar(lr));
      }
    }
    ++step_;
    return MetricsRow{step_, lr, loss_value, {}};
  }

  OmniFieldModel<Scalar>& model_;
  const FieldDataset<Scalar>& ds_;
  TrainSettings settings_;
  std::uint64_t seed_;
  AdamW<Scalar> opt_;
  std::vector<int> input_set_;
  TaskSampler<Scalar> sampler_;
  std::int64_t step_ = 0;
  std::vector<double> best_val_;
  double best_val_mean_ = std::numeric_limits<double>::infinity();
  std::int64_t best_step_ = -1;
  std::vector<MatX<Scalar>> best_params_;
};

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

template <class Scalar>
void save_checkpoint(const std::filesystem::path& dir, const OmniFieldModel<Scalar>& model,
                     const RunConfig& cfg, const std::vector<ZScoreStats<Scalar>>& stats,
                     std::int64_t step, const AdamW<Scalar>* opt = nullptr,
                     const std::vector<double>& best_val = {}, bool force = true) {
  ContainerWriter w(dir, force);
  w.set_kind("checkpoint");
  w.set_fingerprint(config_fingerprint(cfg));
  for (int i = 0; i < model.params().size(); ++i)
    w.add_array("param." + model.params().name(i), model.params().value(i));
  if (opt) {
    for (int i = 0; i < model.params().size(); ++i) {
      w.add_array("adam_m." + model.params().name(i), opt->first_moments()[i]);
      w.add_array("adam_v." + model.params().name(i), opt->second_moments()[i]);
    }
  }
  w.add_array("encoder.space.freq", model.space_encoder().frequency_matrix());
  w.add_array("encoder.time.freq", model.time_encoder().frequency_matrix());
  MatX<Scalar> stat_mat(stats.size(), 2);
  for (std::size_t m = 0; m < stats.size(); ++m) {
    stat_mat(m, 0) = stats[m].mean;
    stat_mat(m, 1) = stats[m].std;
  }
  w.add_array("normalization", stat_mat);
  nlohmann::json meta;
  meta["step"] = step;
  meta["config"] = cfg;
  meta["best_val_rmse"] = best_val;
  meta["has_optimizer_state"] = opt != nullptr;
  meta["space_encoder"] = {{"kind", to_string(model.space_encoder().kind())},
                           {"sigma", double(model.space_encoder().sigma())},
                           {"seed", model.space_encoder().seed()}};
  meta["time_encoder"] = {{"kind", to_string(model.time_encoder().kind())},
                          {"sigma", double(model.time_encoder().sigma())},
                          {"seed", model.time_encoder().seed()}};
  w.set_metadata(meta);
  w.finalize();
}

template <class Scalar>
struct LoadedCheckpoint {
  RunConfig config;
  std::int64_t step = 0;
  std::vector<double> best_val;
  bool has_optimizer_state = false;
  std::unique_ptr<OmniFieldModel<Scalar>> model;
  std::vector<ZScoreStats<Scalar>> stats;
  std::vector<MatX<Scalar>> adam_m, adam_v;
};

template <class Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& dir) {
  ContainerReader r(dir);
  if (r.kind() != "checkpoint") throw Error("io", "not a checkpoint container: " + dir.string());
  LoadedCheckpoint<Scalar> out;
  out.config = r.metadata().at("config").get<RunConfig>();
  out.step = r.metadata().at("step").get<std::int64_t>();
  out.best_val = r.metadata().value("best_val_rmse", std::vector<double>{});
  out.has_optimizer_state = r.metadata().value("has_optimizer_state", false);

  out.model = std::make_unique<OmniFieldModel<Scalar>>(out.config.model, out.config.seed);
  auto& params = out.model->params();
  for (int i = 0; i < params.size(); ++i) {
    MatX<Scalar> v = r.template array<Scalar>("param." + params.name(i));
    if (v.rows() != params.value(i).rows() || v.cols() != params.value(i).cols())
      throw Error("io", "checkpoint parameter shape mismatch at " + params.name(i));
    params.value(i) = std::move(v);
  }
  const auto& se = r.metadata().at("space_encoder");
  const auto& te = r.metadata().at("time_encoder");
  auto kind_of = [](const std::string& s) {
    return s == "gaussian" ? EncoderKind::gaussian : EncoderKind::fixed_log;
  };
  out.model->set_encoders(
      GffEncoder<Scalar>::from_matrix(r.template array<Scalar>("encoder.space.freq"),
                                      Scalar(se.at("sigma").get<double>()),
                                      se.at("seed").get<std::uint64_t>(),
                                      kind_of(se.at("kind").get<std::string>())),
      GffEncoder<Scalar>::from_matrix(r.template array<Scalar>("encoder.time.freq"),
                                      Scalar(te.at("sigma").get<double>()),
                                      te.at("seed").get<std::uint64_t>(),
                                      kind_of(te.at("kind").get<std::string>())));
  MatX<Scalar> stat_mat = r.template array<Scalar>("normalization");
  out.stats.resize(stat_mat.rows());
  for (Index m = 0; m < stat_mat.rows(); ++m)
    out.stats[m] = ZScoreStats<Scalar>{stat_mat(m, 0), stat_mat(m, 1)};
  if (out.has_optimizer_state) {
    for (int i = 0; i < params.size(); ++i) {
      out.adam_m.push_back(r.template array<Scalar>("adam_m." + params.name(i)));
      out.adam_v.push_back(r.template array<Scalar>("adam_v." + params.name(i)));
    }
  }
  return out;
}

}  // namespace omnifield
