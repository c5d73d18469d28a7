// omnifield: conditioned-neural-field experiments on synthetic multimodal
// fields. Subcommands: gen-data, train, eval, ablate, noise, spectrum,
// fusion. Every command accepts --seed and is bitwise reproducible under it;
// OMNIFIELD_THREADS caps sweep parallelism.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "omnifield/config.hpp"
#include "omnifield/dataset_io.hpp"
#include "omnifield/evaluation.hpp"
#include "omnifield/model.hpp"
#include "omnifield/training.hpp"

namespace fs = std::filesystem;
using namespace omnifield;

namespace {

int exit_code_for(const std::string& category) {
  if (category == "config") return 3;
  if (category == "io") return 4;
  if (category == "shape" || category == "value") return 5;
  if (category == "infeasible") return 6;
  if (category == "numeric") return 7;
  if (category == "state") return 8;
  return 1;
}

struct CommonOpts {
  std::string preset = "desk-synthetic";
  std::string config_path;
  std::int64_t seed = -1;  // -1: keep config value
  int steps = -1;
  std::string precision;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_steps = true) {
  cmd->add_option("--preset", o.preset, "named preset (desk-synthetic, climsim-thw, epa-aqs)");
  cmd->add_option("--config", o.config_path, "JSON config file layered over the preset");
  cmd->add_option("--seed", o.seed, "master seed (overrides config)");
  if (with_steps) cmd->add_option("--steps", o.steps, "optimizer steps (overrides config)");
  cmd->add_option("--precision", o.precision, "f64 or f32 (overrides config)");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg = make_preset(o.preset);
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw Error("io", "cannot read config file " + o.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw Error("config", std::string("bad config JSON: ") + e.what());
    }
    j.get_to(cfg);  // layered: only keys present in the file are overwritten
  }
  if (o.seed >= 0) cfg.seed = std::uint64_t(o.seed);
  if (o.steps > 0) cfg.train.steps = o.steps;
  if (!o.precision.empty()) cfg.precision = o.precision;
  cfg.validate();
  return cfg;
}

template <class Scalar>
SyntheticConfig<Scalar> synthetic_config(const DataSettings& d) {
  SyntheticConfig<Scalar> s;
  s.s1.n_components = d.s1_components;
  s.s1.noise = d.s1_noise;
  s.s1.x_points = d.x_points;
  s.s1.t_points = d.t_points;
  s.s1.x_extent = Scalar(d.x_extent);
  s.s1.t_extent = Scalar(d.t_extent);
  s.s2.n_oscillators = d.s2_oscillators;
  s.s2.coupling = Scalar(d.coupling);
  if (d.integrator != "rk4" && d.integrator != "euler")
    throw Error("config", "integrator must be euler or rk4");
  s.s2.integrator = d.integrator == "rk4" ? OdeIntegrator::rk4 : OdeIntegrator::euler;
  s.window = WindowSpec{d.window_input, d.window_horizon, d.window_stride};
  s.train_fraction = Scalar(d.train_fraction);
  s.sparsity = d.sparsity;
  s.horizon_steps = d.horizon_steps;
  s.normalize = d.normalize;
  return s;
}

void print_hyperparameters(const RunConfig& cfg) {
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  std::cout << "preset            " << cfg.preset << "\n"
            << "precision         " << cfg.precision << "\n"
            << "modalities        ";
  for (const auto& name : m.modalities) std::cout << name << " ";
  std::cout << "\n"
            << "stages (ICMR L)   " << m.stages << "\n"
            << "latent dim        " << m.latent_dim << "\n"
            << "latents per stage " << m.n_latents << "\n"
            << "trunk blocks      " << m.trunk_blocks << " (SA+FF each)\n"
            << "cross heads/dim   " << m.cross_heads << "/" << m.head_dim << "\n"
            << "self heads/dim    " << m.self_heads << "/" << m.head_dim << "\n"
            << "ff multiplier     " << m.ff_mult << " (GEGLU)\n"
            << "input mlp         " << (1 + m.d_spatial) << "->" << m.input_mlp_dim
            << ", then concat pos enc\n"
            << "space encoding    " << m.space_bands << " bands (sin+cos="
            << 2 * m.space_bands << "); scale " << m.space_sigma
            << (m.use_gff ? " (GFF)" : " (fixed log bands)") << "\n"
            << "time encoding     " << m.time_bands << " bands (sin+cos=" << 2 * m.time_bands
            << "); scale " << m.time_sigma << "\n"
            << "query combine     " << m.query_combine << "\n"
            << "optimizer         AdamW (beta1=" << t.beta1 << ", beta2=" << t.beta2 << ")\n"
            << "weight decay      " << t.weight_decay << "\n"
            << "lr schedule       cosine warmup restarts, max " << t.schedule.max_lr
            << " / min " << t.schedule.min_lr << ", warmup " << t.schedule.warmup_steps
            << ", cycle " << t.schedule.cycle_steps << "\n"
            << "batch size        " << t.batch_size << "\n"
            << "steps             " << t.steps << "\n";
}

void write_run_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                        const nlohmann::json& extra) {
  nlohmann::json j;
  j["command"] = command;
  j["config_fingerprint"] = config_fingerprint(cfg);
  j["seed"] = cfg.seed;
  j["config"] = cfg;
  j["results"] = extra;
  std::ofstream out(dir / "run.json", std::ios::trunc);
  out << j.dump(2) << "\n";
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOpts& opts, const std::string& out_dir, bool force,
                 const std::string& sparsity) {
  RunConfig cfg = resolve_config(opts);
  if (!sparsity.empty()) cfg.data.sparsity = sparsity;
  auto scfg = synthetic_config<double>(cfg.data);
  auto ds = generate_synthetic_dataset(scfg, cfg.seed);
  save_dataset(out_dir, ds, config_fingerprint(cfg), force);
  std::cout << "dataset written to " << out_dir << "\n"
            << "windows             " << ds.n_windows << " (" << ds.train_windows
            << " train / " << (ds.n_windows - ds.train_windows) << " val)\n"
            << "grid                " << ds.x_points() << " x " << ds.t_points() << "\n";
  for (int m = 0; m < ds.n_modalities(); ++m)
    std::cout << "sensors " << ds.modalities[m] << "          "
              << ds.masks.sensors[m].size() << "\n";
  std::cout << "sensor union        " << ds.masks.union_count() << "\n"
            << "full overlap        " << ds.masks.intersection().size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

std::vector<int> parse_input_set(const std::string& csv, const std::vector<std::string>& names) {
  std::vector<int> out;
  if (csv.empty()) return out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    const std::string tok =
        csv.substr(pos, comma == std::string::npos ? csv.size() - pos : comma - pos);
    bool found = false;
    for (std::size_t m = 0; m < names.size(); ++m)
      if (names[m] == tok) {
        out.push_back(int(m));
        found = true;
      }
    if (!found) throw Error("config", "unknown modality in --input-set: " + tok);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class Scalar>
int run_train(RunConfig cfg, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume, const std::string& input_set_csv, bool print_hp) {
  auto ds = load_dataset<Scalar>(data_dir);
  if (cfg.model.modalities != ds.modalities) {
    if (cfg.preset == "desk-synthetic")
      cfg.model.modalities = ds.modalities;  // the desk preset adapts to the data
    else
      throw Error("config", "model modality catalog does not match the dataset");
  }
  if (print_hp) print_hyperparameters(cfg);

  fs::create_directories(out_dir);
  const auto input_set = parse_input_set(input_set_csv, ds.modalities);

  std::unique_ptr<OmniFieldModel<Scalar>> model;
  std::int64_t start_step = 0;
  std::vector<MatX<Scalar>> adam_m, adam_v;
  if (!resume.empty()) {
    auto loaded = load_checkpoint<Scalar>(resume);
    if (!loaded.has_optimizer_state)
      throw Error("io", "checkpoint has no optimizer state; cannot resume");
    const int target_steps = cfg.train.steps;
    cfg = loaded.config;
    cfg.train.steps = std::max(target_steps, int(loaded.step));
    model = std::move(loaded.model);
    start_step = loaded.step;
    adam_m = std::move(loaded.adam_m);
    adam_v = std::move(loaded.adam_v);
  } else {
    model = std::make_unique<OmniFieldModel<Scalar>>(cfg.model,
                                                     derive_seed(cfg.seed, "model-seed"));
  }
  std::cout << "parameters        " << model->parameter_count() << "\n";

  Trainer<Scalar> trainer(*model, ds, cfg.train, cfg.seed, input_set);
  if (start_step > 0) {
    trainer.optimizer().restore(std::move(adam_m), std::move(adam_v), start_step);
    trainer.set_step(start_step);
  }

  const fs::path metrics_path = fs::path(out_dir) / "metrics.csv";
  const bool append = start_step > 0 && fs::exists(metrics_path);
  std::ofstream csv(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw Error("io", "cannot write " + metrics_path.string());
  if (!append) {
    csv << "step,lr,train_loss";
    for (const auto& m : ds.modalities) csv << ",val_rmse_" << m;
    csv << "\n";
  }

  trainer.run(cfg.train.steps, [&](const MetricsRow& r) {
    csv << r.step << "," << format_double(r.lr) << "," << format_double(r.train_loss);
    for (std::size_t m = 0; m < ds.modalities.size(); ++m)
      csv << "," << (m < r.val_rmse.size() ? format_double(r.val_rmse[m]) : std::string());
    csv << "\n";
    if (r.step % 200 == 0 || !r.val_rmse.empty()) {
      std::cout << "step " << r.step << " loss " << r.train_loss;
      if (!r.val_rmse.empty()) {
        std::cout << " val";
        for (double v : r.val_rmse) std::cout << " " << v;
      }
      std::cout << "\n";
    }
  });
  csv.close();

  if (trainer.best_step() >= 0 && !trainer.best_params().empty()) {
    OmniFieldModel<Scalar> best(cfg.model, derive_seed(cfg.seed, "model-seed"));
    for (int i = 0; i < best.params().size(); ++i)
      best.params().value(i) = trainer.best_params()[i];
    best.set_encoders(model->space_encoder(), model->time_encoder());
    save_checkpoint<Scalar>(fs::path(out_dir) / "checkpoint-best", best, cfg, ds.stats,
                            trainer.best_step(), nullptr, trainer.best_val());
  }
  save_checkpoint<Scalar>(fs::path(out_dir) / "checkpoint-final", *model, cfg, ds.stats,
                          trainer.step(), &trainer.optimizer(), trainer.best_val());
  std::cout << "final step " << trainer.step();
  if (trainer.best_step() >= 0)
    std::cout << "; best val mean RMSE " << trainer.best_val_mean() << " at step "
              << trainer.best_step();
  std::cout << "\ncheckpoints written to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

template <class Scalar>
int run_eval(const std::string& ckpt_dir, const std::string& data_dir, std::string task,
             const std::string& strategy_name, std::string split_name,
             const std::string& out_dir, int max_windows, const std::string& dump_grids,
             std::int64_t seed_override) {
  if (task == "crossmodal") task = "cross-modal";
  if (task != "reconstruction" && task != "interpolation" && task != "forecasting" &&
      task != "cross-modal")
    throw Error("config",
                "unknown task: " + task +
                    " (known: reconstruction, interpolation, forecasting, cross-modal)");
  auto loaded = load_checkpoint<Scalar>(ckpt_dir);
  auto ds = load_dataset<Scalar>(data_dir);
  if (loaded.config.model.modalities != ds.modalities)
    throw Error("config", "checkpoint modalities do not match the dataset");
  if (seed_override >= 0) loaded.config.seed = std::uint64_t(seed_override);
  // evaluation uses the checkpoint's stored normalization statistics
  auto data = ds;
  data.stats = loaded.stats;

  Strategy strategy =
      strategy_name.empty() ? Strategy::icmr : strategy_from_string(strategy_name);
  data = apply_strategy(data, strategy);
  if (split_name.empty())
    split_name = strategy == Strategy::co_location ? "intersection" : "union";
  const QuerySplit split = split_from_string(split_name);

  std::vector<int> input_set;
  for (int m = 0; m < ds.n_modalities(); ++m) input_set.push_back(m);
  auto rmse = evaluate_task(*loaded.model, data, input_set, task, split, max_windows);

  fs::create_directories(out_dir);
  auto csv = open_csv(fs::path(out_dir) / "eval.csv");
  csv << "task,strategy,split,modality,rmse_physical\n";
  for (const auto& [name, value] : rmse)
    csv << task << "," << to_string(strategy) << "," << split_name << "," << name << ","
        << format_double(value) << "\n";

  nlohmann::json results;
  results["task"] = task;
  results["strategy"] = to_string(strategy);
  results["split"] = split_name;
  results["rmse"] = rmse;
  write_run_manifest(out_dir, "eval", loaded.config, results);
  for (const auto& [name, value] : rmse)
    std::cout << task << " " << name << " RMSE " << value << "\n";

  if (!dump_grids.empty()) {
    // Forecast grids over the validation windows at the maximum lead: one
    // column per window, one row per grid point.
    const int dt = std::max(1, data.horizon_steps);
    const int n_val = data.n_windows - data.train_windows;
    const int take = std::min(max_windows, n_val);
    std::vector<int> grid_idx(data.x_points());
    for (int i = 0; i < data.x_points(); ++i) grid_idx[i] = i;
    std::vector<MatX<Scalar>> pred(data.n_modalities()), truth(data.n_modalities());
    for (int m = 0; m < data.n_modalities(); ++m) {
      pred[m].resize(data.x_points(), take);
      truth[m].resize(data.x_points(), take);
    }
    for (int i = 0; i < take; ++i) {
      const int w = data.train_windows + int(std::int64_t(i) * n_val / take);
      auto ctx = context_for_window(data, w, input_set);
      QuerySet<Scalar> q;
      q.locations.assign(data.n_modalities(), data.normalized_coords(grid_idx));
      q.supervised.assign(data.n_modalities(), 1);
      q.dt = Scalar(dt);
      q.dt_norm = Scalar(1);
      ag::Tape<Scalar> tape;
      auto b = loaded.model->bind(tape);
      auto preds = loaded.model->forward(b, ctx, q);
      for (int m = 0; m < data.n_modalities(); ++m) {
        for (int r = 0; r < data.x_points(); ++r) {
          pred[m](r, i) = Scalar(data.denorm_value(m, preds[m].value(r, 0)));
          truth[m](r, i) = data.fields[m](r, data.t_in_index(w) + dt);
        }
      }
    }
    ContainerWriter w(dump_grids, true);
    w.set_kind("grids");
    w.set_fingerprint(config_fingerprint(loaded.config));
    for (int m = 0; m < data.n_modalities(); ++m) {
      w.add_array("pred_" + data.modalities[m], pred[m]);
      w.add_array("truth_" + data.modalities[m], truth[m]);
    }
    w.finalize();
    std::cout << "grids written to " << dump_grids << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report harness commands
// ---------------------------------------------------------------------------

template <class Scalar>
int run_ablate(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
               int n_seeds) {
  auto ds = load_dataset<Scalar>(data_dir);
  ModelSettings base = cfg.model;
  base.modalities = ds.modalities;
  auto rows = run_ablation(ds, base, cfg.train, cfg.seed, n_seeds);
  fs::create_directories(out_dir);
  auto csv = open_csv(fs::path(out_dir) / "ablation.csv");
  csv << "gff,sin_init,icmr,seed";
  for (const auto& m : ds.modalities) csv << ",val_rmse_" << m;
  csv << ",mean_rmse,fingerprint\n";
  for (const auto& r : rows) {
    csv << (r.gff ? 1 : 0) << "," << (r.sin_init ? 1 : 0) << "," << (r.icmr ? 1 : 0) << ","
        << r.seed;
    for (double v : r.val_rmse) csv << "," << format_double(v);
    csv << "," << format_double(r.mean_rmse) << "," << r.fingerprint << "\n";
  }
  nlohmann::json results;
  results["rows"] = rows.size();
  results["toggle_rows"] = ablation_toggle_rows().size();
  write_run_manifest(out_dir, "ablate", cfg, results);
  std::cout << "ablation rows " << rows.size() << " -> " << out_dir << "/ablation.csv\n";
  return 0;
}

template <class Scalar>
int run_noise(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
              int n_seeds, std::vector<double> sigmas) {
  auto ds = load_dataset<Scalar>(data_dir);
  ModelSettings base = cfg.model;
  base.modalities = ds.modalities;
  if (sigmas.empty()) sigmas = {0.0, 0.5, 1.0, 2.0};
  auto rows = noise_sweep(ds, base, cfg.train, sigmas, cfg.seed, n_seeds);
  fs::create_directories(out_dir);
  auto csv = open_csv(fs::path(out_dir) / "noise.csv");
  csv << "variant,sigma,seed";
  for (const auto& m : ds.modalities) csv << ",val_rmse_" << m;
  csv << ",mean_rmse\n";
  for (const auto& r : rows) {
    csv << r.variant << "," << format_double(r.sigma) << "," << r.seed;
    for (double v : r.val_rmse) csv << "," << format_double(v);
    csv << "," << format_double(r.mean_rmse) << "\n";
  }
  nlohmann::json results;
  results["rows"] = rows.size();
  results["sigmas"] = sigmas;
  write_run_manifest(out_dir, "noise", cfg, results);
  std::cout << "noise rows " << rows.size() << " -> " << out_dir << "/noise.csv\n";
  return 0;
}

template <class Scalar>
int run_fusion(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
               int n_seeds) {
  auto ds = load_dataset<Scalar>(data_dir);
  ModelSettings base = cfg.model;
  base.modalities = ds.modalities;
  std::vector<std::vector<int>> input_sets;
  for (int m = 0; m < ds.n_modalities(); ++m) input_sets.push_back({m});
  std::vector<int> all;
  for (int m = 0; m < ds.n_modalities(); ++m) all.push_back(m);
  input_sets.push_back(all);
  auto rows = compare_fusion_strategies(ds, base, cfg.train, input_sets, cfg.seed, n_seeds);
  fs::create_directories(out_dir);
  auto csv = open_csv(fs::path(out_dir) / "fusion.csv");
  csv << "strategy,input_set,test_split,seed";
  for (const auto& m : ds.modalities) csv << ",rmse_" << m;
  csv << "\n";
  for (const auto& r : rows) {
    csv << to_string(r.strategy) << "," << r.input_label << "," << r.test_split << ","
        << r.seed;
    for (const auto& m : ds.modalities)
      csv << "," << format_double(r.rmse.count(m) ? r.rmse.at(m) : 0.0);
    csv << "\n";
  }
  nlohmann::json results;
  results["rows"] = rows.size();
  write_run_manifest(out_dir, "fusion", cfg, results);
  std::cout << "fusion rows " << rows.size() << " -> " << out_dir << "/fusion.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

std::pair<std::string, std::string> parse_array_ref(const std::string& ref) {
  const auto pos = ref.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 >= ref.size())
    throw Error("config", "array reference must look like <container-dir>:<array>: " + ref);
  return {ref.substr(0, pos), ref.substr(pos + 1)};
}

void write_pgm_heatmap(const fs::path& path, const MatX<double>& grid) {
  const double lo = grid.minCoeff(), hi = grid.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << grid.cols() << " " << grid.rows() << "\n255\n";
  for (Index r = 0; r < grid.rows(); ++r)
    for (Index c = 0; c < grid.cols(); ++c) {
      const auto px = static_cast<unsigned char>(255.0 * (grid(r, c) - lo) / span);
      out.write(reinterpret_cast<const char*>(&px), 1);
    }
}

int cmd_spectrum(const std::string& pred_ref, const std::string& truth_ref,
                 const std::string& out_dir, bool plot) {
  auto [pred_dir, pred_name] = parse_array_ref(pred_ref);
  auto [truth_dir, truth_name] = parse_array_ref(truth_ref);
  MatX<double> pred = ContainerReader(pred_dir).array<double>(pred_name);
  MatX<double> truth = ContainerReader(truth_dir).array<double>(truth_name);
  MatX<double> delta = power_spectrum_delta(pred, truth);
  MatX<double> sp = power_spectrum(pred);
  MatX<double> st = power_spectrum(truth);

  fs::create_directories(out_dir);
  ContainerWriter w(fs::path(out_dir) / "spectra", true);
  w.set_kind("spectra");
  w.add_array("spectrum_pred", sp);
  w.add_array("spectrum_truth", st);
  w.add_array("delta", delta);
  w.finalize();

  auto csv = open_csv(fs::path(out_dir) / "spectrum.csv");
  csv << "quantity,value\n";
  csv << "mean_abs_delta," << format_double(delta.mean()) << "\n";
  csv << "max_abs_delta," << format_double(delta.maxCoeff()) << "\n";
  csv << "dc_pred," << format_double(sp(sp.rows() / 2, sp.cols() / 2)) << "\n";
  csv << "dc_truth," << format_double(st(st.rows() / 2, st.cols() / 2)) << "\n";
  if (plot) {
    write_pgm_heatmap(fs::path(out_dir) / "spectrum_pred.pgm",
                      (sp.array() + 1e-12).log().matrix());
    write_pgm_heatmap(fs::path(out_dir) / "spectrum_truth.pgm",
                      (st.array() + 1e-12).log().matrix());
    write_pgm_heatmap(fs::path(out_dir) / "delta.pgm", delta);
  }
  std::cout << "mean |delta| " << delta.mean() << ", max |delta| " << delta.maxCoeff()
            << " -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditioned neural fields for sparse multimodal sensor data"};
  app.require_subcommand(1);

  CommonOpts gen_opts;
  std::string gen_out, gen_sparsity;
  bool gen_force = false;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multimodal dataset");
  add_common(gen, gen_opts, false);
  gen->add_option("--out", gen_out, "output container directory")->required();
  gen->add_option("--sparsity", gen_sparsity, "sensor preset (dense, sparse50, sparse30)");
  gen->add_flag("--force", gen_force, "overwrite an existing container");

  CommonOpts train_opts;
  std::string train_data, train_out, train_resume, train_input_set;
  auto* train = app.add_subcommand("train", "train a model on a dataset container");
  add_common(train, train_opts);
  train->add_option("--data", train_data, "dataset container")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", train_resume, "checkpoint-final directory to resume from");
  train->add_option("--input-set", train_input_set,
                    "comma-separated input modalities (default: all)");

  CommonOpts eval_opts;
  std::string eval_ckpt, eval_data, eval_task = "forecasting", eval_strategy, eval_split;
  std::string eval_out, eval_dump;
  int eval_windows = 32;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint container")->required();
  eval->add_option("--data", eval_data, "dataset container")->required();
  eval->add_option("--task", eval_task,
                   "reconstruction | interpolation | forecasting | cross-modal");
  eval->add_option("--strategy", eval_strategy,
                   "co-location | interpolation | mid-fusion | icmr");
  eval->add_option("--split", eval_split, "full | union | intersection");
  eval->add_option("--out", eval_out, "report directory")->required();
  eval->add_option("--windows", eval_windows, "validation windows to evaluate");
  eval->add_option("--dump-grids", eval_dump, "also write pred/truth forecast grids here");
  eval->add_option("--seed", eval_opts.seed, "seed recorded in the report");

  CommonOpts ab_opts;
  std::string ab_data, ab_out;
  int ab_seeds = 5;
  auto* ablate = app.add_subcommand("ablate", "toggle-component ablation table");
  add_common(ablate, ab_opts);
  ablate->add_option("--data", ab_data, "dataset container")->required();
  ablate->add_option("--out", ab_out, "report directory")->required();
  ablate->add_option("--seeds", ab_seeds, "seeds per toggle row");

  CommonOpts no_opts;
  std::string no_data, no_out;
  int no_seeds = 5;
  std::vector<double> no_sigmas;
  auto* noise = app.add_subcommand("noise", "train-time corruption sweep");
  add_common(noise, no_opts);
  noise->add_option("--data", no_data, "dataset container")->required();
  noise->add_option("--out", no_out, "report directory")->required();
  noise->add_option("--seeds", no_seeds, "seeds per cell");
  noise->add_option("--sigmas", no_sigmas, "noise levels (default 0,0.5,1,2)");

  CommonOpts fu_opts;
  std::string fu_data, fu_out;
  int fu_seeds = 5;
  auto* fusion = app.add_subcommand("fusion", "fusion-strategy comparison grid");
  add_common(fusion, fu_opts);
  fusion->add_option("--data", fu_data, "dataset container")->required();
  fusion->add_option("--out", fu_out, "report directory")->required();
  fusion->add_option("--seeds", fu_seeds, "seeds per cell");

  std::string sp_pred, sp_truth, sp_out;
  bool sp_plot = false;
  auto* spectrum = app.add_subcommand("spectrum", "2-d power-spectrum delta of two grids");
  spectrum->add_option("--pred", sp_pred, "<container-dir>:<array>")->required();
  spectrum->add_option("--truth", sp_truth, "<container-dir>:<array>")->required();
  spectrum->add_option("--out", sp_out, "report directory")->required();
  spectrum->add_flag("--plot", sp_plot, "also write PGM heatmaps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_opts, gen_out, gen_force, gen_sparsity);
    if (train->parsed()) {
      RunConfig cfg = resolve_config(train_opts);
      const bool print_hp = !train->get_option("--preset")->empty();
      if (cfg.precision == "f32")
        return run_train<float>(cfg, train_data, train_out, train_resume, train_input_set,
                                print_hp);
      return run_train<double>(cfg, train_data, train_out, train_resume, train_input_set,
                               print_hp);
    }
    if (eval->parsed())
      return run_eval<double>(eval_ckpt, eval_data, eval_task, eval_strategy, eval_split,
                              eval_out, eval_windows, eval_dump, eval_opts.seed);
    if (ablate->parsed()) {
      RunConfig cfg = resolve_config(ab_opts);
      if (cfg.precision == "f32") return run_ablate<float>(cfg, ab_data, ab_out, ab_seeds);
      return run_ablate<double>(cfg, ab_data, ab_out, ab_seeds);
    }
    if (noise->parsed()) {
      RunConfig cfg = resolve_config(no_opts);
      if (cfg.precision == "f32")
        return run_noise<float>(cfg, no_data, no_out, no_seeds, no_sigmas);
      return run_noise<double>(cfg, no_data, no_out, no_seeds, no_sigmas);
    }
    if (fusion->parsed()) {
      RunConfig cfg = resolve_config(fu_opts);
      if (cfg.precision == "f32") return run_fusion<float>(cfg, fu_data, fu_out, fu_seeds);
      return run_fusion<double>(cfg, fu_data, fu_out, fu_seeds);
    }
    if (spectrum->parsed()) return cmd_spectrum(sp_pred, sp_truth, sp_out, sp_plot);
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
