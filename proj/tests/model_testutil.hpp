#pragma once

// Shared model fixtures and whole-network gradient oracles (test-only).

#include <vector>

#include "omnifield/gradcheck.hpp"
#include "omnifield/model.hpp"

namespace omnifield::testing {

inline ModelSettings micro_settings() {
  ModelSettings m;
  m.modalities = {"a", "b"};
  m.d_spatial = 1;
  m.latent_dim = 8;
  m.n_latents = 4;
  m.stages = 2;
  m.stage_blocks = 1;
  m.trunk_blocks = 1;
  m.cross_heads = 2;
  m.self_heads = 2;
  m.head_dim = 4;
  m.ff_mult = 2;
  m.input_mlp_hidden = 8;
  m.input_mlp_dim = 8;
  m.space_bands = 2;
  m.time_bands = 2;
  return m;
}

inline ContextSet<double> random_context(Rng& rng, const std::vector<std::string>& names,
                                         const std::vector<int>& counts) {
  ContextSet<double> ctx;
  ctx.observations.resize(names.size());
  ctx.presence.assign(names.size(), 0);
  for (std::size_t m = 0; m < names.size(); ++m) {
    auto& obs = ctx.observations[m];
    obs.modality = names[m];
    const int n = counts[m];
    obs.locations.resize(n, 1);
    obs.values.resize(n);
    for (int i = 0; i < n; ++i) {
      obs.locations(i, 0) = rng.uniform();
      obs.values(i) = rng.normal();
    }
    ctx.presence[m] = n > 0 ? 1 : 0;
  }
  return ctx;
}

inline QuerySet<double> random_queries(Rng& rng, int n_modalities, int n_queries,
                                       double dt_norm) {
  QuerySet<double> q;
  q.locations.resize(n_modalities);
  q.supervised.assign(n_modalities, 1);
  q.dt = dt_norm;
  q.dt_norm = dt_norm;
  for (int m = 0; m < n_modalities; ++m) {
    q.locations[m].resize(n_queries, 1);
    for (int i = 0; i < n_queries; ++i) q.locations[m](i, 0) = rng.uniform();
  }
  return q;
}

inline MatX<double> forward_values(const OmniFieldModel<double>& model,
                                   const ContextSet<double>& ctx, const QuerySet<double>& q) {
  ag::Tape<double> tape;
  auto b = model.bind(tape);
  auto preds = model.forward(b, ctx, q);
  MatX<double> out(q.locations[0].rows(), model.n_modalities());
  for (int m = 0; m < model.n_modalities(); ++m) out.col(m) = preds[m].value.col(0);
  return out;
}

/// Central-difference check of the full forward + masked loss with respect
/// to every model parameter. Returns the max relative error.
inline double full_model_gradcheck(const OmniFieldModel<double>& model,
                                   const ContextSet<double>& ctx, const QuerySet<double>& q,
                                   const std::vector<VecX<double>>& targets,
                                   double fd_step = 1e-6) {
  std::vector<MatX<double>> inputs;
  inputs.reserve(model.params().size());
  for (int i = 0; i < model.params().size(); ++i) inputs.push_back(model.params().value(i));
  return ag::grad_check<double>(
      [&](ag::Tape<double>& tape, const std::vector<ag::Tensor<double>>& leaves) {
        Binding<double> b(tape, model.params(), leaves);
        auto preds = model.forward(b, ctx, q);
        return masked_loss<double>(preds, targets, q.supervised);
      },
      inputs, fd_step);
}

}  // namespace omnifield::testing
