#pragma once

#include <filesystem>

#include "omnifield/container.hpp"
#include "omnifield/datagen.hpp"

namespace omnifield {

/// Writes a FieldDataset as a portable container: one array per field (and
/// per imputed context field when present), the incidence matrix, the
/// coordinate axis, and normalization statistics, plus generation metadata.
template <class Scalar>
void save_dataset(const std::filesystem::path& dir, const FieldDataset<Scalar>& ds,
                  const std::string& fingerprint, bool force = false) {
  ds.validate();
  ContainerWriter w(dir, force);
  w.set_kind("dataset");
  w.set_fingerprint(fingerprint);
  for (int m = 0; m < ds.n_modalities(); ++m)
    w.add_array("field_" + ds.modalities[m], ds.fields[m]);
  for (std::size_t m = 0; m < ds.context_fields.size(); ++m)
    w.add_array("context_field_" + ds.modalities[m], ds.context_fields[m]);

  MatX<Scalar> incidence(ds.masks.catalog_size, ds.masks.n_modalities);
  for (int i = 0; i < ds.masks.catalog_size; ++i)
    for (int m = 0; m < ds.masks.n_modalities; ++m)
      incidence(i, m) = (ds.masks.incidence[i] & (1u << m)) ? Scalar(1) : Scalar(0);
  w.add_array("mask_incidence", incidence);

  MatX<Scalar> coords(ds.x_coords.size(), 1);
  coords.col(0) = ds.x_coords;
  w.add_array("x_coords", coords);

  MatX<Scalar> stats(ds.stats.size(), 2);
  for (std::size_t m = 0; m < ds.stats.size(); ++m) {
    stats(m, 0) = ds.stats[m].mean;
    stats(m, 1) = ds.stats[m].std;
  }
  w.add_array("normalization", stats);

  nlohmann::json meta = ds.metadata;
  meta["modalities"] = ds.modalities;
  meta["x_extent"] = double(ds.x_extent);
  meta["window"] = {{"input_len", ds.window.input_len},
                    {"horizon", ds.window.horizon},
                    {"stride", ds.window.stride}};
  meta["n_windows"] = ds.n_windows;
  meta["train_windows"] = ds.train_windows;
  meta["horizon_steps"] = ds.horizon_steps;
  meta["normalized"] = ds.normalized;
  w.set_metadata(meta);
  w.finalize();
}

template <class Scalar>
FieldDataset<Scalar> load_dataset(const std::filesystem::path& dir) {
  ContainerReader r(dir);
  if (r.kind() != "dataset") throw Error("io", "not a dataset container: " + dir.string());
  const auto& meta = r.metadata();
  FieldDataset<Scalar> ds;
  ds.modalities = meta.at("modalities").get<std::vector<std::string>>();
  for (const auto& name : ds.modalities)
    ds.fields.push_back(r.template array<Scalar>("field_" + name));
  if (r.has("context_field_" + ds.modalities[0]))
    for (const auto& name : ds.modalities)
      ds.context_fields.push_back(r.template array<Scalar>("context_field_" + name));

  MatX<Scalar> coords = r.template array<Scalar>("x_coords");
  ds.x_coords = coords.col(0);
  ds.x_extent = Scalar(meta.at("x_extent").get<double>());

  MatX<Scalar> incidence = r.template array<Scalar>("mask_incidence");
  std::vector<std::uint32_t> bits(incidence.rows(), 0);
  for (Index i = 0; i < incidence.rows(); ++i)
    for (Index m = 0; m < incidence.cols(); ++m)
      if (incidence(i, m) != Scalar(0)) bits[i] |= (1u << m);
  ds.masks = SensorMaskSet::from_incidence(std::move(bits), int(incidence.cols()));

  MatX<Scalar> stats = r.template array<Scalar>("normalization");
  ds.stats.resize(stats.rows());
  for (Index m = 0; m < stats.rows(); ++m)
    ds.stats[m] = ZScoreStats<Scalar>{stats(m, 0), stats(m, 1)};

  ds.window.input_len = meta.at("window").at("input_len").get<int>();
  ds.window.horizon = meta.at("window").at("horizon").get<int>();
  ds.window.stride = meta.at("window").at("stride").get<int>();
  ds.n_windows = meta.at("n_windows").get<int>();
  ds.train_windows = meta.at("train_windows").get<int>();
  ds.horizon_steps = meta.at("horizon_steps").get<int>();
  ds.normalized = meta.value("normalized", true);
  ds.metadata = meta;
  ds.validate();
  return ds;
}

}  // namespace omnifield
