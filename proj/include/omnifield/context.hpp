#pragma once

#include <string>
#include <vector>

#include "omnifield/common.hpp"

namespace omnifield {

/// Finite, irregular set of (location, value) pairs for one modality at one
/// input time. Empty is allowed and means the modality is absent.
template <class Scalar>
struct ModalityObservations {
  std::string modality;
  MatX<Scalar> locations;  // n x d_spatial
  VecX<Scalar> values;     // n
  Scalar input_time = 0;

  Index count() const { return values.size(); }

  void validate() const {
    if (locations.rows() != values.size())
      throw Error("value", "observations: locations/values length mismatch for " + modality);
    if (locations.size() > 0 && !locations.allFinite())
      throw Error("value", "observations: non-finite locations for " + modality);
  }
};

/// Per-modality observations plus the presence bits pi over the fixed
/// modality catalog. Invariant: pi_m = 1 iff the modality has observations.
template <class Scalar>
struct ContextSet {
  std::vector<ModalityObservations<Scalar>> observations;  // catalog order
  std::vector<char> presence;                              // pi

  int n_modalities() const { return int(observations.size()); }

  int n_present() const {
    int n = 0;
    for (char p : presence) n += p ? 1 : 0;
    return n;
  }

  void validate() const {
    if (presence.size() != observations.size())
      throw Error("value", "context: presence bits do not cover the catalog");
    for (std::size_t m = 0; m < observations.size(); ++m) {
      observations[m].validate();
      const bool has = observations[m].count() > 0;
      if (bool(presence[m]) != has)
        throw Error("value", "context: presence bit disagrees with observation count for " +
                                 observations[m].modality);
    }
  }
};

/// Requested outputs: per-modality query locations (catalog order, empty
/// means not queried), supervision bits tau, and the shared time offset.
/// dt_norm = dt / t_h is what the time encoder consumes.
template <class Scalar>
struct QuerySet {
  std::vector<MatX<Scalar>> locations;
  std::vector<char> supervised;  // tau
  Scalar dt = 0;
  Scalar dt_norm = 0;

  int n_modalities() const { return int(locations.size()); }

  void validate() const {
    if (supervised.size() != locations.size())
      throw Error("value", "queries: supervision bits do not cover the catalog");
    bool any = false;
    for (std::size_t m = 0; m < locations.size(); ++m) {
      if (supervised[m] && locations[m].rows() == 0)
        throw Error("value", "queries: tau set for a modality without query locations");
      any = any || locations[m].rows() > 0;
    }
    if (!any) throw Error("value", "queries: no modality queried");
  }
};

/// One training/eval instance: context, queries, and per-modality targets
/// aligned with the query locations (empty where unsupervised).
template <class Scalar>
struct TaskInstance {
  ContextSet<Scalar> context;
  QuerySet<Scalar> queries;
  std::vector<VecX<Scalar>> targets;
};

}  // namespace omnifield
