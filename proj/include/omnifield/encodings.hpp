#pragma once

#include <cstdint>
#include <string>

#include "omnifield/common.hpp"

namespace omnifield {

enum class EncoderKind { gaussian, fixed_log };

inline std::string to_string(EncoderKind k) {
  return k == EncoderKind::gaussian ? "gaussian" : "fixed_log";
}

/// Coordinate-to-feature map gamma(x) = [cos(2 pi B x); sin(2 pi B x)].
/// The frequency matrix B is fixed at construction and never trained.
/// Gaussian rows give the frequency-rich encoder; the fixed_log variant is
/// the coarse log-stepped baseline with the same output width.
template <class Scalar>
class GffEncoder {
 public:
  GffEncoder(int input_dim, int n_bands, Scalar sigma, std::uint64_t seed)
      : input_dim_(input_dim),
        n_bands_(n_bands),
        sigma_(sigma),
        seed_(seed),
        kind_(EncoderKind::gaussian) {
    if (input_dim < 1 || n_bands < 1) throw Error("value", "GffEncoder: dims must be positive");
    if (!(sigma > Scalar(0))) throw Error("value", "GffEncoder: sigma must be positive");
    Rng rng(seed);
    freq_.resize(n_bands, input_dim);
    for (Index i = 0; i < freq_.rows(); ++i)
      for (Index j = 0; j < freq_.cols(); ++j) freq_(i, j) = Scalar(rng.normal(0.0, double(sigma)));
  }

  /// Log-stepped integer bands (1, 2, 4, ...), cycling over input dims; the
  /// GFF-off ablation arm. Output width matches the Gaussian encoder.
  static GffEncoder fixed_log_bands(int input_dim, int n_bands) {
    GffEncoder e;
    if (input_dim < 1 || n_bands < 1) throw Error("value", "GffEncoder: dims must be positive");
    e.input_dim_ = input_dim;
    e.n_bands_ = n_bands;
    e.sigma_ = Scalar(0);
    e.seed_ = 0;
    e.kind_ = EncoderKind::fixed_log;
    e.freq_ = MatX<Scalar>::Zero(n_bands, input_dim);
    for (int k = 0; k < n_bands; ++k)
      e.freq_(k, k % input_dim) = std::pow(Scalar(2), Scalar(k / input_dim));
    return e;
  }

  /// Exact reconstruction from a stored frequency matrix (checkpoints).
  static GffEncoder from_matrix(MatX<Scalar> freq, Scalar sigma, std::uint64_t seed,
                                EncoderKind kind) {
    GffEncoder e;
    if (freq.rows() < 1 || freq.cols() < 1)
      throw Error("value", "GffEncoder: empty frequency matrix");
    e.input_dim_ = int(freq.cols());
    e.n_bands_ = int(freq.rows());
    e.sigma_ = sigma;
    e.seed_ = seed;
    e.kind_ = kind;
    e.freq_ = std::move(freq);
    return e;
  }

  /// coords: points x input_dim -> points x (2 n_bands), cosines first.
  MatX<Scalar> encode(const MatX<Scalar>& coords) const {
    if (coords.cols() != input_dim_)
      throw Error("shape", "gff_encode: expected " + std::to_string(input_dim_) +
                               " coordinate columns, got " + std::to_string(coords.cols()));
    const Scalar two_pi = Scalar(2) * Scalar(std::numbers::pi);
    MatX<Scalar> phase = two_pi * coords * freq_.transpose();
    MatX<Scalar> out(coords.rows(), 2 * n_bands_);
    out.leftCols(n_bands_) = phase.array().cos().matrix();
    out.rightCols(n_bands_) = phase.array().sin().matrix();
    return out;
  }

  int input_dim() const { return input_dim_; }
  int n_bands() const { return n_bands_; }
  int feature_dim() const { return 2 * n_bands_; }
  Scalar sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  EncoderKind kind() const { return kind_; }
  const MatX<Scalar>& frequency_matrix() const { return freq_; }

 private:
  GffEncoder() = default;
  int input_dim_ = 0, n_bands_ = 0;
  Scalar sigma_ = 0;
  std::uint64_t seed_ = 0;
  EncoderKind kind_ = EncoderKind::gaussian;
  MatX<Scalar> freq_;  // n_bands x input_dim
};

/// Coarse fixed-frequency positional encoding with the gff_encode width
/// contract; convenience wrapper over the fixed-band encoder.
template <class Scalar>
MatX<Scalar> fixed_sinusoidal_encode(const MatX<Scalar>& coords, int n_bands) {
  return GffEncoder<Scalar>::fixed_log_bands(int(coords.cols()), n_bands).encode(coords);
}

/// Multi-scale sinusoidal initializer for learnable latent queries. With
/// d = dim/2 and nu_k = base^(-k/d), row m is
///   s * [cos(2 pi nu m); sin(2 pi nu m)],  s = d^(-1/2),
/// which makes every row unit norm.
template <class Scalar>
struct SinusoidalQueryInit {
  int n_queries = 0;
  int dim = 0;
  Scalar base = Scalar(10000);

  void validate() const {
    if (n_queries < 1) throw Error("value", "sinusoidal init: need at least one query");
    if (dim < 2 || dim % 2 != 0) throw Error("value", "sinusoidal init: dim must be even");
    if (!(base > Scalar(1))) throw Error("value", "sinusoidal init: base must exceed 1");
  }

  /// Strictly decreasing log-spaced frequencies, nu_0 = 1.
  VecX<Scalar> frequencies() const {
    validate();
    const int d = dim / 2;
    VecX<Scalar> nu(d);
    for (int k = 0; k < d; ++k) nu(k) = std::pow(base, -Scalar(k) / Scalar(d));
    return nu;
  }

  MatX<Scalar> make() const {
    const VecX<Scalar> nu = frequencies();
    const int d = dim / 2;
    const Scalar s = Scalar(1) / std::sqrt(Scalar(d));
    const Scalar two_pi = Scalar(2) * Scalar(std::numbers::pi);
    MatX<Scalar> q(n_queries, dim);
    for (int m = 0; m < n_queries; ++m) {
      for (int k = 0; k < d; ++k) {
        const Scalar phase = two_pi * nu(k) * Scalar(m);
        q(m, k) = s * std::cos(phase);
        q(m, d + k) = s * std::sin(phase);
      }
    }
    return q;
  }
};

}  // namespace omnifield
