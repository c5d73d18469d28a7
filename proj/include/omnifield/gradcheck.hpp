#pragma once

#include <vector>

#include "omnifield/tensor.hpp"

namespace omnifield::ag {

/// Compares analytic reverse-mode gradients of a scalar-valued tensor
/// function against central finite differences. Returns the maximum over all
/// input entries of |analytic - fd| / max(1, |fd|); non-finite differences
/// come back as +inf so callers can treat them as failures.
///
/// `f` is called as f(tape, leaves) and must route all differentiable state
/// through `leaves`.
template <class Scalar, class F>
Scalar grad_check(F&& f, const std::vector<MatX<Scalar>>& inputs,
                  Scalar fd_step = Scalar(1e-6)) {
  Tape<Scalar> tape;
  std::vector<Tensor<Scalar>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& v : inputs) leaves.push_back(tape.leaf(v));
  Tensor<Scalar> y = f(tape, leaves);
  if (y.rows() != 1 || y.cols() != 1)
    throw Error("shape", "grad_check: f must be scalar-valued");
  tape.backward(y);
  std::vector<MatX<Scalar>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) analytic.push_back(tape.grad(leaf.node));

  auto eval = [&](const std::vector<MatX<Scalar>>& in) -> Scalar {
    Tape<Scalar> t;
    std::vector<Tensor<Scalar>> ls;
    ls.reserve(in.size());
    for (const auto& v : in) ls.push_back(t.leaf(v));
    return f(t, ls).scalar();
  };

  std::vector<MatX<Scalar>> work = inputs;
  Scalar max_err = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    for (Index r = 0; r < work[i].rows(); ++r) {
      for (Index c = 0; c < work[i].cols(); ++c) {
        const Scalar orig = work[i](r, c);
        work[i](r, c) = orig + fd_step;
        const Scalar fp = eval(work);
        work[i](r, c) = orig - fd_step;
        const Scalar fm = eval(work);
        work[i](r, c) = orig;
        const Scalar fd = (fp - fm) / (2 * fd_step);
        const Scalar err =
            std::abs(analytic[i](r, c) - fd) / std::max<Scalar>(Scalar(1), std::abs(fd));
        if (!std::isfinite(err)) return std::numeric_limits<Scalar>::infinity();
        if (err > max_err) max_err = err;
      }
    }
  }
  return max_err;
}

}  // namespace omnifield::ag
