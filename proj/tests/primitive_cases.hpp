#pragma once

// Finite-difference oracle cases for every autodiff primitive. Test-only:
// shared between the unit suite and the acceptance suite, independent of the
// backward implementations it checks.

#include <functional>
#include <string>
#include <vector>

#include "omnifield/gradcheck.hpp"
#include "omnifield/tensor.hpp"

namespace omnifield::testing {

inline MatX<double> rand_mat(Rng& rng, Index r, Index c, double lo = -1.0, double hi = 1.0) {
  MatX<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

struct PrimitiveCase {
  std::string name;
  // Runs one seeded gradient check and returns the max relative error.
  std::function<double(Rng&)> run;
};

inline std::vector<PrimitiveCase> primitive_gradcheck_cases() {
  using T = ag::Tensor<double>;
  namespace ag = omnifield::ag;

  // Contract each op's output against fixed random weights so the full
  // Jacobian is exercised, not just its row sums.
  auto contract = [](const T& out, const MatX<double>& w) {
    return ag::sum(ag::multiply(out, ag::constant(w)));
  };

  std::vector<PrimitiveCase> cases;
  auto add_case = [&](std::string name, std::function<double(Rng&)> fn) {
    cases.push_back({std::move(name), std::move(fn)});
  };

  add_case("matmul", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 4), b = rand_mat(rng, 4, 2), w = rand_mat(rng, 3, 2);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::matmul(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("transpose", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 5), w = rand_mat(rng, 5, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::transpose(x[0]), w);
        },
        {a});
  });
  add_case("add_same", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 4, 3), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::add(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("add_broadcast_row", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 1, 3), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::add(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("add_broadcast_scalar", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 1, 1), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::add(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("subtract_same", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 4, 3), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::subtract(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("subtract_broadcast_row", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 1, 3), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::subtract(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("multiply_same", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 4, 3), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::multiply(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("multiply_broadcast_row", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 1, 3), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::multiply(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("multiply_broadcast_scalar", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 3), b = rand_mat(rng, 1, 1), w = rand_mat(rng, 4, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::multiply(x[0], x[1]), w);
        },
        {a, b});
  });
  add_case("scale", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 3), w = rand_mat(rng, 3, 3);
    const double c = rng.uniform(-2.0, 2.0);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::scale(x[0], c), w);
        },
        {a});
  });
  add_case("exp", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 4), w = rand_mat(rng, 3, 4);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) { return contract(ag::exp(x[0]), w); },
        {a});
  });
  add_case("gelu", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 4, -2.0, 2.0), w = rand_mat(rng, 3, 4);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) { return contract(ag::gelu(x[0]), w); },
        {a});
  });
  add_case("square", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 4), w = rand_mat(rng, 3, 4);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::square(x[0]), w);
        },
        {a});
  });
  add_case("sqrt", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 4, 0.5, 2.0), w = rand_mat(rng, 3, 4);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) { return contract(ag::sqrt(x[0]), w); },
        {a});
  });
  add_case("concat_tokens", [contract](Rng& rng) {
    auto a = rand_mat(rng, 2, 3), b = rand_mat(rng, 3, 3), c = rand_mat(rng, 1, 3);
    auto w = rand_mat(rng, 6, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::concat<double>({x[0], x[1], x[2]}, 0), w);
        },
        {a, b, c});
  });
  add_case("concat_features", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 2), b = rand_mat(rng, 3, 4);
    auto w = rand_mat(rng, 3, 6);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::concat<double>({x[0], x[1]}, 1), w);
        },
        {a, b});
  });
  add_case("softmax", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 5, -2.0, 2.0), w = rand_mat(rng, 3, 5);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::softmax(x[0]), w);
        },
        {a});
  });
  add_case("softmax_masked", [contract](Rng& rng) {
    auto a = rand_mat(rng, 3, 5, -2.0, 2.0), w = rand_mat(rng, 3, 5);
    MatX<double> mask = MatX<double>::Zero(1, 5);
    mask(0, 1) = -1e30;
    mask(0, 4) = -1e30;
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          auto m = ag::constant(mask);
          return contract(ag::softmax(x[0], m), w);
        },
        {a});
  });
  add_case("layernorm", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 6), g = rand_mat(rng, 1, 6, 0.5, 1.5), b = rand_mat(rng, 1, 6);
    auto w = rand_mat(rng, 4, 6);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::layernorm(x[0], x[1], x[2]), w);
        },
        {a, g, b});
  });
  add_case("mean_tokens", [contract](Rng& rng) {
    auto a = rand_mat(rng, 5, 3), w = rand_mat(rng, 1, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::mean_tokens(x[0]), w);
        },
        {a});
  });
  add_case("sum", [](Rng& rng) {
    auto a = rand_mat(rng, 4, 4);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) { return ag::sum(x[0]); }, {a});
  });
  add_case("slice", [contract](Rng& rng) {
    auto a = rand_mat(rng, 5, 6), w = rand_mat(rng, 3, 2);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::slice(x[0], 1, 3, 2, 2), w);
        },
        {a});
  });
  add_case("reshape", [contract](Rng& rng) {
    auto a = rand_mat(rng, 4, 6), w = rand_mat(rng, 8, 3);
    return ag::grad_check<double>(
        [&](ag::Tape<double>&, const std::vector<T>& x) {
          return contract(ag::reshape(x[0], 8, 3), w);
        },
        {a});
  });
  return cases;
}

}  // namespace omnifield::testing
