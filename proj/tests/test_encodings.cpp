#include <doctest.h>

#include <set>

#include "omnifield/encodings.hpp"

using namespace omnifield;

TEST_SUITE_BEGIN("encodings");

TEST_CASE("gff_encode: gamma(0) = [1..1, 0..0]") {
  GffEncoder<double> enc(2, 8, 1.5, 42);
  MatX<double> x = MatX<double>::Zero(1, 2);
  MatX<double> f = enc.encode(x);
  REQUIRE(f.cols() == 16);
  CHECK(f.leftCols(8) == MatX<double>::Ones(1, 8));
  CHECK(f.rightCols(8) == MatX<double>::Zero(1, 8));
}

TEST_CASE("gff_encode: quarter period with B = [[1]]") {
  MatX<double> b(1, 1);
  b << 1.0;
  auto enc = GffEncoder<double>::from_matrix(b, 1.0, 0, EncoderKind::gaussian);
  MatX<double> x(1, 1);
  x << 0.25;
  MatX<double> f = enc.encode(x);
  CHECK(f(0, 0) == doctest::Approx(0.0).epsilon(1e-15));  // cos(pi/2)
  CHECK(f(0, 1) == doctest::Approx(1.0));                 // sin(pi/2)
}

TEST_CASE("gff_encode: paper spatial config has width 64") {
  GffEncoder<double> enc(2, 32, 15.0, 7);
  CHECK(enc.feature_dim() == 64);
  MatX<double> x(3, 2);
  x.setRandom();
  CHECK(enc.encode(x).cols() == 64);
}

TEST_CASE("gff_encode: dimension mismatch is an error") {
  GffEncoder<double> enc(2, 4, 1.0, 0);
  MatX<double> x(1, 3);
  x.setZero();
  CHECK_THROWS_AS(enc.encode(x), Error);
}

TEST_CASE("gff invariants: norm, determinism, frequency statistics") {
  GffEncoder<double> enc(3, 16, 2.0, 99);

  SUBCASE("||gamma(x)||^2 == n_bands for random x") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
      MatX<double> x(1, 3);
      for (int j = 0; j < 3; ++j) x(0, j) = rng.uniform(-10.0, 10.0);
      const double n2 = enc.encode(x).squaredNorm();
      CHECK(std::abs(n2 - 16.0) < 1e-10);
    }
  }
  SUBCASE("equal seeds give bitwise-equal B") {
    GffEncoder<double> a(3, 16, 2.0, 99);
    CHECK(a.frequency_matrix() == enc.frequency_matrix());
    GffEncoder<double> c(3, 16, 2.0, 100);
    CHECK(c.frequency_matrix() != enc.frequency_matrix());
  }
  SUBCASE("empirical std of B entries within 5% of sigma") {
    GffEncoder<double> big(4, 3000, 15.0, 123);  // 12000 samples
    const auto& b = big.frequency_matrix();
    const double mean = b.mean();
    const double sd = std::sqrt((b.array() - mean).square().mean());
    CHECK(sd > 15.0 * 0.95);
    CHECK(sd < 15.0 * 1.05);
  }
}

TEST_CASE("fixed bands: identity at zero, unit base frequency, width contract") {
  auto enc = GffEncoder<double>::fixed_log_bands(1, 6);
  MatX<double> zero = MatX<double>::Zero(1, 1);
  MatX<double> f = enc.encode(zero);
  CHECK(f.leftCols(6) == MatX<double>::Ones(1, 6));
  CHECK(f.rightCols(6) == MatX<double>::Zero(1, 6));

  // band 0 has frequency 1: x = 0.25 -> cos(pi/2) = 0, sin(pi/2) = 1
  MatX<double> q(1, 1);
  q << 0.25;
  MatX<double> fq = enc.encode(q);
  CHECK(fq(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(fq(0, 6) == doctest::Approx(1.0));
  CHECK(enc.frequency_matrix()(0, 0) == 1.0);
  CHECK(enc.frequency_matrix()(3, 0) == 8.0);

  // swapping encoders in an ablation keeps the feature width fixed
  GffEncoder<double> gauss(2, 32, 15.0, 3);
  auto fixed = GffEncoder<double>::fixed_log_bands(2, 32);
  CHECK(gauss.feature_dim() == fixed.feature_dim());
  CHECK(fixed_sinusoidal_encode<double>(MatX<double>::Zero(2, 2), 32).cols() == 64);
}

TEST_CASE("sinusoidal init: row zero pattern and exact norms") {
  SinusoidalQueryInit<double> init{4, 8, 10000.0};
  MatX<double> q = init.make();
  const double s = 1.0 / 2.0;  // d = 4
  for (int k = 0; k < 4; ++k) {
    CHECK(q(0, k) == s);      // cos 0
    CHECK(q(0, 4 + k) == 0);  // sin 0
  }
  CHECK(std::abs(q.row(0).norm() - 1.0) < 1e-15);
}

TEST_CASE("sinusoidal init: frequencies are log-spaced, nu_0 = 1") {
  SinusoidalQueryInit<double> init{1, 4, 10000.0};
  auto nu = init.frequencies();
  REQUIRE(nu.size() == 2);
  CHECK(nu(0) == 1.0);
  CHECK(nu(1) == doctest::Approx(0.01));  // 10000^(-1/2)
  SinusoidalQueryInit<double> wide{1, 64, 10000.0};
  auto nw = wide.frequencies();
  for (int k = 1; k < nw.size(); ++k) CHECK(nw(k) < nw(k - 1));
}

TEST_CASE("sinusoidal init: every row unit norm within 1e-9 at D=256") {
  SinusoidalQueryInit<double> init{128, 256, 10000.0};
  MatX<double> q = init.make();
  for (Index m = 0; m < q.rows(); ++m) CHECK(std::abs(q.row(m).norm() - 1.0) < 1e-9);
}

TEST_CASE("sinusoidal init: rows pairwise distinct") {
  SinusoidalQueryInit<double> init{1000, 32, 10000.0};
  MatX<double> q = init.make();
  for (Index i = 0; i < q.rows(); ++i)
    for (Index j = i + 1; j < q.rows(); ++j)
      CHECK((q.row(i) - q.row(j)).lpNorm<Eigen::Infinity>() > 1e-6);
}

TEST_CASE("sinusoidal init: invalid configs rejected") {
  CHECK_THROWS_AS((SinusoidalQueryInit<double>{4, 7, 10000.0}.make()), Error);   // odd D
  CHECK_THROWS_AS((SinusoidalQueryInit<double>{4, 8, 1.0}.make()), Error);       // b <= 1
  CHECK_THROWS_AS((SinusoidalQueryInit<double>{0, 8, 10000.0}.make()), Error);   // M < 1
}

TEST_SUITE_END();
