#include <doctest.h>

#include <cmath>
#include <set>

#include "omnifield/datagen.hpp"

using namespace omnifield;

TEST_SUITE_BEGIN("datagen");

TEST_CASE("gen_s1: default shape, zero amplitudes, constant field") {
  SUBCASE("paper defaults: N=3, 100x500") {
    S1Params<double> p;
    auto f = gen_s1(p, 7);
    CHECK(f.rows() == 100);
    CHECK(f.cols() == 500);
    CHECK(p.amplitudes.size() == 3);
    for (double a : p.amplitudes) {
      CHECK(a >= 0.5);
      CHECK(a <= 1.5);
    }
  }
  SUBCASE("all amplitudes zero gives the zero field") {
    S1Params<double> p;
    p.amplitudes = {0, 0, 0};
    auto f = gen_s1(p, 7);
    CHECK(f.isZero(0.0));
  }
  SUBCASE("single component with k=w=0, phi=pi/2 is constant 1") {
    S1Params<double> p;
    p.n_components = 1;
    p.amplitudes = {1.0};
    p.spatial_freqs = {0.0};
    p.temporal_freqs = {0.0};
    p.phases = {std::numbers::pi / 2};
    p.x_points = 5;
    p.t_points = 5;
    auto f = gen_s1(p, 0);
    CHECK((f.array() - 1.0).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("gen_s2_kuramoto: K=0 phases equal theta(0) + w't under Euler, exactly") {
  S1Params<double> s1p;
  s1p.x_points = 4;
  s1p.t_points = 60;
  gen_s1(s1p, 3);  // resolve

  KuramotoParams<double> kp;
  kp.n_oscillators = 2;
  kp.coupling = 0.0;
  auto res = gen_s2_kuramoto(kp, s1p, 3);

  const double dt = s1p.t_step();
  for (int j = 0; j < 2; ++j) {
    // Independent Euler accumulation of the constant derivative.
    double expected = kp.init_phases[j];
    for (int ti = 0; ti < s1p.t_points; ++ti) {
      for (int xi = 0; xi < s1p.x_points; ++xi) CHECK(res.theta[j](xi, ti) == expected);
      expected += dt * kp.natural_freqs[j];
    }
  }
}

TEST_CASE("gen_s2_kuramoto: single Euler step hand value") {
  // theta' = w' + (K/N) sin(psi - theta) with psi = pi/2, theta=0, w'=1,
  // K=2.5, N=1, dt=0.1  ->  theta_1 = 0.1 * (1 + 2.5) = 0.35.
  S1Params<double> s1p;
  s1p.n_components = 1;
  s1p.amplitudes = {1.0};
  s1p.spatial_freqs = {0.0};
  s1p.temporal_freqs = {0.0};
  s1p.phases = {std::numbers::pi / 2};
  s1p.x_points = 2;
  s1p.t_points = 2;
  s1p.t_extent = 0.2;  // grid spacing 0.1
  gen_s1(s1p, 0);

  KuramotoParams<double> kp;
  kp.n_oscillators = 1;
  kp.natural_freqs = {1.0};
  kp.output_amps = {1.0};
  kp.init_phases = {0.0};
  kp.coupling = 2.5;
  auto res = gen_s2_kuramoto(kp, s1p, 0);
  CHECK(res.theta[0](0, 1) == doctest::Approx(0.35).epsilon(1e-12));
}

TEST_CASE("gen_s2_kuramoto: dt must divide the grid spacing") {
  S1Params<double> s1p;
  s1p.x_points = 2;
  s1p.t_points = 10;
  gen_s1(s1p, 1);
  KuramotoParams<double> kp;
  kp.dt = -0.1;
  CHECK_THROWS_AS(gen_s2_kuramoto(kp, s1p, 1), Error);
  KuramotoParams<double> kp2;
  kp2.dt = s1p.t_step() / 3.7;
  CHECK_THROWS_AS(gen_s2_kuramoto(kp2, s1p, 1), Error);
  KuramotoParams<double> kp3;
  kp3.dt = s1p.t_step() / 4;
  CHECK_NOTHROW(gen_s2_kuramoto(kp3, s1p, 1));
}

TEST_CASE("kuramoto synchronization: strong coupling reduces circular variance") {
  auto circ_var = [](const KuramotoResult<double>& res, int t_idx) {
    // 1 - |mean_j exp(i theta_j)|, averaged over spatial columns.
    const int M = int(res.theta.size());
    const int X = int(res.theta[0].rows());
    double acc = 0;
    for (int xi = 0; xi < X; ++xi) {
      double c = 0, s = 0;
      for (int j = 0; j < M; ++j) {
        c += std::cos(res.theta[j](xi, t_idx));
        s += std::sin(res.theta[j](xi, t_idx));
      }
      acc += 1.0 - std::sqrt(c * c + s * s) / M;
    }
    return acc / X;
  };

  S1Params<double> s1p;
  s1p.x_points = 8;
  s1p.t_points = 300;
  gen_s1(s1p, 11);

  KuramotoParams<double> weak;
  weak.coupling = 0.0;
  weak.natural_freqs = {1.0, 1.0};  // matched frequencies
  weak.init_phases = {0.0, 2.5};
  weak.output_amps = {1.0, 1.0};
  auto res_weak = gen_s2_kuramoto(weak, s1p, 11);

  KuramotoParams<double> strong = weak;
  strong.coupling = 50.0;
  auto res_strong = gen_s2_kuramoto(strong, s1p, 11);

  const int last = s1p.t_points - 1;
  CHECK(circ_var(res_strong, last) < circ_var(res_weak, last));
}

TEST_CASE("window counts") {
  WindowSpec w{20, 1, 1};
  CHECK(window_count(500, w) == 479);
  CHECK(window_count(22, w) == 1);
  CHECK(window_count(25, w) == 4);
  CHECK_THROWS_AS(window_count(21, w), Error);
  CHECK_THROWS_AS(window_count(5, w), Error);
  WindowSpec bad{0, 1, 1};
  CHECK_THROWS_AS(window_count(100, bad), Error);
}

TEST_CASE("build_sensor_masks: exact 5.1 counts") {
  auto classes = mask_preset("climsim-5.1", 3, 21600);
  auto masks = build_sensor_masks(21600, classes, 42);
  for (int m = 0; m < 3; ++m) CHECK(masks.sensors[m].size() == 432);
  CHECK(masks.count_with_bits(0b111) == 108);
  CHECK(masks.count_with_bits(0b011) == 81);
  CHECK(masks.count_with_bits(0b101) == 81);
  CHECK(masks.count_with_bits(0b110) == 81);
  CHECK(masks.count_with_bits(0b001) == 162);
  CHECK(masks.union_count() == 837);
  CHECK(masks.intersection().size() == 108);

  SUBCASE("deterministic given the seed") {
    auto again = build_sensor_masks(21600, classes, 42);
    CHECK(again.incidence == masks.incidence);
    auto other = build_sensor_masks(21600, classes, 43);
    CHECK(other.incidence != masks.incidence);
  }
}

TEST_CASE("build_sensor_masks: appendix-D variant") {
  auto classes = mask_preset("climsim-appendix-d", 3, 21600);
  auto masks = build_sensor_masks(21600, classes, 1);
  for (int m = 0; m < 3; ++m) CHECK(masks.sensors[m].size() == 216);
  CHECK(masks.count_with_bits(0b111) == 108);
  CHECK(masks.union_count() >= 324);
  CHECK(masks.union_count() <= 432);
}

TEST_CASE("build_sensor_masks: disjoint exclusive-only masks") {
  OverlapClassCounts c;
  c.n_modalities = 3;
  c.counts = {{0b001, 10}, {0b010, 10}, {0b100, 10}};
  auto masks = build_sensor_masks(100, c, 5);
  CHECK(masks.union_count() == 30);
  std::set<int> seen;
  for (int m = 0; m < 3; ++m)
    for (int s : masks.sensors[m]) CHECK(seen.insert(s).second);  // no sharing
}

TEST_CASE("build_sensor_masks: infeasible counts rejected") {
  OverlapClassCounts c;
  c.n_modalities = 2;
  c.counts = {{0b01, 80}, {0b10, 80}};
  CHECK_THROWS_AS(build_sensor_masks(100, c, 0), Error);  // needs 160 > 100
  OverlapClassCounts bad;
  bad.n_modalities = 2;
  bad.counts = {{0b100, 5}};
  CHECK_THROWS_AS(build_sensor_masks(100, bad, 0), Error);  // class outside catalog
}

TEST_CASE("sparsify: full mask reproduces the field; canonical order") {
  MatX<double> field(4, 3);
  field << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  VecX<double> xs(4);
  xs << 0.0, 0.1, 0.2, 0.3;
  std::vector<int> all = {0, 1, 2, 3};
  auto obs = sparsify(field, all, xs, 1, "m");
  CHECK(obs.values(0) == 2);
  CHECK(obs.values(3) == 11);
  CHECK(obs.locations(2, 0) == 0.2);
  CHECK_THROWS_AS(sparsify(field, std::vector<int>{9}, xs, 0, "m"), Error);
  CHECK_THROWS_AS(sparsify(field, all, xs, 5, "m"), Error);
}

TEST_CASE("zscore: fit/apply/invert") {
  MatX<double> v(1, 2);
  v << 0, 2;
  auto s = zscore_fit(v);
  CHECK(s.mean == 1.0);
  CHECK(s.std == 1.0);
  auto z = zscore_apply(v, s);
  CHECK(z(0, 0) == -1.0);
  CHECK(z(0, 1) == 1.0);

  Rng rng(3);
  MatX<double> big(8, 40);
  for (Index i = 0; i < big.size(); ++i) big(i / 40, i % 40) = rng.uniform(-4.0, 9.0);
  auto sb = zscore_fit(big);
  auto round = zscore_invert(zscore_apply(big, sb), sb);
  CHECK((round - big).lpNorm<Eigen::Infinity>() < 1e-12);
  auto norm = zscore_apply(big, sb);
  CHECK(std::abs(norm.mean()) < 1e-10);
  CHECK(std::abs(std::sqrt((norm.array() - norm.mean()).square().mean()) - 1.0) < 1e-10);

  MatX<double> flat = MatX<double>::Constant(2, 5, 3.0);
  CHECK_THROWS_AS(zscore_fit(flat), Error);
}

TEST_CASE("corrupt: identity at sigma 0, clean modalities untouched, reproducible") {
  SyntheticConfig<double> cfg;
  cfg.s1.x_points = 80;  // sparse50 classes need a union of 75
  cfg.s1.t_points = 40;
  cfg.window = {5, 1, 1};
  cfg.sparsity = "sparse50";
  auto ds = generate_synthetic_dataset(cfg, 99);
  auto ctx = context_for_window(ds, 0, {0, 1});

  SUBCASE("sigma 0 is the identity") {
    auto copy = ctx;
    Rng rng(1);
    corrupt(copy, NoiseSpec<double>{0.0, 2}, rng);
    for (int m = 0; m < 2; ++m) CHECK(copy.observations[m].values == ctx.observations[m].values);
  }
  SUBCASE("one modality stays clean; same seed reproduces the corruption") {
    auto a = ctx;
    Rng r1(7);
    corrupt(a, NoiseSpec<double>{1.0, 1}, r1);
    int changed = 0;
    for (int m = 0; m < 2; ++m)
      if (a.observations[m].values != ctx.observations[m].values) ++changed;
    CHECK(changed == 1);

    auto b = ctx;
    Rng r2(7);
    corrupt(b, NoiseSpec<double>{1.0, 1}, r2);
    for (int m = 0; m < 2; ++m) CHECK(a.observations[m].values == b.observations[m].values);
  }
  SUBCASE("k >= present count is infeasible when nothing would stay clean") {
    auto one = context_for_window(ds, 0, {1});
    Rng rng(3);
    NoiseSpec<double> spec{1.0, 1};
    CHECK_THROWS_AS(corrupt(one, spec, rng), Error);
  }
}

TEST_CASE("synthetic dataset: regenerate-and-compare is bitwise equal") {
  SyntheticConfig<double> cfg;
  cfg.s1.x_points = 50;
  cfg.s1.t_points = 60;
  cfg.window = {10, 1, 1};
  cfg.sparsity = "sparse30";
  auto a = generate_synthetic_dataset(cfg, 1234);
  SyntheticConfig<double> cfg2;
  cfg2.s1.x_points = 50;
  cfg2.s1.t_points = 60;
  cfg2.window = {10, 1, 1};
  cfg2.sparsity = "sparse30";
  auto b = generate_synthetic_dataset(cfg2, 1234);
  for (int m = 0; m < 2; ++m) CHECK(a.fields[m] == b.fields[m]);
  CHECK(a.masks.incidence == b.masks.incidence);
  CHECK(a.n_windows == window_count(60, cfg.window));
  CHECK(a.train_windows == int(0.8 * a.n_windows));

  // no imputation: every emitted observation is a genuinely sampled point
  auto ctx = context_for_window(a, 0, {0, 1});
  for (int m = 0; m < 2; ++m)
    CHECK(ctx.observations[m].count() == Index(a.masks.sensors[m].size()));
}

TEST_CASE("K=0 under RK4 also reduces to the linear phase ramp") {
  S1Params<double> s1p;
  s1p.x_points = 2;
  s1p.t_points = 30;
  gen_s1(s1p, 5);
  KuramotoParams<double> kp;
  kp.coupling = 0.0;
  kp.integrator = OdeIntegrator::rk4;
  kp.natural_freqs = {0.7, 1.3};
  kp.output_amps = {1.0, 1.0};
  kp.init_phases = {0.2, 4.0};
  auto res = gen_s2_kuramoto(kp, s1p, 5);
  const double dt = s1p.t_step();
  for (int j = 0; j < 2; ++j)
    CHECK(res.theta[j](0, 20) ==
          doctest::Approx(kp.init_phases[j] + 20 * dt * kp.natural_freqs[j]).epsilon(1e-12));
}

TEST_SUITE_END();
