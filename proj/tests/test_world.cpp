#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "esw/world.hpp"

#include <cmath>
#include <random>

using namespace esw;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

// central finite difference of the energy
Vec fd_gradient(const PotentialSpec& p, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (p.energy(xp) - p.energy(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("double well energy values") {
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  p.a = 5.0;
  CHECK(p.energy(v1(1.0)) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(p.energy(v1(-1.0)) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(p.energy(v1(0.0)) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("triple well energy equals the three-Gaussian closed form") {
  PotentialSpec p;
  p.kind = PotentialKind::TripleWell1D;
  // independent evaluation of the defining sum at x = 0
  const double c[3] = {-2.0, 0.0, 2.0};
  double oracle = 0.0;
  for (int i = 0; i < 3; ++i)
    oracle -= 4.0 * std::exp(-c[i] * c[i] / (2.0 * 0.25));
  CHECK(p.energy(v1(0.0)) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("gradients at landmark points") {
  PotentialSpec dw;
  dw.kind = PotentialKind::DoubleWell1D;
  dw.a = 5.0;
  CHECK(dw.gradient(v1(1.0))[0] == doctest::Approx(0.0).epsilon(1e-14));
  const double g = dw.gradient(v1(0.5))[0];
  const double fd = fd_gradient(dw, v1(0.5))[0];
  CHECK(std::abs(g - fd) / std::abs(fd) < 1e-6);

  PotentialSpec h;
  h.kind = PotentialKind::Harmonic;
  h.k = 2.0;
  CHECK(h.gradient(v1(1.5))[0] == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("gradients match finite differences for every potential") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.5, 1.5);

  std::vector<PotentialSpec> specs;
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  specs.push_back(p);
  p.kind = PotentialKind::TiltedDoubleWell1D;
  p.c = 0.7;
  specs.push_back(p);
  p = PotentialSpec{};
  p.kind = PotentialKind::TripleWell1D;
  specs.push_back(p);
  p.perturbation = Perturbation{2, -1.0, 0.5};
  specs.push_back(p);
  p = PotentialSpec{};
  p.kind = PotentialKind::MuellerBrown2D;
  specs.push_back(p);
  p = PotentialSpec{};
  p.kind = PotentialKind::Harmonic;
  p.k = 3.0;
  specs.push_back(p);

  for (const auto& spec : specs) {
    for (int trial = 0; trial < 50; ++trial) {
      Vec x(spec.dim());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = u(rng);
      if (spec.kind == PotentialKind::MuellerBrown2D) x[1] = u(rng) * 0.5 + 0.8;
      const Vec ga = spec.gradient(x);
      const Vec gf = fd_gradient(spec, x);
      const double scale = std::max(1.0, gf.norm());
      CHECK((ga - gf).norm() / scale < 1e-6);
    }
  }
}

TEST_CASE("D=0 single step leaves x0 unchanged when the force vanishes") {
  PotentialSpec p;
  p.kind = PotentialKind::Harmonic;
  Thermostat th;
  th.D = 0.0;
  Trajectory t = simulate(p, th, v1(0.0), 1, 1, 42);
  CHECK(t.frames(0, 0) == 0.0);

  // D = 0 kills both drift and noise, so any start point is a fixed point
  Trajectory t2 = simulate(p, th, v1(0.7), 1, 1, 42);
  CHECK(t2.frames(0, 0) == 0.7);
}

TEST_CASE("bit-determinism per seed") {
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  p.a = 2.0;
  Thermostat th;
  Trajectory a = simulate(p, th, v1(-1.0), 20000, 10, 123);
  Trajectory b = simulate(p, th, v1(-1.0), 20000, 10, 123);
  CHECK((a.frames - b.frames).cwiseAbs().maxCoeff() == 0.0);
  Trajectory c = simulate(p, th, v1(-1.0), 20000, 10, 124);
  CHECK((a.frames - c.frames).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("harmonic sampler reproduces the Boltzmann variance") {
  PotentialSpec p;
  p.kind = PotentialKind::Harmonic;
  p.k = 1.0;
  Thermostat th;
  th.dt = 0.01;  // relaxation time = 100 steps
  Trajectory t = simulate(p, th, v1(0.0), 500000, 500, 7);
  const Vec x = t.frames.col(0);
  const double n = static_cast<double>(x.size());
  const double var = (x.array() - x.mean()).square().sum() / n;
  // decorrelated samples: SE(var) ~ var * sqrt(2/n)
  const double se = var * std::sqrt(2.0 / n);
  CHECK(std::abs(var - 1.0) < 3.0 * se);
}

TEST_CASE("symmetric double well fills both basins equally") {
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  p.a = 2.0;
  Thermostat th;
  Trajectory t = simulate(p, th, v1(-1.0), 5000000, 10, 3);
  const Vec x = t.frames.col(0);
  // blocked standard error of the left-basin fraction
  const int n_blocks = 25;
  const Eigen::Index bs = x.size() / n_blocks;
  Vec frac(n_blocks);
  for (int b = 0; b < n_blocks; ++b) {
    double left = 0;
    for (Eigen::Index i = b * bs; i < (b + 1) * bs; ++i)
      if (x[i] < 0.0) left += 1.0;
    frac[b] = left / static_cast<double>(bs);
  }
  const double mean = frac.mean();
  const double se = std::sqrt((frac.array() - mean).square().sum() /
                              (n_blocks - 1.0) / n_blocks);
  CHECK(std::abs(mean - 0.5) < 3.0 * se);
}

TEST_CASE("oversized time step raises a blow-up error") {
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  p.a = 5.0;
  Thermostat th;
  th.dt = 1.0;
  CHECK_THROWS_AS(simulate(p, th, v1(2.0), 1000, 10, 1), BlowUpError);
}

TEST_CASE("input validation") {
  PotentialSpec p;
  Thermostat th;
  CHECK_THROWS_AS(simulate(p, th, Vec::Zero(2), 100, 10, 1), DomainError);
  CHECK_THROWS_AS(simulate(p, th, v1(0.0), 0, 10, 1), DomainError);
  Thermostat bad;
  bad.dt = -1.0;
  CHECK_THROWS_AS(simulate(p, bad, v1(0.0), 100, 10, 1), DomainError);
  CHECK_THROWS_AS(potential_kind_from_string("nope"), DomainError);
  CHECK(potential_kind_from_string(to_string(PotentialKind::TripleWell1D)) ==
        PotentialKind::TripleWell1D);
}

TEST_CASE("perturbation deepens the requested basin only locally") {
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  p.a = 5.0;
  PotentialSpec q = p;
  q.perturbation = Perturbation{1, -1.0, 0.5};
  const Vec right = q.basin_center(1);
  CHECK(q.energy(right) == doctest::Approx(p.energy(right) - 1.0));
  // far from the bump the change is negligible
  CHECK(std::abs(q.energy(v1(-1.0)) - p.energy(v1(-1.0))) < 1e-3);
}
