#include <cmath>
#include <limits>

#include <doctest.h>

#include "dbm/error.hpp"
#include "dbm/numerics.hpp"
#include "test_util.hpp"

using namespace dbm;
using doctest::Approx;

TEST_SUITE("numerics") {

TEST_CASE("l2_normalize examples") {
  const Vector a = l2_normalize(Vector{{3.0, 4.0}});
  CHECK(a(0) == Approx(0.6).epsilon(1e-15));
  CHECK(a(1) == Approx(0.8).epsilon(1e-15));

  const Vector b = l2_normalize(Vector{{1.0, 0.0, 0.0}});
  CHECK(b == Vector{{1.0, 0.0, 0.0}});

  CHECK_THROWS_AS(l2_normalize(Vector{{0.0, 0.0}}), Error);
  try {
    l2_normalize(Vector{{1e-31, 0.0}});
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVector);
  }
}

TEST_CASE("l2_normalize is unit norm and idempotent") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const Vector v = testutil::random_matrix(rng, 1, 1 + t % 9).row(0).transpose() * std::pow(10.0, t % 7 - 3);
    const Vector u = l2_normalize(v);
    CHECK(std::abs(u.norm() - 1.0) < 1e-12);
    CHECK((l2_normalize(u) - u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(u.dot(v) > 0.0);
  }
}

TEST_CASE("normalize_rows reports the original norms") {
  Matrix m{{3.0, 4.0}, {0.0, 2.0}};
  Vector norms;
  const Matrix u = normalize_rows(m, &norms);
  CHECK(norms(0) == 5.0);
  CHECK(norms(1) == 2.0);
  CHECK(u(1, 1) == 1.0);
  m(1, 1) = 0.0;
  CHECK_THROWS_AS(normalize_rows(m), Error);
}

TEST_CASE("cosine_logits examples") {
  CosineHead axes{Matrix{{1.0, 0.0}, {0.0, 1.0}}, 32.0};
  const Vector z = cosine_logits(Vector{{1.0, 0.0}}, axes);
  CHECK(z(0) == 32.0);
  CHECK(z(1) == 0.0);

  axes.scale = 1.0;
  const Vector d = cosine_logits(Vector{{1.0, 1.0}}, axes);
  CHECK(d(0) == Approx(0.70710678118654752).epsilon(1e-15));
  CHECK(d(1) == Approx(0.70710678118654752).epsilon(1e-15));

  const CosineHead single{Matrix{{1.0, 0.0}}, 2.0};
  CHECK(cosine_logits(Vector{{-1.0, 0.0}}, single)(0) == -2.0);

  CHECK_THROWS_AS(cosine_logits(Vector{{0.0, 0.0}}, single), Error);
}

TEST_CASE("cosine_logits range and scale invariance") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const CosineHead head{testutil::random_matrix(rng, 5, 4), 7.5};
    const Vector f = testutil::random_matrix(rng, 1, 4).row(0).transpose();
    const Vector z = cosine_logits(f, head);
    CHECK(z.cwiseAbs().maxCoeff() <= 7.5);

    const double alpha = 0.01 + 50.0 * (t % 10), beta = 0.3 + t % 4;
    const CosineHead scaled{head.weights * beta, head.scale};
    CHECK((cosine_logits(alpha * f, scaled) - z).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("head validation") {
  CHECK_THROWS_AS((CosineHead{Matrix{{1.0, 0.0}}, 0.0}.validate()), Error);
  CHECK_THROWS_AS((CosineHead{Matrix{{1.0, 0.0}, {0.0, 0.0}}, 1.0}.validate()), Error);
  CHECK_NOTHROW((CosineHead{Matrix{{1.0, 0.0}}, 1.0}.validate()));
  CHECK_THROWS_AS((LinearHead{Matrix::Zero(3, 2), Vector::Zero(2)}.validate()), Error);

  const LinearHead lin{Matrix{{1.0, 2.0}, {0.0, -1.0}}, Vector{{0.5, 0.25}}};
  const Vector z = linear_logits(Vector{{1.0, 1.0}}, lin);
  CHECK(z(0) == 3.5);
  CHECK(z(1) == -0.75);
}

TEST_CASE("softmax_cross_entropy examples") {
  CHECK(softmax_cross_entropy(Vector{{0.0, 0.0}}, 0) == Approx(std::log(2.0)).epsilon(1e-15));
  const double big = softmax_cross_entropy(Vector{{1000.0, 0.0}}, 0);
  CHECK(std::isfinite(big));
  CHECK(big >= 0.0);
  CHECK(big < 1e-300);
  CHECK(softmax_cross_entropy(Vector{{0.5, -0.5}}, 1) == Approx(1.3132616875182228).epsilon(1e-14));
  CHECK(std::isfinite(softmax_cross_entropy(Vector{{0.0, 1000.0}}, 0)));
  CHECK(softmax_cross_entropy(Vector{{0.0, 1000.0}}, 0) == Approx(1000.0));

  try {
    softmax_cross_entropy(Vector{{0.0, 0.0}}, 2);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IndexOutOfRange);
  }
  CHECK_THROWS_AS(softmax_cross_entropy(Vector{{0.0, 0.0}}, -1), Error);
}

TEST_CASE("softmax_cross_entropy shift invariance and finite-difference gradient") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const int C = 2 + t % 6;
    const Vector z = testutil::random_matrix(rng, 1, C, 5.0).row(0).transpose();
    const int y = t % C;
    const double c = (t % 2 ? 1.0 : -1.0) * 37.0 * (t % 5);
    CHECK(std::abs(softmax_cross_entropy(z.array() + c, y) - softmax_cross_entropy(z, y)) < 1e-10);

    const Vector g = softmax_cross_entropy_grad(z, y);
    Vector onehot = Vector::Zero(C);
    onehot(y) = 1.0;
    CHECK((g - (softmax(z) - onehot)).cwiseAbs().maxCoeff() == 0.0);

    const double h = 1e-6;
    double worst = 0.0, scale = 1.0;
    for (int i = 0; i < C; ++i) {
      Vector zp = z, zm = z;
      zp(i) += h;
      zm(i) -= h;
      const double fd = (softmax_cross_entropy(zp, y) - softmax_cross_entropy(zm, y)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g(i)));
      scale = std::max(scale, std::abs(g(i)));
    }
    CHECK(worst / scale < 1e-6);
  }
}

TEST_CASE("softmax and log_sum_exp") {
  const Vector p = softmax(Vector{{1000.0, 1000.0}});
  CHECK(p(0) == 0.5);
  CHECK(log_sum_exp(Vector{{-1000.0, -1000.0}}) == Approx(-1000.0 + std::log(2.0)));
  CHECK(softmax(Vector{{3.0, -2.0, 0.1}}).sum() == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("safe_acos clamps") {
  CHECK(safe_acos(0.0) == Approx(M_PI / 2).epsilon(1e-15));
  const double near_one = safe_acos(1.0000001);
  CHECK(std::isfinite(near_one));
  CHECK(near_one > 0.0);
  CHECK(near_one == safe_acos(1.0 - kAcosClamp));
  CHECK(near_one < 5e-4);
  const double near_pi = safe_acos(-1.0);
  CHECK(std::isfinite(near_pi));
  CHECK(near_pi < M_PI);
  CHECK(M_PI - near_pi < 5e-4);
  CHECK(safe_acos(std::numeric_limits<double>::infinity()) == safe_acos(1.0));

  CHECK(safe_acos_derivative(0.0) == Approx(-1.0));
  CHECK(safe_acos_derivative(1.0) == 0.0);
  CHECK(safe_acos_derivative(-1.0) == 0.0);
  CHECK(safe_acos_derivative(0.6) == Approx(-1.0 / 0.8).epsilon(1e-14));
}

}  // TEST_SUITE
