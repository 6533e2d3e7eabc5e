#include <cmath>
#include <functional>
#include <limits>

#include <doctest.h>

#include "dbm/analysis.hpp"
#include "dbm/error.hpp"
#include "test_util.hpp"

using namespace dbm;
using doctest::Approx;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Io;
}

Matrix random_orthogonal(std::mt19937_64& rng, int d) {
  Eigen::HouseholderQR<Matrix> qr(testutil::random_matrix(rng, d, d));
  return qr.householderQ();
}

// Three anisotropic Gaussian classes with distinct means.
void three_blobs(std::mt19937_64& rng, Matrix& X, std::vector<int>& y) {
  const int per = 40, D = 4;
  X = testutil::random_matrix(rng, 3 * per, D);
  y.clear();
  for (int i = 0; i < 3 * per; ++i) {
    const int c = i / per;
    y.push_back(c);
    X(i, c) += 3.0;
    X(i, 3) *= 0.2 + c;
  }
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("group thresholds") {
  const GroupThresholds t{100, 20};
  CHECK(t.group_of(150) == ShotGroup::Many);
  CHECK(t.group_of(100) == ShotGroup::Medium);
  CHECK(t.group_of(50) == ShotGroup::Medium);
  CHECK(t.group_of(20) == ShotGroup::Medium);
  CHECK(t.group_of(10) == ShotGroup::Few);
  CHECK(kind_of([] { GroupThresholds{20, 100}.validate(); }) == ErrorKind::InvalidConfig);
  CHECK_NOTHROW((GroupThresholds{50, 50}.validate()));

  const GroupThresholds tt = GroupThresholds::terciles({500, 300, 180, 108, 65, 39, 23, 14, 8, 5});
  CHECK(tt.many_min == 108);
  CHECK(tt.few_max == 23);
  CHECK_NOTHROW(tt.validate());
}

TEST_CASE("group_accuracy examples") {
  const GroupThresholds t{100, 20};
  const std::vector<long> counts{150, 50, 10};
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  const GroupAccuracy perfect = group_accuracy(labels, labels, counts, t);
  CHECK(*perfect.many == 1.0);
  CHECK(*perfect.medium == 1.0);
  CHECK(*perfect.few == 1.0);
  CHECK(*perfect.all == 1.0);
  CHECK(perfect.group_samples == std::array<long, 3>{2, 2, 2});

  const GroupAccuracy half = group_accuracy({0, 0, 0, 0}, {0, 0, 1, 1}, {150, 150}, t);
  CHECK(*half.all == 0.5);
  CHECK(*half.many == 0.5);
  CHECK_FALSE(half.medium.has_value());
  CHECK_FALSE(half.few.has_value());
  CHECK(*half.per_class[1] == 0.0);

  const GroupAccuracy absent = group_accuracy({0, 0}, {0, 0}, counts, t);
  CHECK_FALSE(absent.few.has_value());
  CHECK_FALSE(absent.per_class[2].has_value());

  CHECK(kind_of([&] { group_accuracy({0}, {0, 1}, counts, t); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("group accuracies recompose overall accuracy") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> cls(0, 5);
  const std::vector<long> counts{400, 200, 90, 40, 15, 3};
  for (int t = 0; t < 50; ++t) {
    std::vector<int> pred(300), lab(300);
    for (int i = 0; i < 300; ++i) {
      lab[i] = cls(rng);
      pred[i] = (i % 3 == 0) ? cls(rng) : lab[i];
    }
    const GroupAccuracy g = group_accuracy(pred, lab, counts, {100, 20});
    double weighted = 0.0;
    const std::optional<double> parts[3] = {g.many, g.medium, g.few};
    for (int k = 0; k < 3; ++k)
      if (parts[k]) weighted += *parts[k] * static_cast<double>(g.group_samples[k]);
    CHECK(weighted / 300.0 == Approx(*g.all).epsilon(1e-15));
  }
}

TEST_CASE("quartiles by linear interpolation") {
  const DistributionSummary s = summarize({40.0, 10.0, 30.0, 20.0});
  CHECK(s.median == Approx(25.0).epsilon(1e-15));
  CHECK(s.q1 == Approx(17.5).epsilon(1e-15));
  CHECK(s.q3 == Approx(32.5).epsilon(1e-15));
  CHECK(s.mean == 25.0);
  CHECK(s.count == 4);
  CHECK(quantile({7.0}, 0.3) == 7.0);
  CHECK(quantile({1.0, 2.0, 3.0}, 1.0) == 3.0);
  CHECK(kind_of([] { quantile({}, 0.5); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("angular statistics") {
  const Matrix W{{1.0, 0.0}, {0.0, 2.0}};
  const std::vector<long> counts{150, 10};
  const GroupThresholds t{100, 20};

  const Matrix on_center{{3.0, 0.0}, {0.0, 0.5}};
  const AngularStats zero = angular_stats(on_center, {0, 1}, W, counts, t);
  CHECK(zero.all->mean < 0.03);
  CHECK(zero.all->q3 < 0.03);

  const auto ortho = positive_angles_deg(Matrix{{0.0, 1.0}}, {0}, W);
  CHECK(ortho[0] == Approx(90.0).epsilon(1e-12));

  std::mt19937_64 rng(2);
  Matrix F = testutil::random_matrix(rng, 50, 2);
  std::vector<int> y(50);
  for (int i = 0; i < 50; ++i) y[i] = i % 2;
  double prev = angular_stats(F, y, W, counts, t).all->mean;
  for (int step = 0; step < 5; ++step) {
    for (int i = 0; i < 50; ++i) F.row(i) = 0.7 * F.row(i).normalized() + 0.3 * W.row(y[i]).normalized();
    const AngularStats s = angular_stats(F, y, W, counts, t);
    CHECK(s.all->mean < prev);
    CHECK(s.all->q1 <= s.all->median);
    CHECK(s.all->median <= s.all->q3);
    CHECK(s.all->q3 <= 180.0);
    CHECK(s.many.has_value());
    CHECK(s.few.has_value());
    CHECK_FALSE(s.medium.has_value());
    prev = s.all->mean;
  }
  CHECK(kind_of([&] { angular_stats(Matrix{{0.0, 0.0}}, {0}, W, counts, t); }) == ErrorKind::ZeroVector);
}

TEST_CASE("fisher_J") {
  CHECK(fisher_J({0.0, 2.0}, {4.0, 6.0}) == Approx(8.0).epsilon(1e-12));
  CHECK(fisher_J({1.0, 3.0, 2.0}, {2.0, 2.5, 1.5}) == 0.0);
  CHECK(std::isinf(fisher_J({1.0, 1.0}, {2.0, 2.0})));
  CHECK(fisher_J({1.0, 1.0}, {1.0, 1.0}) == 0.0);
  CHECK(kind_of([] { fisher_J({1.0}, {2.0, 3.0}); }) == ErrorKind::InvalidConfig);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(7), b(9);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng) + 1.0;
    const double J = fisher_J(a, b);
    const double scale = (t % 2 ? -1.0 : 1.0) * (0.1 + t), shift = 5.0 * n(rng);
    auto map = [&](std::vector<double> v) {
      for (auto& x : v) x = scale * x + shift;
      return v;
    };
    CHECK(fisher_J(map(a), map(b)) == Approx(J).epsilon(1e-10));
    CHECK(J >= 0.0);
  }
}

TEST_CASE("lda_direction") {
  const Vector w1 = lda_direction(Matrix{{0.0}, {1.0}, {2.0}}, Matrix{{5.0}, {7.0}});
  CHECK(w1.size() == 1);
  CHECK(w1(0) < 0.0);
  CHECK(lda_direction(Matrix{{5.0}, {7.0}}, Matrix{{0.0}, {1.0}, {2.0}})(0) > 0.0);

  // Points mu +- a e_k give an exactly isotropic population covariance.
  const int D = 4;
  const Vector mi{{1.0, -2.0, 0.5, 3.0}}, mj{{0.0, 1.0, 1.0, -1.0}};
  Matrix Xi(2 * D, D), Xj(2 * D, D);
  for (int k = 0; k < D; ++k) {
    for (int s = 0; s < 2; ++s) {
      Xi.row(2 * k + s) = mi.transpose();
      Xj.row(2 * k + s) = mj.transpose();
      Xi(2 * k + s, k) += s ? 0.7 : -0.7;
      Xj(2 * k + s, k) += s ? 0.7 : -0.7;
    }
  }
  const Vector w = lda_direction(Xi, Xj, 0.0);
  const Vector d = mi - mj;
  CHECK(std::acos(std::min(1.0, w.normalized().dot(d.normalized()))) < 1e-6);

  std::mt19937_64 rng(3);
  const Matrix Ai = testutil::random_matrix(rng, 30, 3) * Matrix{{3.0, 0.0, 0.0}, {1.0, 0.2, 0.0}, {0.0, 0.0, 1.0}};
  Matrix Aj = testutil::random_matrix(rng, 30, 3);
  Aj.col(1).array() += 1.0;
  const Vector diff = Ai.colwise().mean() - Aj.colwise().mean();
  const double angle_small = std::acos(std::min(1.0, lda_direction(Ai, Aj, 1e-3).normalized().dot(diff.normalized())));
  const double angle_big = std::acos(std::min(1.0, lda_direction(Ai, Aj, 1e9).normalized().dot(diff.normalized())));
  CHECK(angle_big < 1e-6);
  CHECK(angle_big < angle_small);

  const Matrix same{{1.0, 1.0}, {1.0, 1.0}};
  CHECK(kind_of([&] { lda_direction(same, same * 2.0, 0.0); }) == ErrorKind::SingularScatter);
  CHECK(kind_of([&] { lda_direction(Matrix{{1.0, 1.0}}, same); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([&] { lda_direction(same, same, -1.0); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("class separability: two-class symmetry and identical distributions") {
  std::mt19937_64 rng(4);
  Matrix X = testutil::random_matrix(rng, 60, 3);
  std::vector<int> y(60);
  for (int i = 0; i < 60; ++i) {
    y[i] = i < 30 ? 0 : 1;
    if (i >= 30) X(i, 0) += 2.0;
  }
  const SeparabilityReport r = class_separability(X, y, 2, {30, 30}, GroupThresholds{});
  CHECK(r.per_class[0] == r.per_class[1]);
  CHECK(r.per_class[0] > 0.5);

  // Bound fixed from a 10-seed Monte-Carlo run (largest S_i observed: 0.034).
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 g(static_cast<std::uint64_t>(seed));
    const Matrix Z = testutil::random_matrix(g, 1500, 8);
    std::vector<int> lab(1500);
    for (int i = 0; i < 1500; ++i) lab[i] = i / 500;
    const SeparabilityReport s = class_separability(Z, lab, 3, {500, 500, 500}, GroupThresholds{});
    for (double v : s.per_class) CHECK(v < 0.5);
  }
}

TEST_CASE("class separability is invariant to rotation and translation") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 5; ++t) {
    Matrix X;
    std::vector<int> y;
    three_blobs(rng, X, y);
    const std::vector<long> counts{200, 50, 5};
    const SeparabilityReport base = class_separability(X, y, 3, counts, {100, 20});
    const Matrix Q = random_orthogonal(rng, 4);
    const Vector shift = testutil::random_matrix(rng, 1, 4, 10.0).row(0).transpose();
    const Matrix moved = (X * Q.transpose()).rowwise() + shift.transpose();
    const SeparabilityReport after = class_separability(moved, y, 3, counts, {100, 20});
    for (int c = 0; c < 3; ++c) CHECK(std::abs(after.per_class[c] - base.per_class[c]) < 1e-8);
    CHECK(*base.many == base.per_class[0]);
    CHECK(*base.medium == base.per_class[1]);
    CHECK(*base.few == base.per_class[2]);
    CHECK(*base.all == Approx((base.per_class[0] + base.per_class[1] + base.per_class[2]) / 3.0));
  }
}

TEST_CASE("separability is unchanged by duplicating every row") {
  std::mt19937_64 rng(10);
  Matrix X;
  std::vector<int> y;
  three_blobs(rng, X, y);
  Matrix X2(2 * X.rows(), X.cols());
  X2 << X, X;
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  const auto a = class_separability(X, y, 3, {1, 1, 1}, {100, 20});
  const auto b = class_separability(X2, y2, 3, {1, 1, 1}, {100, 20});
  for (int c = 0; c < 3; ++c) CHECK(b.per_class[c] == Approx(a.per_class[c]).epsilon(1e-9));
}

}  // TEST_SUITE
