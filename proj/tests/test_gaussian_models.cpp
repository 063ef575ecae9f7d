#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "posthoc/errors.hpp"
#include "posthoc/gaussian_models.hpp"

using namespace posthoc;

TEST_CASE("normal tail against a long double reference") {
  for (double x : {-5.0, -1.0, 0.0, 0.5, 1.96, 3.0, 8.0, 20.0, 37.0}) {
    const double ref = static_cast<double>(oracle::normal_upper_tail(x));
    CHECK(normal_upper_tail(x) == doctest::Approx(ref).epsilon(1e-13));
  }
  CHECK(pvalue(1.959963984540054, Sidedness::two) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(pvalue(-1.0, Sidedness::two) == pvalue(1.0, Sidedness::two));
  CHECK(pvalue(-1.0, Sidedness::one) == doctest::Approx(1 - normal_upper_tail(1.0)));
  CHECK(pvalue(0.0, Sidedness::two) == 1.0);
}

TEST_CASE("order-statistic CDF against the term-by-term binomial sum") {
  for (std::size_t m : {1, 7, 100, 1000}) {
    for (std::size_t k : {std::size_t{1}, (m + 1) / 2, m}) {
      for (double x : {1e-6, 0.003, 0.1, 0.5, 0.97}) {
        const double ref = static_cast<double>(oracle::binomial_upper_tail(k, m, x));
        CHECK(orderstat_cdf_independent(k, m, x) == doctest::Approx(ref).epsilon(1e-9));
      }
    }
  }
  CHECK(orderstat_cdf_independent(3, 10, 0.0) == 0.0);
  CHECK(orderstat_cdf_independent(3, 10, 1.0) == 1.0);
  CHECK_THROWS_AS(orderstat_cdf_independent(3, 10, 1.5), InputError);
}

TEST_CASE("order-statistic CDF reproduces the tabulated Simes probabilities") {
  // P(p_(k:1000) < 0.05 k / 1000) for i.i.d. uniforms.
  const std::vector<std::pair<std::size_t, double>> table{
      {1, 4.9e-2}, {2, 4.7e-3}, {5, 6.6e-6}, {10, 1.6e-10}, {100, 5.8e-93}};
  for (const auto& [k, value] : table) {
    const double got = orderstat_cdf_independent(k, 1000, 0.05 * k / 1000);
    CHECK(got == doctest::Approx(value).epsilon(0.01));
  }
}

TEST_CASE("covariance parsing") {
  CHECK(Covariance::parse("indep").kind == CovarianceKind::independent);
  CHECK(Covariance::parse("equi:0.2").param == 0.2);
  CHECK(Covariance::parse("toeplitz:-0.5").to_string() == "toeplitz:-0.5");
  CHECK(Covariance::parse("equi:0.4").to_string() == "equi:0.4");
  CHECK_THROWS_AS(Covariance::parse("equi:1.0"), InputError);
  CHECK_THROWS_AS(Covariance::parse("toeplitz:0.5"), InputError);
  CHECK_THROWS_AS(Covariance::parse("ar1:0.5"), InputError);
  CHECK_THROWS_AS(parse_sidedness("three"), InputError);
}

TEST_CASE("sampler noise has the requested covariance") {
  const std::size_t runs = 20000;
  for (const Covariance cov :
       {Covariance::independent(), Covariance::equicorrelated(0.4), Covariance::toeplitz(-1.0)}) {
    const NullJointSampler sampler(6, cov, Sidedness::two);
    Rng rng(51);
    std::vector<double> x(6);
    double s00 = 0, s11 = 0, s01 = 0, s03 = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      sampler.draw_noise(rng, x);
      s00 += x[0] * x[0];
      s11 += x[1] * x[1];
      s01 += x[0] * x[1];
      s03 += x[0] * x[3];
    }
    const double tol = 4.0 / std::sqrt(static_cast<double>(runs)) * 1.5;
    CHECK(s00 / runs == doctest::Approx(1.0).epsilon(tol));
    CHECK(s11 / runs == doctest::Approx(1.0).epsilon(tol));
    double expect01 = 0, expect03 = 0;
    if (cov.kind == CovarianceKind::equicorrelated) expect01 = expect03 = 0.4;
    if (cov.kind == CovarianceKind::toeplitz) {
      expect01 = 0.5;  // (1 + 1)^-1
      expect03 = 0.25;
    }
    CHECK(std::abs(s01 / runs - expect01) < tol);
    CHECK(std::abs(s03 / runs - expect03) < tol);
  }
}

TEST_CASE("Toeplitz covariance decays as a power of the shifted lag") {
  // (1 + |i - j|)^-2: 1/9 at lag 2, 1/25 at lag 4.
  const NullJointSampler sampler(8, Covariance::toeplitz(-2.0), Sidedness::two);
  Rng rng(52);
  std::vector<double> x(8);
  const std::size_t runs = 40000;
  double s02 = 0, s04 = 0;
  for (std::size_t r = 0; r < runs; ++r) {
    sampler.draw_noise(rng, x);
    s02 += x[0] * x[2];
    s04 += x[0] * x[4];
  }
  const double tol = 6.0 / std::sqrt(static_cast<double>(runs));
  CHECK(std::abs(s02 / runs - 1.0 / 9.0) < tol);
  CHECK(std::abs(s04 / runs - 0.04) < tol);
  for (double theta : {-2.0, -1.0, -0.5, -0.2}) {
    CHECK_NOTHROW(NullJointSampler(300, Covariance::toeplitz(theta), Sidedness::two));
  }
}

TEST_CASE("planted signal shifts the false-null statistics by mubar") {
  DataModel model{20, 16, Covariance::equicorrelated(0.2), 0.75, 2.5, 0};
  CHECK(model.m1() == 5);
  CHECK(model.h1() == IndexSet{0, 1, 2, 3, 4});
  const std::size_t runs = 3000;
  double h1_sum = 0, h0_sum = 0;
  for (std::size_t r = 0; r < runs; ++r) {
    model.seed = r;
    const auto T = test_statistics(sample_dataset(model));
    h1_sum += T[2];
    h0_sum += T[12];
  }
  const double se = 1.0 / std::sqrt(static_cast<double>(runs));
  CHECK(std::abs(h1_sum / runs - 2.5) < 4 * se);
  CHECK(std::abs(h0_sum / runs) < 4 * se);
}

TEST_CASE("datasets are deterministic and share noise across mubar") {
  DataModel a{10, 5, Covariance::independent(), 0.5, 1.0, 9};
  DataModel b = a;
  b.mubar = 4.0;
  const auto Xa = sample_dataset(a);
  const auto Xb = sample_dataset(b);
  CHECK(Xa == sample_dataset(a));
  CHECK(Xa.bottomRows(5) == Xb.bottomRows(5));
  CHECK(((Xb - Xa).topRows(5).array() - 3.0 / std::sqrt(5.0)).abs().maxCoeff() < 1e-12);
  DataModel bad = a;
  bad.pi0 = 1.5;
  CHECK_THROWS_AS(sample_dataset(bad), InputError);
}

TEST_CASE("test statistics and trivial data") {
  CHECK(test_statistics(Eigen::MatrixXd::Zero(3, 4)) == std::vector<double>(3, 0.0));
  Eigen::MatrixXd one(2, 1);
  one << 1.5, -2.0;
  CHECK(test_statistics(one) == std::vector<double>{1.5, -2.0});
  Eigen::MatrixXd four(1, 4);
  four << 1, 1, 1, 1;
  CHECK(test_statistics(four)[0] == doctest::Approx(2.0));
}

TEST_CASE("sign flips") {
  Eigen::MatrixXd X(2, 3);
  X << 1, 2, 3, 4, 5, 6;
  const SignVector s{1, -1, 1};
  Eigen::MatrixXd expect(2, 3);
  expect << 1, -2, 3, 4, -5, 6;
  CHECK(sign_flip(X, s) == expect);
  CHECK(encode_signs(s) == "+-+");
  CHECK(decode_signs("+-+") == s);
  CHECK_THROWS_AS(decode_signs("+x"), InputError);
  const auto transforms = draw_transforms(3, 10, std::uint64_t{4});
  CHECK(transforms.size() == 10);
  CHECK(is_identity(transforms[0]));
  CHECK(transforms == draw_transforms(3, 10, std::uint64_t{4}));
}

TEST_CASE("identity transform reproduces the observed p-values") {
  DataModel model{30, 12, Covariance::equicorrelated(0.3), 0.8, 3.0, 5};
  const auto X = sample_dataset(model);
  const auto transforms = draw_transforms(12, 8, std::uint64_t{6});
  for (const Sidedness side : {Sidedness::one, Sidedness::two}) {
    const NullPool pool = sign_flip_pool(X, transforms, side);
    const PValueVector observed = pvalues(test_statistics(X), side);
    const PValueVector first = pool.draw(0);
    for (std::size_t i = 0; i < 30; ++i) CHECK(first[i] == observed[i]);
    const PValueVector third = pool.draw(3);
    const PValueVector direct = pvalues(test_statistics(sign_flip(X, transforms[3])), side);
    for (std::size_t i = 0; i < 30; ++i) CHECK(third[i] == doctest::Approx(direct[i]).epsilon(1e-12));
  }
}

TEST_CASE("null pool stores each draw sorted with its hypothesis order") {
  const NullJointSampler sampler(9, Covariance::equicorrelated(0.5), Sidedness::one);
  const NullPool pool = sampler.draw_pool(15, 3);
  for (std::size_t j = 0; j < 15; ++j) {
    const auto s = pool.sorted(j);
    const auto o = pool.order(j);
    const PValueVector q = pool.draw(j);
    for (std::size_t r = 0; r < 9; ++r) {
      CHECK(q[o[r]] == s[r]);
      if (r > 0) CHECK(s[r - 1] <= s[r]);
    }
  }
  // Draw j depends only on (seed, j).
  const NullPool bigger = sampler.draw_pool(20, 3);
  for (std::size_t r = 0; r < 9; ++r) CHECK(bigger.sorted(7)[r] == pool.sorted(7)[r]);
}
