#include <omp.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "betamix/angle_engine.hpp"
#include "betamix/errors.hpp"
#include "doctest.h"

using namespace betamix;

namespace {

DataMatrix random_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<double> v(n * p);
  for (double& x : v) x = gauss(rng);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back("V" + std::to_string(j + 1));
  return DataMatrix(n, p, std::move(v), std::move(names));
}

DataMatrix parse(const std::string& text, bool transpose = false, NaPolicy policy = NaPolicy::error) {
  std::istringstream in(text);
  return read_matrix(in, transpose, policy);
}

// Textbook Pearson correlation, one pair at a time.
double naive_r(const DataMatrix& m, std::size_t i, std::size_t k, bool center) {
  const std::size_t n = m.n();
  double mi = 0.0, mk = 0.0;
  if (center) {
    for (std::size_t s = 0; s < n; ++s) {
      mi += m(s, i);
      mk += m(s, k);
    }
    mi /= n;
    mk /= n;
  }
  double sik = 0.0, sii = 0.0, skk = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const double x = m(s, i) - mi;
    const double y = m(s, k) - mk;
    sik += x * y;
    sii += x * x;
    skk += y * y;
  }
  return sik / std::sqrt(sii * skk);
}

const char* kSmall =
    "a,b,c\n"
    "1,2,3\n"
    "4,5,7\n"
    "2,9,1\n"
    "8,3,3\n";

}  // namespace

TEST_CASE("read_matrix shapes and orientation") {
  const DataMatrix m = parse(kSmall);
  CHECK(m.n() == 4);
  CHECK(m.p() == 3);
  CHECK(m(1, 2) == 7.0);
  CHECK(m.column_names() == std::vector<std::string>{"a", "b", "c"});

  const DataMatrix t = parse("id,s1,s2,s3\ng1,1,4,2\ng2,2,5,9\ng3,3,7,1\ng4,3,7,2\n", true);
  CHECK(t.n() == 3);
  CHECK(t.p() == 4);
  CHECK(t.column_names()[0] == "g1");
  CHECK(t(1, 1) == 5.0);
}

TEST_CASE("read_matrix delimiters and row labels") {
  const DataMatrix tab = parse("a\tb\n1\t2\n3\t4\n5\t7\n");
  CHECK(tab.p() == 2);
  CHECK(tab(2, 1) == 7.0);

  const DataMatrix labelled = parse(",x,y\nr1,1,2\nr2,3,4\nr3,5,5\n");
  CHECK(labelled.p() == 2);
  CHECK(labelled(0, 0) == 1.0);
}

TEST_CASE("read_matrix NA policies") {
  const std::string text = "a,b,c\n1,2,3\n4,NA,7\n2,9,1\n8,3,3\n";
  CHECK_THROWS_AS(parse(text), InputError);
  const DataMatrix dropped = parse(text, false, NaPolicy::drop_rows);
  CHECK(dropped.n() == 3);
  CHECK(dropped(1, 0) == 2.0);
  const DataMatrix imputed = parse(text, false, NaPolicy::impute_zero);
  CHECK(imputed.n() == 4);
  CHECK(imputed(1, 1) == 0.0);
  CHECK(parse_na_policy("drop_rows") == NaPolicy::drop_rows);
  CHECK_THROWS_AS(parse_na_policy("pairwise"), InputError);
}

TEST_CASE("read_matrix rejects malformed input") {
  CHECK_THROWS_AS(parse("a,b\n"), InputError);
  CHECK_THROWS_AS(parse("a,b\n1,2\n3,4\n"), InputError);        // n < 3
  CHECK_THROWS_AS(parse("a\n1\n2\n3\n"), InputError);            // P < 2
  CHECK_THROWS_AS(parse("a,b\n1,2\n3,x\n4,5\n"), InputError);    // non-numeric
  CHECK_THROWS_AS(parse("a,b\n1,2\n3,4,5,6\n4,5\n"), InputError);  // ragged
  try {
    parse("a,b\n1,2\n3,oops\n4,5\n");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("standardize") {
  const DataMatrix m(3, 2, {1, 2, 3, 2, 0, 1}, {"x", "y"});
  const DataMatrix s = standardize(m, true);
  CHECK(s(0, 0) == doctest::Approx(-1 / std::sqrt(2.0)));
  CHECK(s(1, 0) == doctest::Approx(0.0));
  CHECK(s(2, 0) == doctest::Approx(1 / std::sqrt(2.0)));

  const DataMatrix again = standardize(s, true);
  for (std::size_t i = 0; i < s.values().size(); ++i) CHECK(std::fabs(again.values()[i] - s.values()[i]) < 1e-12);

  const DataMatrix flat(3, 2, {5, 5, 5, 1, 2, 3}, {"flat", "ok"});
  CHECK_THROWS_AS(standardize(flat, true), InputError);
  try {
    standardize(flat, true);
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
  }
  CHECK_NOTHROW(standardize(flat, false));
}

TEST_CASE("PairIndex round-trips") {
  for (std::size_t p : {2u, 3u, 7u, 64u, 301u}) {
    const PairIndex idx(p);
    CHECK(idx.size() == p * (p - 1) / 2);
    std::size_t j = 0;
    for (std::size_t i = 0; i + 1 < p; ++i) {
      CHECK(idx.row_start(i) == j);
      for (std::size_t k = i + 1; k < p; ++k, ++j) {
        REQUIRE(idx.index(i, k) == j);
        const auto [a, b] = idx.pair(j);
        REQUIRE(a == i);
        REQUIRE(b == k);
      }
    }
  }
}

TEST_CASE("pairwise_z extremes are clamped") {
  const DataMatrix dup(4, 2, {1, 2, 3, 5, 1, 2, 3, 5}, {"x", "y"});
  const ZVector zd = compute_z(dup, true);
  CHECK(zd.z[0] == kZClamp);
  CHECK(zd.r[0] == doctest::Approx(1.0));

  const double h = 1 / std::sqrt(2.0);
  const DataMatrix orth(4, 2, {h, -h, 0, 0, 0, 0, h, -h}, {"x", "y"});
  const ZVector zo = pairwise_z(orth, false);
  CHECK(zo.z[0] == 1 - kZClamp);
  CHECK(zo.r[0] == doctest::Approx(0.0));

  CHECK_THROWS_AS(pairwise_z(dup, true), DomainError);
}

TEST_CASE("pairwise_z matches a naive per-pair oracle") {
  const DataMatrix hand(5, 3, {1, 2, 3, 4, 6, 2, 1, 0, 5, 3, 9, 7, 8, 1, 0}, {"a", "b", "c"});
  for (bool center : {true, false}) {
    const ZVector z = compute_z(hand, center);
    for (std::size_t j = 0; j < z.size(); ++j) {
      const auto [i, k] = z.index.pair(j);
      const double r = naive_r(hand, i, k, center);
      CHECK(std::fabs(z.z[j] - (1 - r * r)) < 1e-12);
    }
  }

  for (std::size_t p : {2u, 17u, 130u, 200u}) {
    const DataMatrix m = random_matrix(50, p, 100 + p);
    for (std::size_t block : {1u, 7u, 128u}) {
      const ZVector z = compute_z(m, true, PairwiseOptions{block});
      REQUIRE(z.size() == p * (p - 1) / 2);
      double worst = 0.0;
      for (std::size_t j = 0; j < z.size(); ++j) {
        const auto [i, k] = z.index.pair(j);
        const double r = naive_r(m, i, k, true);
        worst = std::max(worst, std::fabs(z.z[j] - std::clamp(1 - r * r, kZClamp, 1 - kZClamp)));
      }
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("z is invariant to sign flips and positive rescaling") {
  DataMatrix m = random_matrix(30, 20, 7);
  const ZVector base = compute_z(m, true);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (std::size_t j = 0; j < m.p(); ++j) {
    const double f = (j % 3 == 0 ? -1.0 : 1.0) * scale(rng);
    for (double& x : m.column(j)) x *= f;
  }
  const ZVector moved = compute_z(m, true);
  for (std::size_t j = 0; j < base.size(); ++j) CHECK(std::fabs(base.z[j] - moved.z[j]) < 1e-12);
}

TEST_CASE("pairwise_z is bitwise independent of thread count") {
  const DataMatrix m = standardize(random_matrix(40, 150, 3), true);
  omp_set_num_threads(1);
  const ZVector one = pairwise_z(m, true, PairwiseOptions{16});
  omp_set_num_threads(4);
  const ZVector four = pairwise_z(m, true, PairwiseOptions{16});
  CHECK(one.z == four.z);
  CHECK(one.r == four.r);
}

TEST_CASE("z_to_abs_r") {
  CHECK(z_to_abs_r(0.75) == doctest::Approx(0.5));
  CHECK(z_to_abs_r(1.0) == 0.0);
  CHECK(z_to_abs_r(0.815) == doctest::Approx(0.4301).epsilon(1e-3));
}
