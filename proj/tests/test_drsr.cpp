#include <random>
#include <vector>

#include "doctest.h"
#include "dualres/drsr.hpp"
#include "dualres/error.hpp"
#include "dualres/mat.hpp"

using namespace dualres;

namespace {

Mat mat(int r, int c, std::initializer_list<double> vals) {
  Mat m(r, c);
  size_t i = 0;
  for (double v : vals) m.a[i++] = v;
  REQUIRE(i == m.a.size());
  return m;
}

Mat random_mat(int r, int c, uint64_t seed) {
  Mat m(r, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& v : m.a) v = d(rng);
  return m;
}

}  // namespace

TEST_SUITE("drsr") {

TEST_CASE("grouping 25 rows with k=5 yields 5 rows of the projection width") {
  Mat x = random_mat(25, 16, 1);
  Mat W = random_mat(64, 5 * 16, 2);
  Mat g = group_embed(x, W, 5);
  CHECK(g.rows == 5);
  CHECK(g.cols == 64);
}

TEST_CASE("k=1 with an identity weight passes embeddings through unchanged") {
  Mat x = random_mat(7, 4, 3);
  Mat W(4, 4);
  for (int i = 0; i < 4; ++i) W.at(i, i) = 1.0;
  Mat g = group_embed(x, W, 1);
  CHECK(max_abs_diff(g, x) == 0.0);
}

TEST_CASE("k=2 all-ones weight computes the concat-then-dot oracle") {
  // inputs ([1,0],[0,2]) concatenated -> [1,0,0,2]; ones row dots to 3
  Mat x = mat(2, 2, {1, 0, 0, 2});
  Mat W(1, 4);
  for (auto& v : W.a) v = 1.0;
  Mat g = group_embed(x, W, 2);
  REQUIRE(g.rows == 1);
  REQUIRE(g.cols == 1);
  CHECK(g.at(0, 0) == 3.0);
}

TEST_CASE("grouping concatenates each window in temporal order") {
  // W picks out single coordinates of the concatenated window so the output
  // reveals the order: row j of W selects concat position j.
  const int k = 3, d_in = 2;
  Mat x = mat(3, 2, {10, 11, 20, 21, 30, 31});
  Mat W(k * d_in, k * d_in);
  for (int i = 0; i < k * d_in; ++i) W.at(i, i) = 1.0;
  Mat g = group_embed(x, W, k);
  REQUIRE(g.rows == 1);
  // token ik first: [x0 | x1 | x2]
  std::vector<double> want = {10, 11, 20, 21, 30, 31};
  for (int j = 0; j < 6; ++j) CHECK(g.at(0, j) == want[j]);
}

TEST_CASE("group rejects lengths that are not a multiple of k") {
  Mat x = random_mat(7, 4, 4);
  Mat W = random_mat(8, 2 * 4, 5);
  CHECK_THROWS_AS(group_embed(x, W, 2), ShapeError);
  CHECK_THROWS_AS(group_embed(x, W, 0), ShapeError);
  // weight whose input width disagrees with k*d_in
  Mat bad = random_mat(8, 3 * 4, 6);
  Mat x8 = random_mat(8, 4, 7);
  CHECK_THROWS_AS(group_embed(x8, bad, 2), ShapeError);
}

TEST_CASE("ungrouping one hidden row yields k equal-width segments") {
  Mat h = random_mat(1, 64, 8);
  Mat W = random_mat(10, 64, 9);
  Mat u = ungroup_hidden(h, W, 5);
  CHECK(u.rows == 5);
  CHECK(u.cols == 2);  // d_g=10 split into 5 segments of width 2
}

TEST_CASE("a zero ungrouping weight produces all-zero segments") {
  Mat h = random_mat(3, 8, 10);
  Mat W(6, 8);
  Mat u = ungroup_hidden(h, W, 3);
  for (double v : u.a) CHECK(v == 0.0);
}

TEST_CASE("block-repeated basis weight copies the hidden vector into each segment") {
  // d_h=2, d_g=4, k=2: W rows = [e0; e1; e0; e1], hidden=[1,2]
  Mat W = mat(4, 2, {1, 0, 0, 1, 1, 0, 0, 1});
  Mat h = mat(1, 2, {1, 2});
  Mat u = ungroup_hidden(h, W, 2);
  REQUIRE(u.rows == 2);
  REQUIRE(u.cols == 2);
  CHECK(u.at(0, 0) == 1.0);
  CHECK(u.at(0, 1) == 2.0);
  CHECK(u.at(1, 0) == 1.0);
  CHECK(u.at(1, 1) == 2.0);
}

TEST_CASE("segment slicing is contiguous and segment j of step i lands at row i*k+j") {
  // W_p = identity(6): projection equals the hidden row itself, so segment j
  // must be its slice [j*2, (j+1)*2).
  const int d_h = 6, k = 3;
  Mat W(d_h, d_h);
  for (int i = 0; i < d_h; ++i) W.at(i, i) = 1.0;
  Mat h = mat(2, 6, {0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15});
  Mat u = ungroup_hidden(h, W, k);
  REQUIRE(u.rows == 6);
  REQUIRE(u.cols == 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < k; ++j)
      for (int c = 0; c < 2; ++c)
        CHECK(u.at(i * k + j, c) == h.at(i, j * 2 + c));
}

TEST_CASE("ungroup rejects a grouped width not divisible by k") {
  Mat h = random_mat(2, 8, 11);
  Mat W = random_mat(10, 8, 12);
  CHECK_THROWS_AS(ungroup_hidden(h, W, 3), ShapeError);
  Mat wrong_dh = random_mat(10, 9, 13);
  CHECK_THROWS_AS(ungroup_hidden(h, wrong_dh, 5), ShapeError);
  CHECK_THROWS_AS(ungroup_hidden(h, W, 0), ShapeError);
}

TEST_CASE("both transforms are linear maps") {
  std::mt19937_64 rng(14);
  const double a = 0.75, b = -1.5;
  for (int trial = 0; trial < 20; ++trial) {
    Mat x = random_mat(6, 4, rng());
    Mat y = random_mat(6, 4, rng());
    Mat W = random_mat(5, 2 * 4, rng());
    Mat axby(6, 4);
    for (size_t i = 0; i < axby.a.size(); ++i) axby.a[i] = a * x.a[i] + b * y.a[i];
    Mat lhs = group_embed(axby, W, 2);
    Mat gx = group_embed(x, W, 2);
    Mat gy = group_embed(y, W, 2);
    Mat rhs(lhs.rows, lhs.cols);
    for (size_t i = 0; i < rhs.a.size(); ++i) rhs.a[i] = a * gx.a[i] + b * gy.a[i];
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);

    Mat h1 = random_mat(3, 4, rng());
    Mat h2 = random_mat(3, 4, rng());
    Mat Wu = random_mat(6, 4, rng());
    Mat hh(3, 4);
    for (size_t i = 0; i < hh.a.size(); ++i) hh.a[i] = a * h1.a[i] + b * h2.a[i];
    Mat ul = ungroup_hidden(hh, Wu, 2);
    Mat u1 = ungroup_hidden(h1, Wu, 2);
    Mat u2 = ungroup_hidden(h2, Wu, 2);
    Mat ur(ul.rows, ul.cols);
    for (size_t i = 0; i < ur.a.size(); ++i) ur.a[i] = a * u1.a[i] + b * u2.a[i];
    CHECK(max_abs_diff(ul, ur) < 1e-12);
  }
}

TEST_CASE("length contract holds across sizes: output rows times k equals input rows") {
  std::mt19937_64 rng(15);
  for (int k : {1, 2, 4, 5}) {
    for (int n : {1, 3, 8}) {
      Mat x = random_mat(n * k, 4, rng());
      Mat W = random_mat(6, k * 4, rng());
      Mat g = group_embed(x, W, k);
      CHECK(g.rows * k == x.rows);
      // composition: ungrouping the grouped steps restores k rows per step
      Mat Wu = random_mat(2 * k, 6, rng());
      Mat u = ungroup_hidden(g, Wu, k);
      CHECK(u.rows == x.rows);
      CHECK(u.cols == 2);
    }
  }
}

}  // TEST_SUITE
