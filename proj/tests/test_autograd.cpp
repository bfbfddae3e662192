#include <cmath>
#include <vector>

#include "doctest.h"
#include "dualres/autograd.hpp"
#include "dualres/error.hpp"
#include "dualres/gradcheck.hpp"

using namespace dualres;
using dualres::ad::Tape;

namespace {

Mat mat(int r, int c, std::initializer_list<double> vals) {
  Mat m(r, c);
  size_t i = 0;
  for (double v : vals) m.a[i++] = v;
  REQUIRE(i == m.a.size());
  return m;
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("matmul matches a hand computation") {
  Tape t;
  int a = t.constant(mat(2, 3, {1, 2, 3, 4, 5, 6}));
  int b = t.constant(mat(3, 2, {7, 8, 9, 10, 11, 12}));
  const Mat& c = t.val(t.matmul(a, b));
  CHECK(c.rows == 2);
  CHECK(c.cols == 2);
  CHECK(c.at(0, 0) == 58.0);
  CHECK(c.at(0, 1) == 64.0);
  CHECK(c.at(1, 0) == 139.0);
  CHECK(c.at(1, 1) == 154.0);
}

TEST_CASE("matmul_nt equals matmul against the transpose") {
  Tape t;
  Mat A = mat(2, 3, {1, -2, 3, 0.5, 4, -1});
  Mat B = mat(4, 3, {2, 1, 0, -1, 3, 2, 0, 0, 1, 5, -2, 4});
  int nt = t.matmul_nt(t.constant(A), t.constant(B));
  int mm = t.matmul(t.constant(A), t.constant(transpose(B)));
  CHECK(max_abs_diff(t.val(nt), t.val(mm)) == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape t;
  int a = t.constant(Mat(2, 3));
  int b = t.constant(Mat(2, 2));
  CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
}

TEST_CASE("softmax rows sum to one and ignore a constant shift") {
  Tape t;
  Mat x = mat(2, 4, {0.3, -1.2, 2.0, 0.0, 5, 5, 5, 5});
  int s = t.softmax_rows(t.constant(x));
  // copy: val() references tape storage, which later node pushes reallocate
  Mat p = t.val(s);
  for (int i = 0; i < 2; ++i) {
    double z = 0;
    for (int j = 0; j < 4; ++j) z += p.at(i, j);
    CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
  }
  // uniform row
  for (int j = 0; j < 4; ++j) CHECK(p.at(1, j) == doctest::Approx(0.25).epsilon(1e-12));
  // shift invariance
  Mat shifted = x;
  for (auto& v : shifted.a) v += 7.5;
  int s2 = t.softmax_rows(t.constant(shifted));
  CHECK(max_abs_diff(t.val(s2), p) < 1e-12);
}

TEST_CASE("layernorm normalizes each row then applies gain and bias") {
  Tape t;
  Mat x = mat(2, 4, {1, 2, 3, 4, -1, 0, 1, 2});
  Mat gain = mat(1, 4, {2, 2, 2, 2});
  Mat bias = mat(1, 4, {0.5, 0.5, 0.5, 0.5});
  int y = t.layernorm_rows(t.constant(x), t.constant(gain), t.constant(bias));
  const Mat& v = t.val(y);
  // independent recomputation with population variance and eps inside sqrt
  for (int i = 0; i < 2; ++i) {
    double mu = 0;
    for (int j = 0; j < 4; ++j) mu += x.at(i, j);
    mu /= 4;
    double var = 0;
    for (int j = 0; j < 4; ++j) var += (x.at(i, j) - mu) * (x.at(i, j) - mu);
    var /= 4;
    for (int j = 0; j < 4; ++j) {
      double want = (x.at(i, j) - mu) / std::sqrt(var + 1e-5) * 2 + 0.5;
      CHECK(v.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("gelu matches the exact gaussian cdf form") {
  Tape t;
  Mat x = mat(1, 4, {0.0, 1.0, -1.0, 2.5});
  const Mat& v = t.val(t.gelu(t.constant(x)));
  for (int j = 0; j < 4; ++j) {
    double xx = x.at(0, j);
    double want = 0.5 * xx * (1.0 + std::erf(xx / std::sqrt(2.0)));
    CHECK(v.at(0, j) == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(v.at(0, 0) == 0.0);
}

TEST_CASE("softplus is accurate on both tails") {
  Tape t;
  Mat x = mat(1, 3, {-30.0, 0.0, 30.0});
  const Mat& v = t.val(t.softplus(t.constant(x)));
  CHECK(v.at(0, 0) == doctest::Approx(std::log1p(std::exp(-30.0))).epsilon(1e-12));
  CHECK(v.at(0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(v.at(0, 2) == doctest::Approx(30.0 + std::log1p(std::exp(-30.0))).epsilon(1e-12));
}

TEST_CASE("cross_entropy_sum matches a hand-computed weighted nll") {
  Tape t;
  Mat logits = mat(2, 3, {1.0, 2.0, 3.0, 0.0, 0.0, 0.0});
  int ce = t.cross_entropy_sum(t.constant(logits), {2, 1}, {1.0, 0.5});
  auto nll = [&](int row, int target) {
    double z = 0;
    for (int j = 0; j < 3; ++j) z += std::exp(logits.at(row, j));
    return std::log(z) - logits.at(row, target);
  };
  double want = 1.0 * nll(0, 2) + 0.5 * nll(1, 1);
  CHECK(t.val(ce).at(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cross_entropy_sum rejects an out-of-range target") {
  Tape t;
  int l = t.constant(Mat(1, 3));
  CHECK_THROWS_AS(t.cross_entropy_sum(l, {3}, {1.0}), DomainError);
}

TEST_CASE("rows_gather copies rows and zeroes padded positions") {
  Tape t;
  Mat table = mat(3, 2, {10, 11, 20, 21, 30, 31});
  std::vector<int> ids = {2, 0, 1};
  std::vector<char> zero = {0, 1, 0};
  const Mat& v = t.val(t.rows_gather(t.constant(table), ids, &zero));
  CHECK(v.at(0, 0) == 30);
  CHECK(v.at(0, 1) == 31);
  CHECK(v.at(1, 0) == 0);
  CHECK(v.at(1, 1) == 0);
  CHECK(v.at(2, 0) == 20);
}

TEST_CASE("padded gather rows receive no gradient") {
  Tape t;
  Mat table = mat(2, 2, {1, 2, 3, 4});
  int tb = t.input(table, true);
  std::vector<char> zero = {0, 1};
  int g = t.rows_gather(tb, {0, 1}, &zero);
  // loss = sum of all gathered entries
  Mat ones = mat(1, 2, {1, 1});
  int s = t.matmul_nt(g, t.constant(ones));          // (2,1) row sums
  int tot = t.matmul(t.constant(ones), s);           // (1,1) total
  t.backward(tot);
  const Mat& gr = t.grad(tb);
  CHECK(gr.at(0, 0) == 1.0);
  CHECK(gr.at(0, 1) == 1.0);
  CHECK(gr.at(1, 0) == 0.0);
  CHECK(gr.at(1, 1) == 0.0);
}

TEST_CASE("slice and concat round-trip rows and columns") {
  Tape t;
  Mat x = mat(3, 4, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  int n = t.constant(x);
  int top = t.slice_rows(n, 0, 1);
  int rest = t.slice_rows(n, 1, 2);
  CHECK(max_abs_diff(t.val(t.concat_rows({top, rest})), x) == 0.0);
  int left = t.slice_cols(n, 0, 2);
  int right = t.slice_cols(n, 2, 2);
  CHECK(max_abs_diff(t.val(t.concat_cols({left, right})), x) == 0.0);
}

TEST_CASE("reshape_rows preserves row-major order") {
  Tape t;
  Mat x = mat(2, 6, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  const Mat& v = t.val(t.reshape_rows(t.constant(x), 4, 3));
  CHECK(v.rows == 4);
  CHECK(v.cols == 3);
  for (int i = 0; i < 12; ++i) CHECK(v.a[i] == i);
  CHECK_THROWS_AS(t.reshape_rows(t.constant(x), 5, 3), ShapeError);
}

TEST_CASE("sum_scalars adds (1,1) nodes") {
  Tape t;
  int a = t.constant(mat(1, 1, {1.5}));
  int b = t.constant(mat(1, 1, {-0.25}));
  int c = t.constant(mat(1, 1, {3.0}));
  CHECK(t.val(t.sum_scalars({a, b, c})).at(0, 0) == 4.25);
}

TEST_CASE("elementwise ops and broadcasts compute as written") {
  Tape t;
  Mat a = mat(2, 2, {1, 2, 3, 4});
  Mat b = mat(2, 2, {10, 20, 30, 40});
  Mat r = mat(1, 2, {100, 200});
  CHECK(t.val(t.add(t.constant(a), t.constant(b))).at(1, 1) == 44);
  CHECK(t.val(t.mul(t.constant(a), t.constant(b))).at(1, 0) == 90);
  CHECK(t.val(t.scale(t.constant(a), -2.0)).at(0, 1) == -4);
  const Mat& rv = t.val(t.add_rowvec(t.constant(a), t.constant(r)));
  CHECK(rv.at(0, 0) == 101);
  CHECK(rv.at(1, 1) == 204);
  const Mat& cv = t.val(t.add_const(t.constant(a), b));
  CHECK(cv.at(0, 1) == 22);
}

TEST_CASE("backward accumulates through a reused node") {
  // y = (x + x) * x = 2x^2, dy/dx = 4x at every entry.
  Tape t;
  Mat x = mat(1, 3, {1.0, -2.0, 0.5});
  int n = t.input(x, true);
  int y = t.mul(t.add(n, n), n);
  Mat ones = mat(1, 3, {1, 1, 1});
  int tot = t.matmul_nt(y, t.constant(ones));
  t.backward(tot);
  const Mat& g = t.grad(n);
  for (int j = 0; j < 3; ++j)
    CHECK(g.at(0, j) == doctest::Approx(4.0 * x.at(0, j)).epsilon(1e-12));
}

TEST_CASE("every differentiable op passes a finite-difference spot check") {
  // The full 20-instance sweep runs in the acceptance suite; this keeps a
  // fast 5-instance guard in the unit tier.
  auto results = gradcheck_ops(123, 5);
  CHECK(results.size() >= 19);
  for (const auto& r : results) {
    INFO(r.name << " max_rel=" << r.max_rel);
    CHECK(r.pass);
  }
}

TEST_CASE("joint loss gradients pass a finite-difference spot check") {
  CheckResult r = gradcheck_loss(0, 3);
  INFO(r.name << " max_rel=" << r.max_rel);
  CHECK(r.instances >= 3);
  CHECK(r.pass);
}

}  // TEST_SUITE
