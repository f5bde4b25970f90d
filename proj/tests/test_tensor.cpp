#include <cstdint>
#include <random>
#include <vector>

#include "crossview/blas.hpp"
#include "crossview/errors.hpp"
#include "crossview/rng.hpp"
#include "crossview/tensor.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crossview;

TEST_CASE("tensor shape and indexing follow NCHW row-major order") {
  Tensor<float> t({2, 3, 4, 5});
  CHECK(t.numel() == 120);
  CHECK(t.rank() == 4);
  CHECK(t.dim(2) == 4);

  // at(n,c,h,w) must address the same element as the flat layout.
  t.at(1, 2, 3, 4) = 42.f;
  CHECK(t[((1 * 3 + 2) * 4 + 3) * 5 + 4] == 42.f);

  t.zero();
  for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.f);
}

TEST_CASE("tensor construction validates shapes") {
  CHECK_THROWS_AS(Tensor<float>({2, -1}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
  Tensor<float> t({2, 3});
  CHECK_THROWS_AS(t.reshaped({7}), ShapeError);
  Tensor<float> r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r.numel() == 6);
}

TEST_CASE("full and zeros initialize every element") {
  auto f = Tensor<double>::full({3, 3}, 2.5);
  for (std::int64_t i = 0; i < f.numel(); ++i) CHECK(f[i] == 2.5);
  auto z = Tensor<double>::zeros({4});
  for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("bit_hash detects single-bit differences") {
  auto rng = make_rng(11);
  auto a = randn<float>({64}, rng);
  auto b = a;
  CHECK(bit_hash(a) == bit_hash(b));
  // Flip the lowest mantissa bit of one element.
  std::uint32_t bits;
  std::memcpy(&bits, &b[17], sizeof(bits));
  bits ^= 1u;
  std::memcpy(&b[17], &bits, sizeof(bits));
  CHECK(bit_hash(a) != bit_hash(b));
}

TEST_CASE("mix_seed derives distinct deterministic streams") {
  CHECK(mix_seed(1) == mix_seed(1));
  CHECK(mix_seed(1) != mix_seed(2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  auto r1 = make_rng(7);
  auto r2 = make_rng(7);
  for (int i = 0; i < 16; ++i) CHECK(r1() == r2());
}

TEST_CASE("randn is deterministic for a fixed rng state") {
  auto r1 = make_rng(3);
  auto r2 = make_rng(3);
  auto a = randn<double>({32}, r1, 1.0, 0.5);
  auto b = randn<double>({32}, r2, 1.0, 0.5);
  CHECK(bit_hash(a) == bit_hash(b));
}

TEST_CASE("shape_string formats dimensions") {
  CHECK(shape_string(std::vector<std::int64_t>{2, 3, 4}) == "(2,3,4)");
  CHECK(shape_string(Tensor<float>({5})) == "(5)");
}

namespace {

// Plain triple-loop reference for row-major C = alpha*op(A)*op(B) + beta*C.
template <typename T>
void naive_gemm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
                const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
                std::int64_t ldc) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = ta ? a[p * lda + i] : a[i * lda + p];
        const T bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        acc += static_cast<long double>(av) * bv;
      }
      c[i * ldc + j] = static_cast<T>(alpha * acc + beta * c[i * ldc + j]);
    }
}

template <typename T>
void check_gemm_combo(bool ta, bool tb, double tol) {
  const std::int64_t m = 5, n = 4, k = 3;
  auto rng = make_rng(17 + 2 * ta + tb);
  const std::int64_t a_rows = ta ? k : m, a_cols = ta ? m : k;
  const std::int64_t b_rows = tb ? n : k, b_cols = tb ? k : n;
  auto a = randn<T>({a_rows, a_cols}, rng);
  auto b = randn<T>({b_rows, b_cols}, rng);
  auto c = randn<T>({m, n}, rng);
  auto expect = c;
  const T alpha = static_cast<T>(1.25), beta = static_cast<T>(-0.5);
  naive_gemm<T>(ta, tb, m, n, k, alpha, a.data(), a_cols, b.data(), b_cols, beta, expect.data(),
                n);
  gemm(ta, tb, m, n, k, alpha, a.data(), a_cols, b.data(), b_cols, beta, c.data(), n);
  for (std::int64_t i = 0; i < c.numel(); ++i)
    CHECK(testsupport::close_rel(c[i], expect[i], tol));
}

}  // namespace

TEST_CASE("gemm matches a naive triple loop in all transpose combinations") {
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      check_gemm_combo<float>(ta, tb, 1e-5);
      check_gemm_combo<double>(ta, tb, 1e-12);
    }
}

TEST_CASE("gemm handles beta=0 without reading stale C") {
  const std::int64_t m = 2, n = 2, k = 2;
  std::vector<float> a = {1, 2, 3, 4};
  std::vector<float> b = {5, 6, 7, 8};
  // Poison C with values that would corrupt the result if beta=0 read them.
  std::vector<float> c = {1e30f, -1e30f, 1e30f, -1e30f};
  gemm(false, false, m, n, k, 1.f, a.data(), k, b.data(), n, 0.f, c.data(), n);
  CHECK(c[0] == doctest::Approx(19.f));
  CHECK(c[1] == doctest::Approx(22.f));
  CHECK(c[2] == doctest::Approx(43.f));
  CHECK(c[3] == doctest::Approx(50.f));
}
