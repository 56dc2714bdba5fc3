#include <doctest.h>

#include "gfn/rng.hpp"

using namespace gfn;

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(7);
  Rng s1 = base.split("sample");
  Rng s2 = base.split("eval");
  CHECK(s1.next_u64() != s2.next_u64());
  // splitting does not consume from the parent
  Rng base2(7);
  base2.split("sample");
  Rng t1(7);
  CHECK(base.next_u64() == t1.next_u64());
}

TEST_CASE("uniform doubles land in range") {
  Rng rng(99);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10'000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}
