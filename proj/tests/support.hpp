#pragma once

// Shared helpers for unit and acceptance tests: randomized gradient checks
// for every tape primitive, chi-square tail probabilities, and small
// statistics utilities.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dcl/gradcheck.hpp"
#include "dcl/rng.hpp"
#include "dcl/tape.hpp"

namespace dcl::testing {

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
inline double gamma_p(double a, double x) {
  if (x < 0 || a <= 0) return 0;
  if (x == 0) return 0;
  const double gln = std::lgamma(a);
  if (x < a + 1) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-14) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1 - a, c = 1e308, d = 1 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1) < 1e-14) break;
  }
  return 1 - std::exp(-x + a * std::log(x) - gln) * h;
}

// p-value of a chi-square statistic with the given degrees of freedom.
inline double chi_square_pvalue(double statistic, double dof) {
  return 1.0 - gamma_p(dof / 2.0, statistic / 2.0);
}

struct PrimitiveCheck {
  std::string name;
  // Builds a random scalar loss through one primitive; params get gradients.
  std::function<GradCheckResult(Rng&)> run;
};

// One randomized finite-difference check per differentiable primitive.
// `rounds` random configurations are drawn per primitive.
std::vector<PrimitiveCheck> primitive_checks();

// Runs every primitive check `rounds` times; returns the worst relative error
// observed and whether all rounds passed at the 1e-4 relative tolerance.
struct PrimitiveSweepResult {
  bool passed = true;
  double worst_rel = 0;
  std::string worst_case;
};
PrimitiveSweepResult run_primitive_sweep(int rounds, std::uint64_t seed);

}  // namespace dcl::testing
