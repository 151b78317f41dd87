#pragma once

#include <vector>

namespace nvrf {

/// J_0(x) .. J_{n_max}(x) by Miller's downward recurrence, normalized with
/// J_0 + 2 sum J_{2k} = 1. Absolute accuracy ~1e-14 for |x| <= 20, n <= 60.
std::vector<double> bessel_j_sequence(int n_max, double x);

/// Single-order convenience wrapper around bessel_j_sequence.
double bessel_j(int n, double x);

/// Upper bound on sum_{n > n_max} |J_n(x)| from |J_n(x)| <= (|x|/2)^n / n!.
double bessel_tail_bound(int n_max, double x);

}  // namespace nvrf
