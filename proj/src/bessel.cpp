#include "nvrf/bessel.hpp"

#include <algorithm>
#include <cmath>

#include "nvrf/error.hpp"

namespace nvrf {

std::vector<double> bessel_j_sequence(int n_max, double x) {
  if (n_max < 0) throw Error(ErrorKind::invalid_argument, "bessel order must be >= 0");
  std::vector<double> j(std::size_t(n_max) + 1, 0.0);
  const double ax = std::abs(x);
  if (ax == 0.0) {
    j[0] = 1.0;
    return j;
  }

  // Start well above both the requested order and the argument so the
  // minimal solution dominates by the time the recurrence reaches n_max.
  const double top = std::max(double(n_max), ax);
  int start = int(top + std::sqrt(60.0 * top)) + 20;
  start += start % 2;

  constexpr double big = 1e250;
  double above = 0.0;   // J_{k+1}
  double cur = 1e-300;  // J_k, starting at k = start
  double norm = 0.0;    // 2 * sum of even orders >= 2
  for (int k = start; k > 0; --k) {
    const double below = 2.0 * k / ax * cur - above;  // J_{k-1}
    above = cur;
    cur = below;
    const int order = k - 1;
    if (order <= n_max) j[std::size_t(order)] = cur;
    if (order > 0 && order % 2 == 0) norm += 2.0 * cur;
    if (std::abs(cur) > big) {
      cur /= big;
      above /= big;
      norm /= big;
      for (int i = order; i <= n_max; ++i) j[std::size_t(i)] /= big;
    }
  }
  norm += cur;
  for (auto& v : j) v /= norm;
  if (x < 0) {
    for (std::size_t n = 1; n < j.size(); n += 2) j[n] = -j[n];
  }
  return j;
}

double bessel_j(int n, double x) {
  if (n < 0) {
    const double v = bessel_j(-n, x);
    return (n % 2 == 0) ? v : -v;
  }
  return bessel_j_sequence(n, x).back();
}

double bessel_tail_bound(int n_max, double x) {
  const double h = std::abs(x) / 2.0;
  // term_n = h^n / n!, summed from n_max + 1 until it stops mattering
  double term = 1.0;
  for (int n = 1; n <= n_max + 1; ++n) term *= h / n;
  double sum = 0.0;
  for (int n = n_max + 1; n < n_max + 400; ++n) {
    sum += term;
    if (term < 1e-30 * sum || term == 0.0) break;
    term *= h / (n + 1);
  }
  return sum;
}

}  // namespace nvrf
