// Rate function of a three-armed bandit on a coarse regret grid, with the
// dominant pull counts at the end of the horizon.

#include <cstdio>
#include <vector>

#include "banditpath/instanton.hpp"

int main() {
  using namespace banditpath;
  const BanditSpec spec({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}, 0.04, 10.0, 0.4, 20);
  std::vector<double> grid;
  for (double r = -5.0; r <= 40.0; r += 5.0) grid.push_back(r);

  RateOptions options;
  options.multistarts = 2;
  const RateCurve curve = rate_curve(spec, grid, options);

  std::printf("r_mpv = %.6f\n", curve.r_mpv);
  std::printf("%8s %12s %10s %10s %10s\n", "r", "I(r)", "n1^T", "n2^T", "n3^T");
  for (const auto& p : curve.points) {
    if (!p.converged) {
      std::printf("%8.2f %12s\n", p.r, "failed");
      continue;
    }
    const auto& n = p.minimal->n;
    std::printf("%8.2f %12.6f %10.4f %10.4f %10.4f\n", p.r, p.rate, n(0, 20), n(1, 20), n(2, 20));
  }
}
