// Two arms, one step: stationary solutions and their actions across r.

#include <cstdio>

#include "banditpath/toy_exact.hpp"

int main() {
  using namespace banditpath;
  const ToySpec toy(1.0, 2.0, 0.16, 10.0);
  std::printf("r_c = %.7f, r_mpv = %.7f\n", critical_regret(toy), toy_most_probable_regret(toy));
  for (double r = 0.5; r <= 4.01; r += 0.5) {
    const BranchSearch search = find_branches(r, toy);
    std::printf("r = %.2f:", r);
    for (const auto& b : search.branches) std::printf("  [ds0 %.5f, action %.5f]", b.delta_s0, b.action);
    std::printf("\n");
  }
}
