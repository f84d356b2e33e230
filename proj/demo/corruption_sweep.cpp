// Solves one synthetic camera network at increasing corruption levels and
// prints the aligned error of robust and least-squares averaging side by side.
//
//   corruption_sweep [n] [seed]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "rotsync/rotsync.hpp"

int main(int argc, char** argv) {
  using namespace rotsync;
  SyntheticSpec spec;
  spec.n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 60;
  spec.seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
  spec.edge_density = 0.3;
  spec.outlier_angle = deg_to_rad(15.0);
  spec.uniform_outlier_angle = true;
  spec.inlier_sigma = deg_to_rad(0.5);

  std::printf("%d cameras, outliers up to 15 deg, 0.5 deg noise on every edge\n\n",
              static_cast<int>(spec.n));
  std::printf("%-9s %7s  %-22s %-22s\n", "outliers", "edges", "robust mean/median",
              "l2 mean/median");
  try {
    for (double level : {0.0, 0.1, 0.2, 0.3, 0.4}) {
      spec.outlier_fraction = level;
      const SyntheticInstance inst = generate(spec);

      DenoiseConfig dc;
      dc.seed = spec.seed;
      const ViewGraph weighted = denoise(inst.graph, dc).graph;
      const SolveReport robust = solve(weighted, {}, CostFunction::exponential());

      SolverConfig plain;
      plain.use_denoise_weights = false;
      const SolveReport l2 = solve(inst.graph, plain, CostFunction::l2());

      const EvalResult a = align(robust.rotations, inst.truth);
      const EvalResult b = align(l2.rotations, inst.truth);
      std::printf("%7.0f%%  %7zu  %9.3f / %-10.3f %9.3f / %-10.3f\n", level * 100,
                  inst.graph.edge_count(), a.mean_deg, a.median_deg, b.mean_deg, b.median_deg);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
