#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "sqr/bspline.hpp"
#include "sqr/joint_sampler.hpp"
#include "sqr/quantile_fit.hpp"
#include "sqr/random.hpp"
#include "sqr/simstudy.hpp"

using namespace sqr;

namespace {

void bm_basis_evaluate(benchmark::State& state) {
  const auto basis = BSplineBasis::equally_spaced(3, static_cast<int>(state.range(0)), Interval{0.0, 1.0});
  std::vector<double> out(basis.size());
  double x = 0.0;
  for (auto _ : state) {
    basis.evaluate_into(x, out);
    benchmark::DoNotOptimize(out.data());
    x += 0.000731;
    if (x > 1.0) x -= 1.0;
  }
}
BENCHMARK(bm_basis_evaluate)->Arg(4)->Arg(16)->Arg(64);

// y | (p, s) design on grouped rows: T years, n counties each
void bm_fit_pqr(benchmark::State& state) {
  const int years = static_cast<int>(state.range(0));
  const int counties = static_cast<int>(state.range(1));
  SimConfig cfg;
  cfg.years = years;
  cfg.counties = counties;
  const DetrendedPanel panel = generate_panel(cfg, RandomStream(3));
  const std::vector<BSplineBasis> bases{BSplineBasis::equally_spaced(3, 4, Interval{-1.0, 1.0}),
                                        BSplineBasis::equally_spaced(3, 4, Interval{0.0, 1.0})};
  Eigen::MatrixXd rows(years, static_cast<Eigen::Index>(design_width(bases)));
  for (int t = 0; t < years; ++t) {
    const double cov[2]{std::clamp(panel.price[t], -1.0, 1.0), panel.stocks[t]};
    rows.row(t) = build_design(bases, cov).transpose();
  }
  const Design design(rows, panel.obs_year);
  const Eigen::MatrixXd penalty = block_penalty(bases);
  for (auto _ : state) {
    auto fit = fit_pqr(design, panel.yield, 0.5, 1.0, penalty);
    benchmark::DoNotOptimize(fit.objective);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(panel.size()));
}
BENCHMARK(bm_fit_pqr)->Args({30, 50})->Args({100, 500})->Unit(benchmark::kMillisecond);

void bm_sample_conditional(benchmark::State& state) {
  SimConfig cfg;
  cfg.counties = 50;
  const DetrendedPanel panel = generate_panel(cfg, RandomStream(4));
  JointModelOptions opt = simulation_model_options();
  opt.lambda_grid = {1.0};
  const JointModel model = fit_conditional(panel, opt);
  const auto draws = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto d = sample_conditional(model, 0.173, draws, RandomStream(5));
    benchmark::DoNotOptimize(d.price_detrended.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_sample_conditional)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
