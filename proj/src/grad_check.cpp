#include "mdchain/numeric/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdchain::num {

namespace {

double evaluate(const std::function<ad::Var(ad::Graph&)>& build_loss) {
  ad::Graph g;
  return build_loss(g).value()[0];
}

}  // namespace

GradCheckResult grad_check(const std::function<ad::Var(ad::Graph&)>& build_loss,
                           const std::vector<ad::Parameter*>& params, const GradCheckOptions& options) {
  for (ad::Parameter* p : params) p->zero_grad();
  {
    ad::Graph g;
    ad::Var loss = build_loss(g);
    g.backward(loss);
  }

  Rng rng(options.seed);
  GradCheckResult result;
  for (ad::Parameter* p : params) {
    std::vector<std::size_t> entries(p->value.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.entries_per_parameter && *options.entries_per_parameter < entries.size()) {
      // Partial Fisher-Yates: the first n slots become a uniform sample.
      const std::size_t n = *options.entries_per_parameter;
      for (std::size_t i = 0; i < n; ++i) std::swap(entries[i], entries[i + rng.below(entries.size() - i)]);
      entries.resize(n);
    }

    double diff_sq = 0.0;
    double analytic_sq = 0.0;
    double numeric_sq = 0.0;
    GradCheckEntry entry{p->name, 0.0, 0.0, entries.size()};
    for (std::size_t j : entries) {
      const double saved = p->value[j];
      p->value[j] = saved + options.step;
      const double up = evaluate(build_loss);
      p->value[j] = saved - options.step;
      const double down = evaluate(build_loss);
      p->value[j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p->grad[j];
      diff_sq += (analytic - numeric) * (analytic - numeric);
      analytic_sq += analytic * analytic;
      numeric_sq += numeric * numeric;
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic - numeric));
    }
    entry.relative_error = std::sqrt(diff_sq) / std::max({std::sqrt(analytic_sq), std::sqrt(numeric_sq), 1e-8});
    result.max_relative_error = std::max(result.max_relative_error, entry.relative_error);
    result.per_parameter.push_back(std::move(entry));
  }
  return result;
}

}  // namespace mdchain::num
