#include "mdchain/eval/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "mdchain/error.hpp"

namespace mdchain::eval {

namespace {

std::size_t outcome_count(std::size_t vocab, std::size_t n) {
  const double m = std::pow(static_cast<double>(vocab), static_cast<double>(n));
  if (m > enumeration_budget) throw ConfigError("K^N exceeds the enumeration budget");
  return static_cast<std::size_t>(std::llround(m));
}

// One forward step of rate beta applied independently at each position.
void forward_step(std::vector<double>& p, double beta, std::size_t n, std::size_t vocab) {
  std::size_t stride = 1;
  for (std::size_t pos = 0; pos < n; ++pos, stride *= vocab) {
    for (std::size_t base = 0; base < p.size(); ++base) {
      if ((base / stride) % vocab != 0) continue;
      double sum = 0.0;
      for (std::size_t k = 0; k < vocab; ++k) sum += p[base + k * stride];
      for (std::size_t k = 0; k < vocab; ++k) p[base + k * stride] = (1.0 - beta) * p[base + k * stride] + beta * sum / vocab;
    }
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<int> random_source(const model::DenoiserModel& m, Rng& rng) {
  std::vector<int> s(m.length());
  for (int& v : s) v = static_cast<int>(rng.below(m.vocab()));
  return s;
}

model::Condition bench_condition(const model::DenoiserModel& m) {
  return m.classes() ? model::Condition(0) : std::nullopt;
}

double time_decode(const model::DenoiserModel& m, Rng& rng) {
  const auto source = random_source(m, rng);
  const auto start = std::chrono::steady_clock::now();
  const auto out = model::sample_sequence(m, source, bench_condition(m), rng);
  const double s = seconds_since(start);
  if (out.size() != m.length()) throw ContractError("decode produced a short sequence");
  return s;
}

BenchResult summarize(std::vector<double> trials, std::size_t tokens) {
  BenchResult r;
  r.seconds_per_sample = median(trials);
  r.tokens_per_second = static_cast<double>(tokens) / r.seconds_per_sample;
  r.trials = std::move(trials);
  return r;
}

}  // namespace

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("distributions have different support sizes");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

std::size_t outcome_index(std::span<const int> tokens, std::size_t vocab) {
  std::size_t idx = 0;
  for (int v : tokens) idx = idx * vocab + static_cast<std::size_t>(v);
  return idx;
}

TokenGrid outcome_grid(std::size_t index, std::size_t rows, std::size_t cols, std::size_t vocab) {
  TokenGrid g(rows, cols);
  for (std::size_t i = g.size(); i-- > 0;) {
    g[i] = static_cast<int>(index % vocab);
    index /= vocab;
  }
  return g;
}

std::vector<double> transition_row(const model::DenoiserModel& model, std::span<const int> source,
                                   model::Condition cond, std::size_t rows, std::size_t cols) {
  const std::size_t K = model.vocab();
  const std::size_t M = outcome_count(K, rows * cols);
  std::vector<double> row(M);
  for (std::size_t a = 0; a < M; ++a) {
    const TokenGrid target = outcome_grid(a, rows, cols, K);
    const num::Tensor lp = model.log_probs(source, cond, target.sequence());
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) s += lp(i, static_cast<std::size_t>(target[i]));
    row[a] = std::exp(s);
  }
  return row;
}

std::vector<double> enumerate_chain_marginal(const chain::ChainModel& chain, model::Condition cond) {
  chain.validate();
  const std::size_t K = chain.vocab();
  const std::size_t M = outcome_count(K, chain.length());
  const double terms = static_cast<double>(chain.schedule.T() - 1) * static_cast<double>(M) * static_cast<double>(M);
  if (terms >= enumeration_budget) throw ConfigError("chain enumeration exceeds the budget of 1e7 terms");
  std::vector<double> p(M, 1.0 / static_cast<double>(M));
  for (std::size_t t = chain.schedule.T(); t >= 2; --t) {
    std::vector<double> next(M, 0.0);
    for (std::size_t b = 0; b < M; ++b) {
      if (p[b] == 0.0) continue;
      const TokenGrid src = outcome_grid(b, chain.rows, chain.cols, K);
      const auto row = transition_row(chain.at(t), src.sequence(), cond, chain.rows, chain.cols);
      for (std::size_t a = 0; a < M; ++a) next[a] += p[b] * row[a];
    }
    p = std::move(next);
  }
  return p;
}

ExactReverseModel::ExactReverseModel(std::span<const double> data, const diffusion::Schedule& schedule, std::size_t t,
                                     std::size_t rows, std::size_t cols, std::size_t vocab)
    : rows_(rows), cols_(cols), vocab_(vocab), outcomes_(outcome_count(vocab, rows * cols)), beta_(schedule.beta(t)),
      prev_(data.begin(), data.end()) {
  if (prev_.size() != outcomes_) throw DimensionError("data distribution must cover all K^N grids");
  for (std::size_t s = 2; s < t; ++s) forward_step(prev_, schedule.beta(s), rows * cols, vocab);
}

std::vector<double> ExactReverseModel::conditional(std::span<const int> source, std::span<const int> prefix) const {
  const std::size_t n = length();
  const std::size_t j = prefix.size();
  std::size_t block = 1;
  for (std::size_t i = j + 1; i < n; ++i) block *= vocab_;
  const std::size_t first = outcome_index(prefix, vocab_) * block * vocab_;
  const double keep = 1.0 - beta_ + beta_ / vocab_, move = beta_ / vocab_;
  // Prefix likelihood is shared by every candidate, so only the suffix varies.
  std::vector<double> p(vocab_, 0.0);
  std::vector<int> digits(n);
  for (std::size_t a = first; a < first + block * vocab_; ++a) {
    if (prev_[a] == 0.0) continue;
    std::size_t rest = a;
    double w = prev_[a];
    for (std::size_t i = n; i-- > j;) {
      const int d = static_cast<int>(rest % vocab_);
      rest /= vocab_;
      w *= d == source[i] ? keep : move;
      digits[i] = d;
    }
    p[static_cast<std::size_t>(digits[j])] += w;
  }
  double z = 0.0;
  for (double v : p) z += v;
  for (double& v : p) v = z > 0.0 ? v / z : 1.0 / static_cast<double>(vocab_);
  return p;
}

num::Tensor ExactReverseModel::log_probs(std::span<const int> source, model::Condition cond,
                                         std::span<const int> target) const {
  check_source(source, cond);
  check_target(target);
  num::Tensor out({length(), vocab_});
  for (std::size_t i = 0; i < length(); ++i) {
    const auto p = conditional(source, target.first(i));
    for (std::size_t k = 0; k < vocab_; ++k) out(i, k) = std::log(p[k]);
  }
  return out;
}

std::unique_ptr<model::DecodeSession> ExactReverseModel::start(std::span<const int> source,
                                                               model::Condition cond) const {
  check_source(source, cond);
  class Session final : public model::DecodeSession {
   public:
    Session(const ExactReverseModel& m, std::span<const int> s) : m_(m), source_(s.begin(), s.end()) {}
    std::vector<double> next_log_probs() override {
      auto p = m_.conditional(source_, prefix_);
      for (double& v : p) v = std::log(v);
      return p;
    }
    void push(int token) override { prefix_.push_back(token); }
    std::size_t position() const override { return prefix_.size(); }

   private:
    const ExactReverseModel& m_;
    std::vector<int> source_, prefix_;
  };
  return std::make_unique<Session>(*this, source);
}

chain::ChainModel exact_chain(std::span<const double> data, const diffusion::Schedule& schedule, std::size_t rows,
                              std::size_t cols, std::size_t vocab) {
  chain::ChainModel c{schedule, std::nullopt, {}, rows, cols, 0};
  for (std::size_t t = 2; t <= schedule.T(); ++t)
    c.models.push_back(std::make_shared<ExactReverseModel>(data, schedule, t, rows, cols, vocab));
  return c;
}

double bits_per_token(const chain::ChainModel& chain, std::span<const chain::Example> dataset, Rng& rng,
                      std::size_t draws) {
  return chain::elbo_report(chain, dataset, rng, draws).bits_per_token;
}

void validate(const SpeedConfig& c) {
  if (c.scales == 0 || c.decoder_layers == 0 || c.data_dim == 0 || !(c.layer_cost > 0.0)) {
    throw ConfigError("speed model needs positive scales, decoder layers, data dimension and cost");
  }
}

double predicted_time(const SpeedConfig& c) {
  validate(c);
  return static_cast<double>(c.scales) * c.layer_cost *
         (static_cast<double>(c.encoder_layers) + static_cast<double>(c.data_dim * c.decoder_layers));
}

double predicted_speedup(const SpeedConfig& c, std::size_t baseline_layers) {
  validate(c);
  const double base = baseline_layers ? static_cast<double>(baseline_layers)
                                      : static_cast<double>(c.encoder_layers + c.decoder_layers);
  return base / (static_cast<double>(c.encoder_layers) / static_cast<double>(c.data_dim) +
                 static_cast<double>(c.decoder_layers));
}

BenchResult bench_decode(const model::DenoiserModel& model, std::size_t trials, Rng& rng) {
  if (trials == 0) throw ConfigError("benchmark needs at least one trial");
  for (std::size_t i = 0; i < bench_warmups; ++i) time_decode(model, rng);
  std::vector<double> times;
  for (std::size_t i = 0; i < trials; ++i) times.push_back(time_decode(model, rng));
  return summarize(std::move(times), model.length());
}

BenchResult bench_decode(const chain::ChainModel& chain, std::size_t trials, Rng& rng) {
  if (trials == 0) throw ConfigError("benchmark needs at least one trial");
  chain.validate();
  const model::Condition cond = chain.classes ? model::Condition(0) : std::nullopt;
  auto once = [&] {
    const auto start = std::chrono::steady_clock::now();
    chain::sample_tokens(chain, cond, rng);
    return seconds_since(start);
  };
  for (std::size_t i = 0; i < bench_warmups; ++i) once();
  std::vector<double> times;
  for (std::size_t i = 0; i < trials; ++i) times.push_back(once());
  return summarize(std::move(times), chain.length() * (chain.schedule.T() - 1));
}

SpeedComparison compare_decode_speed(const model::DenoiserConfig& fast, const model::DenoiserConfig& slow,
                                     std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw ConfigError("benchmark needs at least one trial");
  const model::Seq2SeqDenoiser a(fast, mix_seed(seed, 1));
  const model::Seq2SeqDenoiser b(slow, mix_seed(seed, 2));
  Rng rng(mix_seed(seed, 3));
  for (std::size_t i = 0; i < bench_warmups; ++i) {
    time_decode(a, rng);
    time_decode(b, rng);
  }
  std::vector<double> ta, tb;
  for (std::size_t i = 0; i < trials; ++i) {
    ta.push_back(time_decode(a, rng));
    tb.push_back(time_decode(b, rng));
  }
  SpeedComparison r{fast, slow, summarize(std::move(ta), fast.length), summarize(std::move(tb), slow.length)};
  r.measured = r.slow_result.seconds_per_sample / r.fast_result.seconds_per_sample;
  r.predicted = predicted_time({1, slow.encoder_layers, slow.decoder_layers, slow.length, 1.0}) /
                predicted_time({1, fast.encoder_layers, fast.decoder_layers, fast.length, 1.0});
  return r;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const std::map<std::string, std::string>& provenance) {
  std::string canon;
  for (const auto& [k, v] : provenance) canon += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
  return buf;
}

void write_csv(std::ostream& out, std::span<const MetricRow> rows, const std::map<std::string, std::string>& provenance) {
  for (const auto& [k, v] : provenance) out << "# " << k << "=" << v << "\n";
  out << "metric,config_hash,value,seed\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.metric << ',' << r.config_hash << ',' << buf << ',' << r.seed << "\n";
  }
}

}  // namespace mdchain::eval
