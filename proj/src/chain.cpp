#include "mdchain/chain/chain.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mdchain/error.hpp"

namespace mdchain::chain {

namespace {

// KL(p || exp(log_q)) without exponentiating q.
double kl_against_log(std::span<const double> p, std::span<const double> log_q) {
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    if (!std::isfinite(log_q[k])) throw NumericError("model assigns zero probability inside the posterior support");
    kl += p[k] * (std::log(p[k]) - log_q[k]);
  }
  return kl;
}

}  // namespace

ScaleLoss loss_scale2(const model::DenoiserModel& model, const TokenGrid& x1, Condition cond,
                      const diffusion::Schedule& schedule, Rng& rng) {
  const TokenGrid x2 = diffusion::sample_forward(x1, 2, schedule, model.vocab(), rng);
  return {2, model::nll(model, x2.sequence(), cond, x1.sequence()), LossKind::cross_entropy};
}

ScaleLoss loss_scale_t(const model::DenoiserModel& model, const TokenGrid& x1, Condition cond, std::size_t t,
                       const diffusion::Schedule& schedule, Rng& rng) {
  if (t < 3) throw ContractError("loss_scale_t needs t >= 3");
  const std::size_t K = model.vocab();
  const TokenGrid xt = diffusion::sample_marginal(x1, t, schedule, K, rng);
  const auto post = diffusion::posterior_probs(xt, x1, t, schedule, K);
  const TokenGrid y = diffusion::sample_rows(post, x1.rows, x1.cols, rng);
  const num::Tensor lp = model.log_probs(xt.sequence(), cond, y.sequence());
  double total = 0.0;
  for (std::size_t i = 0; i < x1.size(); ++i) total += kl_against_log(post.row(i), lp.row(i));
  return {t, total, LossKind::analytic_kl};
}

ScaleLoss scale_loss(const model::DenoiserModel& model, const TokenGrid& x1, Condition cond, std::size_t t,
                     const diffusion::Schedule& schedule, Rng& rng) {
  return t == 2 ? loss_scale2(model, x1, cond, schedule, rng) : loss_scale_t(model, x1, cond, t, schedule, rng);
}

ScaleBatch make_scale_batch(std::span<const Example> examples, std::size_t t, const diffusion::Schedule& schedule,
                            std::size_t vocab, Rng& rng) {
  ScaleBatch b;
  b.t = t;
  if (examples.empty()) throw DimensionError("empty training batch");
  const std::size_t N = examples[0].x1.size();
  if (t >= 3) b.posteriors = num::Tensor({examples.size() * N, vocab});
  std::size_t row = 0;
  for (const auto& ex : examples) {
    b.conds.push_back(ex.cond);
    if (t == 2) {
      b.sources.push_back(diffusion::sample_forward(ex.x1, 2, schedule, vocab, rng).tokens);
      b.targets.push_back(ex.x1.tokens);
      continue;
    }
    const TokenGrid xt = diffusion::sample_marginal(ex.x1, t, schedule, vocab, rng);
    const auto post = diffusion::posterior_probs(xt, ex.x1, t, schedule, vocab);
    b.sources.push_back(xt.tokens);
    b.targets.push_back(diffusion::sample_rows(post, ex.x1.rows, ex.x1.cols, rng).tokens);
    for (std::size_t i = 0; i < N; ++i, ++row) {
      for (std::size_t k = 0; k < vocab; ++k) {
        const double p = post.row(i)[k];
        b.posteriors(row, k) = p;
        if (p > 0.0) b.posterior_entropy -= p * std::log(p);
      }
    }
  }
  return b;
}

ad::Var scale_objective(model::Seq2SeqDenoiser& model, ad::Graph& graph, const ScaleBatch& batch) {
  std::vector<model::SequenceExample> examples;
  std::vector<int> flat;
  for (std::size_t b = 0; b < batch.sources.size(); ++b) {
    examples.push_back({batch.sources[b], batch.conds[b], batch.targets[b]});
    flat.insert(flat.end(), batch.targets[b].begin(), batch.targets[b].end());
  }
  const double inv = 1.0 / static_cast<double>(examples.size());
  ad::Var logp = model.forward(graph, examples);
  if (batch.t == 2) return ad::scale(ad::nll_rows(logp, flat), inv);
  ad::Var cross = ad::soft_cross_entropy(logp, batch.posteriors);
  ad::Var kl = ad::sub(cross, graph.constant(num::Tensor::scalar(batch.posterior_entropy)));
  return ad::scale(kl, inv);
}

std::uint64_t scale_init_seed(std::uint64_t seed, std::size_t t) { return mix_seed(seed, 2 * t); }
std::uint64_t scale_data_seed(std::uint64_t seed, std::size_t t) { return mix_seed(seed, 2 * t + 1); }

model::Seq2SeqDenoiser init_scale_model(const model::DenoiserConfig& config, std::size_t t, std::uint64_t seed) {
  return model::Seq2SeqDenoiser(config, scale_init_seed(seed, t));
}

std::vector<double> train_scale(model::Seq2SeqDenoiser& model, std::size_t t, std::span<const Example> dataset,
                                const diffusion::Schedule& schedule, const TrainConfig& config,
                                const EpochCallback& on_epoch) {
  if (dataset.empty()) throw ConfigError("training set is empty");
  if (config.batch == 0) throw ConfigError("batch size must be positive");
  if (t < 2 || t > schedule.T()) throw ContractError("scale outside the schedule");
  Rng rng(scale_data_seed(config.seed, t));
  num::Adam opt(model.parameters(), config.adam);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses;
  std::size_t steps = 0;
  const auto done = [&] { return config.steps ? steps >= config.steps : losses.size() >= config.epochs; };
  while (!done()) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      std::vector<Example> batch;
      for (std::size_t j = start; j < std::min(order.size(), start + config.batch); ++j)
        batch.push_back(dataset[order[j]]);
      const ScaleBatch sb = make_scale_batch(batch, t, schedule, model.vocab(), rng);
      try {
        ad::Graph g;
        ad::Var loss = scale_objective(model, g, sb);
        const double value = loss.value()[0];
        if (!std::isfinite(value)) throw NumericError("loss is not finite");
        opt.zero_grad();
        g.backward(loss);
        opt.step();
        sum += value * static_cast<double>(batch.size());
        seen += batch.size();
      } catch (const NumericError& e) {
        throw TrainingError("scale " + std::to_string(t) + " diverged at step " + std::to_string(steps) + ": " +
                            e.what());
      }
      ++steps;
      if (config.steps && steps >= config.steps) break;
    }
    losses.push_back(sum / static_cast<double>(seen));
    if (on_epoch) on_epoch(t, losses.size() - 1, losses.back());
  }
  return losses;
}

std::size_t ChainModel::vocab() const {
  if (models.empty() || !models.front()) throw ContractError("chain has no models");
  return models.front()->vocab();
}

const model::DenoiserModel& ChainModel::at(std::size_t t) const {
  if (t < 2 || t > schedule.T() || t - 2 >= models.size() || !models[t - 2]) {
    throw ContractError("no model for scale " + std::to_string(t));
  }
  return *models[t - 2];
}

void ChainModel::validate() const {
  if (models.size() != schedule.T() - 1) throw ContractError("chain needs one model per scale t = 2..T");
  for (const auto& m : models) {
    if (!m) throw ContractError("chain has a missing scale model");
    if (m->vocab() != vocab() || m->length() != length() || m->classes() != classes) {
      throw ContractError("scale models disagree on vocabulary, length or classes");
    }
  }
  if (codebook && codebook->size() != vocab()) throw ContractError("codebook size differs from model vocabulary");
}

TokenGrid sample_tokens(const ChainModel& chain, Condition cond, Rng& rng, double temperature,
                        SampleCounters* counters) {
  chain.validate();
  const std::size_t K = chain.vocab();
  TokenGrid x(chain.rows, chain.cols);
  for (int& v : x.tokens) v = static_cast<int>(rng.below(K));
  for (std::size_t t = chain.schedule.T(); t >= 2; --t) {
    x.tokens = model::sample_sequence(chain.at(t), x.sequence(), cond, rng, temperature);
    if (counters) ++counters->model_passes;
  }
  return x;
}

ChainSample sample_chain(const ChainModel& chain, Condition cond, Rng& rng, double temperature,
                         SampleCounters* counters) {
  if (!chain.codebook) throw ContractError("sample_chain needs a codebook to decode");
  TokenGrid x1 = sample_tokens(chain, cond, rng, temperature, counters);
  vq::Image image = vq::decode(x1, *chain.codebook);
  if (counters) ++counters->decodes;
  return {std::move(x1), std::move(image)};
}

ElboReport elbo_report(const ChainModel& chain, std::span<const Example> dataset, Rng& rng, std::size_t draws,
                       std::span<const vq::Image> images) {
  chain.validate();
  if (dataset.empty() || draws == 0) throw ConfigError("elbo_report needs examples and at least one draw");
  const std::size_t T = chain.schedule.T();
  const std::size_t K = chain.vocab();
  ElboReport r;
  r.scale_nats.assign(T - 1, 0.0);
  for (const auto& ex : dataset) {
    double example_total = diffusion::prior_kl(ex.x1, chain.schedule, K);
    r.prior_nats += example_total;
    for (std::size_t d = 0; d < draws; ++d) {
      for (std::size_t t = 2; t <= T; ++t) {
        const double v = scale_loss(chain.at(t), ex.x1, ex.cond, t, chain.schedule, rng).value / draws;
        r.scale_nats[t - 2] += v;
        example_total += v;
      }
    }
    r.per_example_nats.push_back(example_total);
  }
  const double n = static_cast<double>(dataset.size());
  for (double& v : r.scale_nats) v /= n;
  r.prior_nats /= n;
  r.total_nats = r.prior_nats;
  for (double v : r.scale_nats) r.total_nats += v;
  r.bits_per_token = r.total_nats / (static_cast<double>(chain.length()) * std::numbers::ln2);
  if (!images.empty() && chain.codebook) r.reconstruction_mse = vq::reconstruction_report(images, *chain.codebook).mean_mse;
  return r;
}

void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  char buf[64];
  out << "T = " << m.schedule.T() << "\nbetas =";
  for (double b : m.schedule.betas()) {
    std::snprintf(buf, sizeof buf, " %.17g", b);
    out << buf;
  }
  out << "\nrows = " << m.rows << "\ncols = " << m.cols << "\nclasses = " << m.classes << "\ncodebook = "
      << m.codebook.generic_string() << "\n";
  for (std::size_t i = 0; i < m.checkpoints.size(); ++i)
    out << "scale." << i + 2 << " = " << m.checkpoints[i].generic_string() << "\n";
  if (!out) throw IoError("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("manifest line without '=': " + line);
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto take = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("manifest is missing '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const auto number = [&](const std::string& key) { return static_cast<std::size_t>(std::stoull(take(key))); };
  Manifest m;
  const std::size_t T = number("T");
  std::vector<double> betas;
  std::istringstream bs(take("betas"));
  for (double b; bs >> b;) betas.push_back(b);
  m.schedule = diffusion::make_schedule(T, betas);
  m.rows = number("rows");
  m.cols = number("cols");
  m.classes = number("classes");
  m.codebook = take("codebook");
  for (std::size_t t = 2; t <= T; ++t) m.checkpoints.emplace_back(take("scale." + std::to_string(t)));
  if (!kv.empty()) throw ConfigError("unknown manifest key '" + kv.begin()->first + "'");
  return m;
}

ChainModel load_chain(const std::filesystem::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  ChainModel chain{m.schedule, vq::load_codebook(dir / m.codebook), {}, m.rows, m.cols, m.classes};
  for (const auto& p : m.checkpoints)
    chain.models.push_back(std::make_shared<model::Seq2SeqDenoiser>(model::load_checkpoint(dir / p)));
  chain.validate();
  return chain;
}

}  // namespace mdchain::chain
