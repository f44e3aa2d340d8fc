#include "mdchain/cli/run_config.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <functional>
#include <map>

#include "mdchain/error.hpp"

namespace mdchain::cli {

namespace {

using Setter = std::function<void(const std::vector<std::string>&)>;

std::string single(const std::string& key, const std::vector<std::string>& v) {
  if (v.size() != 1) throw ConfigError(key + ": expected one value");
  return v[0];
}

template <class T>
T number(const std::string& key, const std::string& text) {
  T value{};
  if (!CLI::detail::lexical_cast(text, value)) throw ConfigError(key + ": cannot parse '" + text + "'");
  return value;
}

template <class T>
Setter scalar(const std::string& key, T& field) {
  return [key, &field](const std::vector<std::string>& v) { field = number<T>(key, single(key, v)); };
}

Setter text(const std::string& key, std::string& field) {
  return [key, &field](const std::vector<std::string>& v) { field = single(key, v); };
}

Setter boolean(const std::string& key, bool& field) {
  return [key, &field](const std::vector<std::string>& v) {
    const std::string s = single(key, v);
    if (s == "true" || s == "1") {
      field = true;
    } else if (s == "false" || s == "0") {
      field = false;
    } else {
      throw ConfigError(key + ": expected true or false");
    }
  };
}

template <class T>
Setter list(const std::string& key, std::vector<T>& field) {
  return [key, &field](const std::vector<std::string>& v) {
    field.clear();
    for (const auto& s : v) field.push_back(number<T>(key, s));
  };
}

std::map<std::string, Setter> setters(RunConfig& c) {
  return {
      {"data.generator", text("data.generator", c.data.generator)},
      {"data.count", scalar("data.count", c.data.count)},
      {"data.height", scalar("data.height", c.data.height)},
      {"data.width", scalar("data.width", c.data.width)},
      {"data.channels", scalar("data.channels", c.data.channels)},
      {"data.classes", scalar("data.classes", c.data.classes)},
      {"data.palette_size", scalar("data.palette_size", c.data.palette_size)},
      {"data.block", scalar("data.block", c.data.block)},
      {"data.seed", scalar("data.seed", c.data.seed)},
      {"codebook.k", scalar("codebook.k", c.codebook.k)},
      {"codebook.patch", scalar("codebook.patch", c.codebook.patch)},
      {"codebook.iterations", scalar("codebook.iterations", c.codebook.iterations)},
      {"codebook.shrink", boolean("codebook.shrink", c.codebook.shrink)},
      {"codebook.seed", scalar("codebook.seed", c.codebook.seed)},
      {"schedule.T", scalar("schedule.T", c.T)},
      {"schedule.betas", list("schedule.betas", c.betas)},
      {"model.width", scalar("model.width", c.model.width)},
      {"model.heads", scalar("model.heads", c.model.heads)},
      {"model.encoder_layers", scalar("model.encoder_layers", c.model.encoder_layers)},
      {"model.decoder_layers", scalar("model.decoder_layers", c.model.decoder_layers)},
      {"model.ff", scalar("model.ff", c.model.ff)},
      {"model.encoder_ff", scalar("model.encoder_ff", c.model.encoder_ff)},
      {"train.batch", scalar("train.batch", c.train.batch)},
      {"train.epochs", scalar("train.epochs", c.train.epochs)},
      {"train.steps", scalar("train.steps", c.train.steps)},
      {"train.learning_rate", scalar("train.learning_rate", c.train.adam.learning_rate)},
      {"train.beta1", scalar("train.beta1", c.train.adam.beta1)},
      {"train.beta2", scalar("train.beta2", c.train.adam.beta2)},
      {"train.epsilon", scalar("train.epsilon", c.train.adam.epsilon)},
      {"train.seed", scalar("train.seed", c.train.seed)},
      {"train.threads", scalar("train.threads", c.threads)},
      {"sample.count", scalar("sample.count", c.sample.count)},
      {"sample.temperature", scalar("sample.temperature", c.sample.temperature)},
      {"sample.seed", scalar("sample.seed", c.sample.seed)},
      {"edit.rounds", scalar("edit.rounds", c.edit.rounds)},
      {"edit.round_scale", scalar("edit.round_scale", c.edit.round_scale)},
      {"edit.temperature", scalar("edit.temperature", c.edit.temperature)},
      {"edit.frames", boolean("edit.frames", c.edit.frames)},
      {"edit.seed", scalar("edit.seed", c.edit.seed)},
      {"eval.count", scalar("eval.count", c.eval.count)},
      {"eval.draws", scalar("eval.draws", c.eval.draws)},
      {"eval.seed", scalar("eval.seed", c.eval.seed)},
      {"bench.trials", scalar("bench.trials", c.bench.trials)},
      {"bench.total_layers", scalar("bench.total_layers", c.bench.total_layers)},
      {"bench.decoder_layers", list("bench.decoder_layers", c.bench.decoder_layers)},
      {"bench.length", scalar("bench.length", c.bench.length)},
      {"bench.seed", scalar("bench.seed", c.bench.seed)},
      {"output.dir", [&c](const std::vector<std::string>& v) { c.out = single("output.dir", v); }},
  };
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  RunConfig c;
  const auto table = setters(c);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    const std::string key = item.fullname();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(item.inputs);
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in);
}

void validate(const RunConfig& c) {
  data::validate(c.data);
  if (c.betas.size() + 1 != c.T) throw ConfigError("schedule.betas must list T-1 rates");
  diffusion::make_schedule(c.T, c.betas);
  if (c.codebook.k == 0 || c.codebook.patch == 0) throw ConfigError("codebook.k and codebook.patch must be positive");
  if (c.data.height % c.codebook.patch || c.data.width % c.codebook.patch) {
    throw ConfigError("image extents must be divisible by codebook.patch");
  }
  if (c.train.batch == 0) throw ConfigError("train.batch must be positive");
  if (c.threads == 0) throw ConfigError("train.threads must be positive");
  if (c.edit.round_scale < 2 || c.edit.round_scale > c.T) throw ConfigError("edit.round_scale must lie in 2..T");
  if (c.bench.trials == 0) throw ConfigError("bench.trials must be positive");
  for (std::size_t nd : c.bench.decoder_layers)
    if (nd == 0 || nd > c.bench.total_layers) throw ConfigError("bench.decoder_layers must lie in 1..total_layers");
}

}  // namespace mdchain::cli
