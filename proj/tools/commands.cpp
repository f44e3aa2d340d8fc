#include "mdchain/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "mdchain/edit/edit.hpp"
#include "mdchain/error.hpp"
#include "mdchain/eval/evalbench.hpp"
#include "mdchain/vq/codebook.hpp"

namespace mdchain::cli {

namespace fs = std::filesystem;

namespace {

std::string numbered(const std::string& stem, std::size_t i, std::size_t channels) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.%s", stem.c_str(), i, channels == 1 ? "pgm" : "ppm");
  return buf;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<data::LabeledImage> read_corpus(const fs::path& dir) {
  std::ifstream in(dir / "labels.txt");
  if (!in) throw IoError("cannot open " + (dir / "labels.txt").string() + "; run gen-data first");
  std::vector<data::LabeledImage> out;
  std::string name;
  int label = 0;
  while (in >> name >> label) out.push_back({vq::read_pnm(dir / name), label});
  if (out.empty()) throw IoError(dir.string() + ": empty corpus");
  return out;
}

std::vector<vq::Image> images_of(const std::vector<data::LabeledImage>& corpus) {
  std::vector<vq::Image> out;
  for (const auto& li : corpus) out.push_back(li.image);
  return out;
}

model::Condition condition(std::size_t classes, int label) {
  return classes ? model::Condition(label) : std::nullopt;
}

std::string join(const std::vector<double>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? " " : "") << v[i];
  return s.str();
}

fs::path manifest_path(const RunConfig& config, const std::optional<fs::path>& given) {
  return given ? *given : Paths{config.out}.manifest();
}

}  // namespace

void cmd_gen_data(const RunConfig& config, std::ostream& log) {
  const Paths paths{config.out};
  make_dir(paths.data());
  std::ofstream labels(paths.data() / "labels.txt");
  if (!labels) throw IoError("cannot write " + (paths.data() / "labels.txt").string());
  for (std::size_t i = 0; i < config.data.count; ++i) {
    const auto li = data::generate(config.data, i);
    const std::string name = numbered("img", i, config.data.channels);
    vq::write_pnm(paths.data() / name, li.image);
    labels << name << ' ' << li.label << '\n';
  }
  if (!labels) throw IoError("failed writing labels");
  log << "wrote " << config.data.count << " " << config.data.generator << " images to " << paths.data().string()
      << "\n";
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  const Paths paths{config.out};
  const auto corpus = read_corpus(paths.data());
  const auto images = images_of(corpus);
  make_dir(paths.model());

  vq::Codebook codebook =
      vq::fit_codebook(images, config.codebook.k, config.codebook.patch, config.codebook.iterations, config.codebook.seed);
  std::vector<int> remap;
  if (config.codebook.shrink) {
    auto s = vq::shrink_codebook(codebook, images, mix_seed(config.codebook.seed, 1));
    codebook = std::move(s.codebook);
    remap = std::move(s.remap);
  }
  const auto recon = vq::reconstruction_report(images, codebook);
  log << "codebook: " << codebook.size() << " entries, reconstruction mse " << recon.mean_mse << "\n";

  const std::size_t classes = config.data.classes > 1 ? config.data.classes : 0;
  std::vector<chain::Example> dataset;
  for (const auto& li : corpus) dataset.push_back({vq::encode(li.image, codebook), condition(classes, li.label)});
  const std::size_t rows = dataset.front().x1.rows, cols = dataset.front().x1.cols;

  model::DenoiserConfig mc = config.model;
  mc.vocab = codebook.size();
  mc.length = rows * cols;
  mc.classes = classes;
  mc.validate();
  const auto schedule = diffusion::make_schedule(config.T, config.betas);
  log << "training " << config.T - 1 << " scales, " << model::parameter_count(mc) << " parameters each\n";

  std::vector<std::optional<model::Seq2SeqDenoiser>> models(config.T + 1);
  std::vector<std::vector<double>> curves(config.T + 1);
  std::mutex log_mutex;
  std::vector<std::exception_ptr> errors(config.T + 1);
  auto run = [&](std::size_t t) {
    try {
      auto m = chain::init_scale_model(mc, t, config.train.seed);
      curves[t] = chain::train_scale(m, t, dataset, schedule, config.train, [&](std::size_t s, std::size_t e, double l) {
        std::lock_guard lock(log_mutex);
        log << "scale " << s << " epoch " << e << " loss " << l << "\n";
      });
      models[t].emplace(std::move(m));
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  std::vector<std::size_t> scales;
  for (std::size_t t = 2; t <= config.T; ++t) scales.push_back(t);
  for (std::size_t begin = 0; begin < scales.size(); begin += config.threads) {
    std::vector<std::thread> workers;
    for (std::size_t i = begin; i < std::min(scales.size(), begin + config.threads); ++i)
      workers.emplace_back(run, scales[i]);
    for (auto& w : workers) w.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  chain::Manifest manifest{schedule, "codebook.bin", {}, rows, cols, classes};
  vq::save_codebook(paths.model() / "codebook.bin", codebook);
  std::ofstream curve(paths.model() / "train_log.csv");
  curve << "scale,epoch,loss\n";
  for (std::size_t t = 2; t <= config.T; ++t) {
    const std::string name = "scale" + std::to_string(t) + ".ckpt";
    model::save_checkpoint(paths.model() / name, *models[t]);
    manifest.checkpoints.emplace_back(name);
    for (std::size_t e = 0; e < curves[t].size(); ++e) curve << t << ',' << e << ',' << curves[t][e] << '\n';
  }
  if (!curve) throw IoError("failed writing train_log.csv");
  chain::save_manifest(paths.manifest(), manifest);
  log << "wrote " << paths.manifest().string() << "\n";
}

void cmd_sample(const RunConfig& config, const SampleArgs& args, std::ostream& log) {
  const chain::ChainModel chain = chain::load_chain(manifest_path(config, args.manifest));
  if (args.label) {
    if (!chain.classes) throw UsageError("--class given but the chain is unconditional");
    if (*args.label < 0 || static_cast<std::size_t>(*args.label) >= chain.classes) {
      throw UsageError("--class outside 0.." + std::to_string(chain.classes - 1));
    }
  }
  const std::size_t count = args.count.value_or(config.sample.count);
  const Paths paths{config.out};
  if (count) make_dir(paths.samples());
  Rng rng(config.sample.seed);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = args.label.value_or(chain.classes ? static_cast<int>(i % chain.classes) : 0);
    const auto s = chain::sample_chain(chain, condition(chain.classes, label), rng, config.sample.temperature);
    vq::write_pnm(paths.samples() / numbered("sample", i, s.image.channels), s.image);
  }
  log << "wrote " << count << " samples\n";
}

void cmd_edit(const RunConfig& config, const EditArgs& args, std::ostream& log) {
  const chain::ChainModel chain = chain::load_chain(manifest_path(config, args.manifest));
  if (args.label && !chain.classes) throw UsageError("--class given but the chain is unconditional");
  const vq::Image image = vq::read_pnm(args.image);
  const vq::Image mask = edit::read_pixel_mask(args.mask);
  const std::size_t f = chain.codebook->patch_size();
  if (image.height != chain.rows * f || image.width != chain.cols * f || image.channels != chain.codebook->channels()) {
    throw UsageError("image extents do not match the chain");
  }
  if (mask.height != image.height || mask.width != image.width) throw UsageError("mask extents do not match the image");

  edit::EditOptions opt;
  opt.rounds = args.rounds.value_or(config.edit.rounds);
  opt.round_scale = config.edit.round_scale;
  opt.temperature = config.edit.temperature;
  Rng rng(config.edit.seed);
  const auto out = edit::edit_image(image, mask, chain, condition(chain.classes, args.label.value_or(0)), rng, opt);
  if (out.result.empty_mask) log << "warning: mask selects no tokens; returning the reconstruction\n";

  const Paths paths{config.out};
  make_dir(paths.edits());
  const std::string ext = image.channels == 1 ? ".pgm" : ".ppm";
  vq::write_pnm(paths.edits() / ("edited" + ext), out.image);
  const auto tmask = edit::downsample_mask(mask, f);
  const auto mirror = vq::vertical_mirror_table(*chain.codebook);
  std::ofstream metrics(paths.edits() / "metrics.csv");
  metrics << "state,symmetry_violation\n";
  for (std::size_t k = 0; k < out.result.trajectory.size(); ++k) {
    const auto& state = out.result.trajectory[k];
    metrics << k << ',' << edit::symmetry_violation(state, tmask, mirror) << '\n';
    if (args.frames || config.edit.frames) {
      vq::write_pnm(paths.edits() / numbered("frame", k, image.channels), vq::decode(state, *chain.codebook));
    }
  }
  if (!metrics) throw IoError("failed writing edit metrics");
  log << "edited " << tmask.masked() << " of " << tmask.size() << " tokens, final symmetry violation "
      << edit::symmetry_violation(out.result.tokens, tmask, mirror) << "\n";
}

void cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log) {
  const fs::path manifest = manifest_path(config, args.manifest);
  chain::ChainModel chain = chain::load_chain(manifest);
  if (args.uniform) {
    for (auto& m : chain.models) m = std::make_shared<model::UniformModel>(m->vocab(), m->length(), m->classes());
  }
  std::vector<data::LabeledImage> corpus;
  if (args.data) {
    corpus = read_corpus(*args.data);
  } else {
    for (std::size_t i = 0; i < config.eval.count; ++i) corpus.push_back(data::generate(config.data, config.data.count + i));
  }
  std::vector<chain::Example> dataset;
  for (const auto& li : corpus) {
    const TokenGrid x = vq::encode(li.image, *chain.codebook);
    if (x.rows != chain.rows || x.cols != chain.cols) throw UsageError("evaluation images do not match the chain");
    dataset.push_back({x, condition(chain.classes, li.label)});
  }
  const auto images = images_of(corpus);
  Rng rng(config.eval.seed);
  const auto r = chain::elbo_report(chain, dataset, rng, config.eval.draws, images);

  const double per_bit = static_cast<double>(chain.length()) * std::log(2.0);
  const std::map<std::string, std::string> prov{
      {"K", std::to_string(chain.vocab())},     {"N", std::to_string(chain.length())},
      {"T", std::to_string(chain.schedule.T())}, {"betas", join(chain.schedule.betas())},
      {"manifest", manifest.string()},           {"models", args.uniform ? "uniform" : "trained"},
      {"examples", std::to_string(dataset.size())}, {"draws", std::to_string(config.eval.draws)}};
  const std::string hash = eval::config_hash(prov);
  std::vector<eval::MetricRow> rows;
  for (std::size_t t = 2; t <= chain.schedule.T(); ++t)
    rows.push_back({"scale" + std::to_string(t) + "_bits_per_token", hash, r.scale_nats[t - 2] / per_bit, config.eval.seed});
  rows.push_back({"prior_kl_bits_per_token", hash, r.prior_nats / per_bit, config.eval.seed});
  rows.push_back({"total_bits_per_token", hash, r.bits_per_token, config.eval.seed});
  rows.push_back({"reconstruction_mse", hash, r.reconstruction_mse.value_or(0.0), config.eval.seed});

  make_dir(config.out);
  std::ofstream out(config.out / "eval.csv");
  eval::write_csv(out, rows, prov);
  if (!out) throw IoError("failed writing eval.csv");
  eval::write_csv(log, rows, prov);
}

void cmd_bench(const RunConfig& config, std::ostream& log) {
  const auto& b = config.bench;
  model::DenoiserConfig base = config.model;
  base.vocab = config.codebook.k;
  base.length = b.length;
  base.classes = 0;
  const auto slow = model::with_layer_split(base, 0, b.total_layers);
  const std::map<std::string, std::string> prov{
      {"K", std::to_string(base.vocab)},        {"N", std::to_string(b.length)},
      {"width", std::to_string(base.width)},    {"heads", std::to_string(base.heads)},
      {"ff", std::to_string(base.ff)},          {"total_layers", std::to_string(b.total_layers)},
      {"trials", std::to_string(b.trials)},     {"seed", std::to_string(b.seed)},
      {"baseline", "encoder_layers=0"}};
  std::vector<eval::MetricRow> rows;
  for (std::size_t nd : b.decoder_layers) {
    const auto fast = model::with_layer_split(base, b.total_layers - nd, nd);
    const auto r = eval::compare_decode_speed(fast, slow, b.trials, b.seed);
    auto p = prov;
    p["encoder_layers"] = std::to_string(fast.encoder_layers);
    p["decoder_layers"] = std::to_string(nd);
    p["parameters"] = std::to_string(model::parameter_count(fast));
    const std::string hash = eval::config_hash(p);
    const std::string tag = "[" + std::to_string(fast.encoder_layers) + "+" + std::to_string(nd) + "]";
    rows.push_back({"seconds_per_sample" + tag, hash, r.fast_result.seconds_per_sample, b.seed});
    rows.push_back({"tokens_per_second" + tag, hash, r.fast_result.tokens_per_second, b.seed});
    rows.push_back({"measured_speedup" + tag, hash, r.measured, b.seed});
    rows.push_back({"predicted_speedup" + tag, hash, r.predicted, b.seed});
  }
  make_dir(config.out);
  std::ofstream out(config.out / "bench.csv");
  eval::write_csv(out, rows, prov);
  if (!out) throw IoError("failed writing bench.csv");
  eval::write_csv(log, rows, prov);
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const TrainingError*>(&e)) return 3;
  return 2;
}

}  // namespace mdchain::cli
