#include "mdchain/model/seq2seq.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "mdchain/binary_io.hpp"
#include "mdchain/error.hpp"

namespace mdchain::model {

using num::RowMatrix;
using num::Tensor;
using namespace binary;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

namespace {

constexpr char kCheckpointMagic[] = "MDCMODL1";
constexpr double kNormEps = 1e-5;
template <typename In, typename Out>
void norm_rows(const In& x, const Tensor& gain, const Tensor& bias, Out& out) {
  const Eigen::Index d = x.cols();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).sum() / static_cast<double>(d);
    const double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    for (Eigen::Index c = 0; c < d; ++c) out(r, c) = (x(r, c) - mu) * inv * gain[c] + bias[c];
  }
}

void softmax_inplace(Eigen::Ref<Eigen::VectorXd> s) {
  s.array() = (s.array() - s.maxCoeff()).exp();
  s /= s.sum();
}

std::size_t enc_layer_params(std::size_t d, std::size_t fe) { return 4 * d * d + 5 * d + fe * (2 * d + 1); }
std::size_t dec_layer_params(std::size_t d, std::size_t ff) { return 8 * d * d + 7 * d + ff * (2 * d + 1); }

}  // namespace

void DenoiserConfig::validate() const {
  if (vocab < 1) throw ConfigError("vocab must be positive");
  if (length < 1) throw ConfigError("length must be positive");
  if (width < 1 || heads < 1 || width % heads != 0) throw ConfigError("width must be a positive multiple of heads");
  if (decoder_layers < 1) throw ConfigError("at least one decoder layer is required");
  if (ff < 1) throw ConfigError("ff must be positive");
}

std::size_t parameter_count(const DenoiserConfig& c) {
  const std::size_t d = c.width;
  const std::size_t embeddings = (c.vocab + c.classes) * d + c.source_length() * d + (c.vocab + 1) * d + c.length * d;
  const std::size_t head = 4 * d + d * c.vocab + c.vocab;
  return embeddings + c.encoder_layers * enc_layer_params(d, c.effective_encoder_ff()) +
         c.decoder_layers * dec_layer_params(d, c.ff) + head;
}

DenoiserConfig with_layer_split(const DenoiserConfig& base, std::size_t encoder_layers, std::size_t decoder_layers) {
  DenoiserConfig c = base;
  c.encoder_layers = encoder_layers;
  c.decoder_layers = decoder_layers;
  c.encoder_ff = base.ff + 2 * base.width;
  return c;
}

DenoiserConfig match_parameters(const DenoiserConfig& base, std::size_t target) {
  DenoiserConfig c = base;
  const bool tied = base.encoder_ff != 0 && base.encoder_ff != base.ff;
  const std::size_t offset = tied ? base.encoder_ff - base.ff : 0;
  for (c.ff = 1;; ++c.ff) {
    if (tied) c.encoder_ff = c.ff + offset;
    if (parameter_count(c) >= target) return c;
  }
}

std::size_t Seq2SeqDenoiser::add(const std::string& name, std::vector<std::size_t> shape) {
  params_.emplace_back(name, Tensor(std::move(shape)));
  return params_.size() - 1;
}

Seq2SeqDenoiser::Seq2SeqDenoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.width, K = config_.vocab;
  const std::size_t fe = config_.effective_encoder_ff();
  auto norm = [&](const std::string& n) { return Norm{add(n + ".gain", {1, d}), add(n + ".bias", {1, d})}; };
  auto attn = [&](const std::string& n) {
    return Attn{add(n + ".wq", {d, d}), add(n + ".wk", {d, d}), add(n + ".wv", {d, d}), add(n + ".wo", {d, d})};
  };
  auto ffn = [&](const std::string& n, std::size_t hidden) {
    return Ff{add(n + ".w1", {d, hidden}), add(n + ".b1", {1, hidden}), add(n + ".w2", {hidden, d}),
              add(n + ".b2", {1, d})};
  };
  src_tok_ = add("src_tok", {K + config_.classes, d});
  src_pos_ = add("src_pos", {config_.source_length(), d});
  tgt_tok_ = add("tgt_tok", {K + 1, d});
  tgt_pos_ = add("tgt_pos", {config_.length, d});
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    EncoderLayer e;
    e.ln1 = norm(p + ".ln1");
    e.attn = attn(p + ".attn");
    e.ln2 = norm(p + ".ln2");
    e.ff = ffn(p + ".ff", fe);
    enc_.push_back(e);
  }
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    DecoderLayer e;
    e.ln1 = norm(p + ".ln1");
    e.self = attn(p + ".self");
    e.ln2 = norm(p + ".ln2");
    e.cross = attn(p + ".cross");
    e.ln3 = norm(p + ".ln3");
    e.ff = ffn(p + ".ff", config_.ff);
    dec_.push_back(e);
  }
  enc_norm_ = norm("enc_norm");
  dec_norm_ = norm("dec_norm");
  out_w_ = add("out.w", {d, K});
  out_b_ = add("out.b", {1, K});

  Rng rng(seed);
  for (auto& p : params_) {
    const std::string& n = p.name;
    const auto ends_with = [&](const char* s) {
      const std::string suffix(s);
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (n == "src_tok" || n == "tgt_tok") {
      for (double& v : p.value.values()) v = rng.normal();
    } else if (n == "src_pos" || n == "tgt_pos") {
      for (double& v : p.value.values()) v = 0.02 * rng.normal();
    } else if (ends_with(".gain")) {
      p.value.fill(1.0);
    } else if (ends_with(".bias") || ends_with(".b1") || ends_with(".b2") || ends_with(".b")) {
      p.value.fill(0.0);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
      for (double& v : p.value.values()) v = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
}

std::vector<ad::Parameter*> Seq2SeqDenoiser::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

ad::Parameter& Seq2SeqDenoiser::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("no parameter named " + name);
}

std::size_t Seq2SeqDenoiser::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ad::Var Seq2SeqDenoiser::forward(ad::Graph& g, std::span<const SequenceExample> batch) {
  const std::size_t B = batch.size();
  if (B == 0) throw DimensionError("empty batch");
  const std::size_t N = config_.length, S = config_.source_length(), H = config_.heads;
  std::vector<int> src_ids, src_pos, tgt_ids, tgt_pos;
  for (const auto& ex : batch) {
    check_source(ex.source, ex.cond);
    check_target(ex.target);
    if (ex.cond) src_ids.push_back(static_cast<int>(config_.vocab) + *ex.cond);
    src_ids.insert(src_ids.end(), ex.source.begin(), ex.source.end());
    tgt_ids.push_back(static_cast<int>(config_.vocab));
    tgt_ids.insert(tgt_ids.end(), ex.target.begin(), ex.target.end() - 1);
    for (std::size_t i = 0; i < S; ++i) src_pos.push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < N; ++i) tgt_pos.push_back(static_cast<int>(i));
  }
  auto P = [&](std::size_t i) { return g.parameter(params_[i]); };
  auto norm = [&](ad::Var x, const Norm& n) { return ad::layer_norm(x, P(n.gain), P(n.bias), kNormEps); };
  auto ffn = [&](ad::Var x, const Ff& f) {
    ad::Var h = ad::gelu(ad::add_row(ad::matmul(x, P(f.w1)), P(f.b1)));
    return ad::add_row(ad::matmul(h, P(f.w2)), P(f.b2));
  };

  ad::Var x = ad::add(ad::gather_rows(P(src_tok_), src_ids), ad::gather_rows(P(src_pos_), src_pos));
  for (const auto& l : enc_) {
    ad::Var h = norm(x, l.ln1);
    ad::Var a = ad::attention(ad::matmul(h, P(l.attn.wq)), ad::matmul(h, P(l.attn.wk)), ad::matmul(h, P(l.attn.wv)),
                              H, B, false);
    x = ad::add(x, ad::matmul(a, P(l.attn.wo)));
    x = ad::add(x, ffn(norm(x, l.ln2), l.ff));
  }
  ad::Var mem = norm(x, enc_norm_);

  ad::Var y = ad::add(ad::gather_rows(P(tgt_tok_), tgt_ids), ad::gather_rows(P(tgt_pos_), tgt_pos));
  for (const auto& l : dec_) {
    ad::Var h = norm(y, l.ln1);
    ad::Var a = ad::attention(ad::matmul(h, P(l.self.wq)), ad::matmul(h, P(l.self.wk)), ad::matmul(h, P(l.self.wv)),
                              H, B, true);
    y = ad::add(y, ad::matmul(a, P(l.self.wo)));
    h = norm(y, l.ln2);
    a = ad::attention(ad::matmul(h, P(l.cross.wq)), ad::matmul(mem, P(l.cross.wk)), ad::matmul(mem, P(l.cross.wv)),
                      H, B, false);
    y = ad::add(y, ad::matmul(a, P(l.cross.wo)));
    y = ad::add(y, ffn(norm(y, l.ln3), l.ff));
  }
  ad::Var logits = ad::add_row(ad::matmul(norm(y, dec_norm_), P(out_w_)), P(out_b_));
  return ad::log_softmax_rows(logits);
}

num::Tensor Seq2SeqDenoiser::log_probs(std::span<const int> source, Condition cond, std::span<const int> target) const {
  ad::Graph g;
  const SequenceExample ex{source, cond, target};
  // The graph reads parameter values and never writes them without backward().
  ad::Var lp = const_cast<Seq2SeqDenoiser*>(this)->forward(g, std::span<const SequenceExample>(&ex, 1));
  return lp.value();
}

// Encoder runs once over the source with matrix products; the decoder then
// advances one position per step against cached self-attention keys/values
// and precomputed cross-attention keys/values.
class Seq2SeqSession final : public DecodeSession {
 public:
  Seq2SeqSession(const Seq2SeqDenoiser& m, std::span<const int> source, Condition cond) : m_(m) {
    const auto& c = m.config_;
    d_ = c.width;
    heads_ = c.heads;
    dh_ = d_ / heads_;
    inv_sqrt_ = 1.0 / std::sqrt(static_cast<double>(dh_));
    const std::size_t S = c.source_length();

    RowMatrix x(S, d_);
    const auto tok = m.value(m.src_tok_).mat();
    const auto pos = m.value(m.src_pos_).mat();
    std::size_t r = 0;
    if (cond) {
      x.row(r) = tok.row(static_cast<Eigen::Index>(c.vocab) + *cond) + pos.row(0);
      ++r;
    }
    for (int v : source) {
      x.row(r) = tok.row(v) + pos.row(static_cast<Eigen::Index>(r));
      ++r;
    }
    RowMatrix h(S, d_), q(S, d_), k(S, d_), v(S, d_), o(S, d_), scores(S, S);
    for (const auto& l : m.enc_) {
      norm_rows(x, m.value(l.ln1.gain), m.value(l.ln1.bias), h);
      q.noalias() = h * m.value(l.attn.wq).mat();
      k.noalias() = h * m.value(l.attn.wk).mat();
      v.noalias() = h * m.value(l.attn.wv).mat();
      for (std::size_t hd = 0; hd < heads_; ++hd) {
        const auto col = static_cast<Eigen::Index>(hd * dh_);
        const auto w = static_cast<Eigen::Index>(dh_);
        scores.noalias() = q.middleCols(col, w) * k.middleCols(col, w).transpose();
        scores *= inv_sqrt_;
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
          auto row = scores.row(i);
          row.array() = (row.array() - row.maxCoeff()).exp();
          row /= row.sum();
        }
        o.middleCols(col, w).noalias() = scores * v.middleCols(col, w);
      }
      x.noalias() += o * m.value(l.attn.wo).mat();
      norm_rows(x, m.value(l.ln2.gain), m.value(l.ln2.bias), h);
      RowMatrix u = h * m.value(l.ff.w1).mat();
      u.rowwise() += m.value(l.ff.b1).mat().row(0);
      num::gelu_inplace(std::span<double>(u.data(), static_cast<std::size_t>(u.size())));
      x.noalias() += u * m.value(l.ff.w2).mat();
      x.rowwise() += m.value(l.ff.b2).mat().row(0);
    }
    RowMatrix mem(S, d_);
    norm_rows(x, m.value(m.enc_norm_.gain), m.value(m.enc_norm_.bias), mem);

    const std::size_t N = c.length;
    for (const auto& l : m.dec_) {
      cross_k_.emplace_back(mem * m.value(l.cross.wk).mat());
      cross_v_.emplace_back(mem * m.value(l.cross.wv).mat());
      self_k_.emplace_back(RowMatrix::Zero(N, d_));
      self_v_.emplace_back(RowMatrix::Zero(N, d_));
    }
    x_.resize(d_);
    h_.resize(d_);
    q_.resize(d_);
    o_.resize(d_);
    u_.resize(c.ff);
    scores_.resize(static_cast<Eigen::Index>(std::max(N, S)));
    logits_.resize(c.vocab);
    prev_ = static_cast<int>(c.vocab);
  }

  std::vector<double> next_log_probs() override {
    step();
    return log_probs_;
  }

  void push(int token) override {
    if (pos_ >= m_.config_.length) throw ContractError("decode session is past the end of the sequence");
    step();
    prev_ = token;
    ++pos_;
    computed_ = false;
  }

  std::size_t position() const override { return pos_; }

 private:
  void attend(const RowMatrix& keys, const RowMatrix& values, std::size_t count) {
    const auto n = static_cast<Eigen::Index>(count);
    const auto w = static_cast<Eigen::Index>(dh_);
    for (std::size_t hd = 0; hd < heads_; ++hd) {
      const auto col = static_cast<Eigen::Index>(hd * dh_);
      auto s = scores_.head(n);
      s.noalias() = keys.block(0, col, n, w) * q_.segment(col, w).transpose();
      s *= inv_sqrt_;
      softmax_inplace(s);
      o_.segment(col, w).noalias() = s.transpose() * values.block(0, col, n, w);
    }
  }

  void step() {
    if (computed_) return;
    const Seq2SeqDenoiser& m = m_;
    const auto p = static_cast<Eigen::Index>(pos_);
    x_ = m.value(m.tgt_tok_).mat().row(prev_) + m.value(m.tgt_pos_).mat().row(p);
    for (std::size_t li = 0; li < m.dec_.size(); ++li) {
      const auto& l = m.dec_[li];
      norm_rows(x_, m.value(l.ln1.gain), m.value(l.ln1.bias), h_);
      q_.noalias() = h_ * m.value(l.self.wq).mat();
      self_k_[li].row(p).noalias() = h_ * m.value(l.self.wk).mat();
      self_v_[li].row(p).noalias() = h_ * m.value(l.self.wv).mat();
      attend(self_k_[li], self_v_[li], pos_ + 1);
      x_.noalias() += o_ * m.value(l.self.wo).mat();

      norm_rows(x_, m.value(l.ln2.gain), m.value(l.ln2.bias), h_);
      q_.noalias() = h_ * m.value(l.cross.wq).mat();
      attend(cross_k_[li], cross_v_[li], static_cast<std::size_t>(cross_k_[li].rows()));
      x_.noalias() += o_ * m.value(l.cross.wo).mat();

      norm_rows(x_, m.value(l.ln3.gain), m.value(l.ln3.bias), h_);
      u_.noalias() = h_ * m.value(l.ff.w1).mat();
      u_ += m.value(l.ff.b1).mat().row(0);
      num::gelu_inplace(std::span<double>(u_.data(), static_cast<std::size_t>(u_.size())));
      x_.noalias() += u_ * m.value(l.ff.w2).mat();
      x_ += m.value(l.ff.b2).mat().row(0);
    }
    norm_rows(x_, m.value(m.dec_norm_.gain), m.value(m.dec_norm_.bias), h_);
    logits_.noalias() = h_ * m.value(m.out_w_).mat();
    logits_ += m.value(m.out_b_).mat().row(0);
    log_probs_ = log_softmax(std::span<const double>(logits_.data(), static_cast<std::size_t>(logits_.size())));
    computed_ = true;
  }

  const Seq2SeqDenoiser& m_;
  std::size_t d_ = 0, heads_ = 0, dh_ = 0;
  double inv_sqrt_ = 1.0;
  std::vector<RowMatrix> cross_k_, cross_v_, self_k_, self_v_;
  RowVec x_, h_, q_, o_, u_, logits_;
  Eigen::VectorXd scores_;
  std::vector<double> log_probs_;
  std::size_t pos_ = 0;
  int prev_ = 0;
  bool computed_ = false;
};

std::unique_ptr<DecodeSession> Seq2SeqDenoiser::start(std::span<const int> source, Condition cond) const {
  check_source(source, cond);
  return std::make_unique<Seq2SeqSession>(*this, source, cond);
}

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqDenoiser& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const auto& c = model.config();
  write_magic(out, kCheckpointMagic);
  for (std::size_t v : {c.vocab, c.length, c.classes, c.width, c.heads, c.encoder_layers, c.decoder_layers, c.ff,
                        c.encoder_ff})
    write_u64(out, v);
  write_u64(out, model.parameter_count());
  for (const auto& p : model.parameter_list())
    for (double v : p.value.values()) write_f64(out, v);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Seq2SeqDenoiser load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  expect_magic(in, kCheckpointMagic, path.string());
  DenoiserConfig c;
  for (std::size_t* f : {&c.vocab, &c.length, &c.classes, &c.width, &c.heads, &c.encoder_layers, &c.decoder_layers,
                         &c.ff, &c.encoder_ff})
    *f = read_u64(in);
  Seq2SeqDenoiser model(c, 0);
  if (read_u64(in) != model.parameter_count()) throw IoError("checkpoint parameter count does not match its config");
  for (auto* p : model.parameters())
    for (double& v : p->value.values()) v = read_f64(in);
  return model;
}

}  // namespace mdchain::model
