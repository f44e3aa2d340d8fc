#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mdchain/model/denoiser.hpp"
#include "mdchain/numeric/graph.hpp"

namespace mdchain::model {

struct DenoiserConfig {
  std::size_t vocab = 8;
  std::size_t length = 64;
  std::size_t classes = 0;  // one prepended source token when nonzero
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 2;
  std::size_t ff = 512;
  std::size_t encoder_ff = 0;  // 0 means the same as ff

  void validate() const;
  std::size_t condition_length() const { return classes > 0 ? 1 : 0; }
  std::size_t source_length() const { return length + condition_length(); }
  std::size_t effective_encoder_ff() const { return encoder_ff == 0 ? ff : encoder_ff; }

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

std::size_t parameter_count(const DenoiserConfig& config);

// Same width and decoder ff with the given layer split. Encoder layers get
// ff + 2*width hidden units, which gives them exactly the parameter count of
// a decoder layer, so every split of the same total depth has equal size.
DenoiserConfig with_layer_split(const DenoiserConfig& base, std::size_t encoder_layers, std::size_t decoder_layers);

// Smallest decoder ff (with encoder ff tied to it) whose parameter count is
// at least `target`.
DenoiserConfig match_parameters(const DenoiserConfig& base, std::size_t target);

struct SequenceExample {
  std::span<const int> source;
  Condition cond;
  std::span<const int> target;
};

// Pre-norm transformer encoder-decoder. The encoder reads [cond] + x_t
// bidirectionally; the decoder reads BOS + x_{t-1}[0..N-2] causally and
// cross-attends to the encoder output.
class Seq2SeqDenoiser final : public DenoiserModel {
 public:
  Seq2SeqDenoiser(const DenoiserConfig& config, std::uint64_t seed);

  std::size_t vocab() const override { return config_.vocab; }
  std::size_t length() const override { return config_.length; }
  std::size_t classes() const override { return config_.classes; }
  const DenoiserConfig& config() const { return config_; }

  // Records the batch on `graph` and returns the (batch*N) x K log-probabilities.
  ad::Var forward(ad::Graph& graph, std::span<const SequenceExample> batch);

  num::Tensor log_probs(std::span<const int> source, Condition cond, std::span<const int> target) const override;
  std::unique_ptr<DecodeSession> start(std::span<const int> source, Condition cond) const override;

  std::vector<ad::Parameter*> parameters();
  const std::vector<ad::Parameter>& parameter_list() const { return params_; }
  ad::Parameter& parameter(const std::string& name);
  std::size_t parameter_count() const;

  friend class Seq2SeqSession;

 private:
  struct Norm {
    std::size_t gain, bias;
  };
  struct Attn {
    std::size_t wq, wk, wv, wo;
  };
  struct Ff {
    std::size_t w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Norm ln1;
    Attn attn;
    Norm ln2;
    Ff ff;
  };
  struct DecoderLayer {
    Norm ln1;
    Attn self;
    Norm ln2;
    Attn cross;
    Norm ln3;
    Ff ff;
  };

  std::size_t add(const std::string& name, std::vector<std::size_t> shape);
  const num::Tensor& value(std::size_t i) const { return params_[i].value; }

  DenoiserConfig config_;
  std::vector<ad::Parameter> params_;
  std::size_t src_tok_, src_pos_, tgt_tok_, tgt_pos_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  Norm enc_norm_, dec_norm_;
  std::size_t out_w_, out_b_;
};

// Layout: 8-byte magic, nine config fields as uint64 LE, parameter count,
// then parameter values as doubles LE in declaration order.
void save_checkpoint(const std::filesystem::path& path, const Seq2SeqDenoiser& model);
Seq2SeqDenoiser load_checkpoint(const std::filesystem::path& path);

}  // namespace mdchain::model
