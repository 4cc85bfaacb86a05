#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqlab/corpus.hpp"
#include "seqlab/embeddings.hpp"
#include "seqlab/encoders.hpp"
#include "seqlab/gradcheck.hpp"
#include "seqlab/inference.hpp"

namespace seqlab {

enum class OptimizerKind { sgd, adagrad, adadelta, rmsprop, adam };

OptimizerKind parse_optimizer_kind(const std::string& text);
const char* to_string(OptimizerKind kind);

// Hyperparameters of one tagger configuration. Learning rate and epoch budget
// default differently per word encoder, so they stay unset until resolved.
struct ModelConfig {
  CharMode char_rep = CharMode::none;
  WordMode word_rep = WordMode::lstm;
  InferenceMode inference = InferenceMode::softmax;
  TagScheme tag_scheme = TagScheme::bioes;

  std::int64_t char_emb = 30;
  std::int64_t word_emb = 100;
  std::int64_t char_hidden = 50;
  std::int64_t word_hidden = 200;
  int word_cnn_layers = 4;
  std::int64_t batch_size = 10;

  double dropout = 0.5;
  double l2 = 1e-8;
  double lr_decay = 0.05;
  std::optional<double> lr;    // unset -> 0.015 (word LSTM) / 0.005 (word CNN)
  std::optional<int> epochs;   // unset -> 100 (word LSTM) / 200 (word CNN)
  double momentum = 0.0;
  double clip_norm = 5.0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  std::uint64_t seed = 42;

  double effective_lr() const;
  int effective_epochs() const;
  // Compact name like "CLSTM+WLSTM+CRF" identifying the architecture triple.
  std::string id() const;
  void validate() const;  // throws std::invalid_argument on out-of-range fields
};

// All twelve architecture triples, in a stable report order.
std::vector<ModelConfig> all_architectures(ModelConfig base = {});

// A full sequence-labeling model: word/char embeddings, the configured
// encoders, emission projection, and the inference layer's parameters.
class Tagger {
 public:
  // Random word embeddings.
  Tagger(const ModelConfig& config, const Alphabets& alphabets, Rng& rng);
  // Word embeddings seeded from a pretrained table (dims must agree).
  Tagger(const ModelConfig& config, const Alphabets& alphabets, Rng& rng,
         const EmbeddingTable& pretrained);

  // Emission scores [B*T_max, L] for a batch; train mode enables dropout and
  // batch-norm batch statistics.
  Tensor emissions(const Batch& batch, bool train_mode, Rng& dropout_rng);

  // Batch loss (softmax NLL or CRF NLL, summed over sentences).
  Tensor loss(const Batch& batch, bool train_mode, Rng& dropout_rng);

  // Predicted label ids per sentence, eval mode, no graph construction.
  std::vector<std::vector<std::int64_t>> decode(const Batch& batch);

  const ModelConfig& config() const { return config_; }
  const Alphabets& alphabets() const { return alphabets_; }
  std::int64_t num_labels() const { return num_labels_; }
  const CrfParams& crf() const;  // throws unless inference == crf

  // Trainable tensors / persistent buffers, in a stable order shared by the
  // optimizer, the checkpoint writer, and the gradient checker.
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  std::vector<std::pair<std::string, Tensor>> named_buffers();

  // Re-stamps structural constants (forbidden CRF transitions) after
  // in-place parameter updates. No-op for softmax inference.
  void apply_constraints();

 private:
  void build(Rng& rng, const EmbeddingTable* pretrained);

  ModelConfig config_;
  Alphabets alphabets_;
  std::int64_t num_labels_ = 0;
  Tensor word_table_;
  CharEncoderParams char_params_;
  WordEncoderParams word_params_;
  ProjectionParams projection_;
  CrfParams crf_;
};

// Central-difference check of every parameter of `config` on a tiny synthetic
// batch at reduced dimensions (the full stack in train mode, dropout off).
GradCheckReport model_gradient_check(ModelConfig config, std::uint64_t seed = 7);

}  // namespace seqlab
