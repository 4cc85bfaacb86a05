#include "seqlab/model.hpp"

#include <stdexcept>

namespace seqlab {

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adagrad") return OptimizerKind::adagrad;
  if (text == "adadelta") return OptimizerKind::adadelta;
  if (text == "rmsprop") return OptimizerKind::rmsprop;
  if (text == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + text +
                              "' (sgd, adagrad, adadelta, rmsprop, adam)");
}

const char* to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adagrad: return "adagrad";
    case OptimizerKind::adadelta: return "adadelta";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::adam: return "adam";
  }
  return "sgd";
}

double ModelConfig::effective_lr() const {
  if (lr.has_value()) return *lr;
  return word_rep == WordMode::lstm ? 0.015 : 0.005;
}

int ModelConfig::effective_epochs() const {
  if (epochs.has_value()) return *epochs;
  return word_rep == WordMode::lstm ? 100 : 200;
}

std::string ModelConfig::id() const {
  std::string name;
  switch (char_rep) {
    case CharMode::none: name = "Nochar"; break;
    case CharMode::lstm: name = "CLSTM"; break;
    case CharMode::cnn: name = "CCNN"; break;
  }
  name += word_rep == WordMode::lstm ? "+WLSTM" : "+WCNN";
  name += inference == InferenceMode::softmax ? "+Softmax" : "+CRF";
  return name;
}

void ModelConfig::validate() const {
  if (char_rep != CharMode::none && (char_emb < 1 || char_hidden < 1)) {
    throw std::invalid_argument("config: char dimensions must be positive");
  }
  if (char_rep == CharMode::lstm && char_hidden % 2 != 0) {
    throw std::invalid_argument("config: char_hidden must be even for a bidirectional LSTM");
  }
  if (word_emb < 1 || word_hidden < 1) {
    throw std::invalid_argument("config: word dimensions must be positive");
  }
  if (word_rep == WordMode::lstm && word_hidden % 2 != 0) {
    throw std::invalid_argument("config: word_hidden must be even for a bidirectional LSTM");
  }
  if (word_rep == WordMode::cnn && word_cnn_layers < 1) {
    throw std::invalid_argument("config: word_cnn_layers must be at least 1");
  }
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("config: dropout must lie in [0, 1)");
  }
  if (l2 < 0.0) throw std::invalid_argument("config: l2 must be non-negative");
  if (lr_decay < 0.0) throw std::invalid_argument("config: lr_decay must be non-negative");
  if (lr.has_value() && *lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
  if (epochs.has_value() && *epochs < 1) {
    throw std::invalid_argument("config: epochs must be at least 1");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("config: momentum must lie in [0, 1)");
  }
  if (clip_norm < 0.0) throw std::invalid_argument("config: clip_norm must be non-negative");
}

std::vector<ModelConfig> all_architectures(ModelConfig base) {
  std::vector<ModelConfig> configs;
  for (CharMode char_rep : {CharMode::none, CharMode::lstm, CharMode::cnn}) {
    for (WordMode word_rep : {WordMode::lstm, WordMode::cnn}) {
      for (InferenceMode inference : {InferenceMode::softmax, InferenceMode::crf}) {
        ModelConfig config = base;
        config.char_rep = char_rep;
        config.word_rep = word_rep;
        config.inference = inference;
        configs.push_back(config);
      }
    }
  }
  return configs;
}

Tagger::Tagger(const ModelConfig& config, const Alphabets& alphabets, Rng& rng)
    : config_(config), alphabets_(alphabets) {
  build(rng, nullptr);
}

Tagger::Tagger(const ModelConfig& config, const Alphabets& alphabets, Rng& rng,
               const EmbeddingTable& pretrained)
    : config_(config), alphabets_(alphabets) {
  build(rng, &pretrained);
}

void Tagger::build(Rng& rng, const EmbeddingTable* pretrained) {
  config_.validate();
  num_labels_ = alphabets_.labels.size();
  if (num_labels_ < 1) throw std::invalid_argument("Tagger: empty label alphabet");

  if (pretrained != nullptr) {
    if (pretrained->dim != config_.word_emb) {
      throw std::invalid_argument("Tagger: embedding file is " + std::to_string(pretrained->dim) +
                                  "-dimensional, config expects " +
                                  std::to_string(config_.word_emb));
    }
    if (pretrained->matrix.dim(0) != alphabets_.words.size()) {
      throw std::invalid_argument("Tagger: embedding table rows do not match word alphabet");
    }
    // deep copy so training never mutates the caller's table
    word_table_ = Tensor::from_values(pretrained->matrix.shape(), pretrained->matrix.values(),
                                      true);
  } else {
    word_table_ = random_embedding_table(alphabets_.words.size(), config_.word_emb, rng);
  }

  if (config_.char_rep == CharMode::none) {
    char_params_ = make_char_encoder(CharMode::none, 0, 0, 0, rng);
  } else {
    char_params_ = make_char_encoder(config_.char_rep, alphabets_.chars.size(), config_.char_emb,
                                     config_.char_hidden, rng);
  }

  const std::int64_t compose_width = config_.word_emb + char_params_.rep_width();
  word_params_ = make_word_encoder(config_.word_rep, compose_width, config_.word_hidden,
                                   config_.word_rep == WordMode::cnn ? config_.word_cnn_layers : 0,
                                   rng);
  projection_ = make_projection(config_.word_hidden, num_labels_, rng);
  if (config_.inference == InferenceMode::crf) {
    crf_ = make_crf(num_labels_, rng);
  }
}

Tensor Tagger::emissions(const Batch& batch, bool train_mode, Rng& dropout_rng) {
  Tensor char_reps = encode_batch_chars(char_params_, batch, config_.dropout, train_mode,
                                        dropout_rng);
  Tensor composed = compose_inputs(batch, word_table_, char_reps, config_.dropout, train_mode,
                                   dropout_rng);
  Tensor hidden = word_encode(word_params_, composed, batch, config_.dropout, train_mode,
                              dropout_rng);
  return project_emissions(projection_, hidden);
}

Tensor Tagger::loss(const Batch& batch, bool train_mode, Rng& dropout_rng) {
  Tensor scores = emissions(batch, train_mode, dropout_rng);
  if (config_.inference == InferenceMode::crf) {
    return crf_nll(scores, crf_, batch);
  }
  return softmax_nll(scores, batch);
}

std::vector<std::vector<std::int64_t>> Tagger::decode(const Batch& batch) {
  NoGradGuard no_grad;
  Rng unused(0);  // eval-mode dropout never draws
  Tensor scores = emissions(batch, false, unused);
  if (config_.inference == InferenceMode::crf) {
    return crf_decode(scores, crf_, batch);
  }
  return softmax_decode(scores, batch);
}

const CrfParams& Tagger::crf() const {
  if (config_.inference != InferenceMode::crf) {
    throw std::logic_error("Tagger: no CRF parameters under softmax inference");
  }
  return crf_;
}

std::vector<std::pair<std::string, Tensor>> Tagger::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("embedding.word", word_table_);
  if (config_.char_rep == CharMode::cnn) {
    params.emplace_back("char.embedding", char_params_.embeddings);
    params.emplace_back("char.conv.weight", char_params_.conv_weight);
    params.emplace_back("char.conv.bias", char_params_.conv_bias);
  } else if (config_.char_rep == CharMode::lstm) {
    params.emplace_back("char.embedding", char_params_.embeddings);
    params.emplace_back("char.fwd.w_input", char_params_.forward_cell.w_input);
    params.emplace_back("char.fwd.w_hidden", char_params_.forward_cell.w_hidden);
    params.emplace_back("char.fwd.bias", char_params_.forward_cell.bias);
    params.emplace_back("char.bwd.w_input", char_params_.backward_cell.w_input);
    params.emplace_back("char.bwd.w_hidden", char_params_.backward_cell.w_hidden);
    params.emplace_back("char.bwd.bias", char_params_.backward_cell.bias);
  }
  if (config_.word_rep == WordMode::lstm) {
    params.emplace_back("word.fwd.w_input", word_params_.forward_cell.w_input);
    params.emplace_back("word.fwd.w_hidden", word_params_.forward_cell.w_hidden);
    params.emplace_back("word.fwd.bias", word_params_.forward_cell.bias);
    params.emplace_back("word.bwd.w_input", word_params_.backward_cell.w_input);
    params.emplace_back("word.bwd.w_hidden", word_params_.backward_cell.w_hidden);
    params.emplace_back("word.bwd.bias", word_params_.backward_cell.bias);
  } else {
    params.emplace_back("word.proj.weight", word_params_.proj_weight);
    params.emplace_back("word.proj.bias", word_params_.proj_bias);
    for (std::size_t l = 0; l < word_params_.conv_weights.size(); ++l) {
      const std::string layer = std::to_string(l);
      params.emplace_back("word.conv" + layer + ".weight", word_params_.conv_weights[l]);
      params.emplace_back("word.conv" + layer + ".bias", word_params_.conv_biases[l]);
      params.emplace_back("word.bn" + layer + ".gamma", word_params_.bn_gammas[l]);
      params.emplace_back("word.bn" + layer + ".beta", word_params_.bn_betas[l]);
    }
  }
  params.emplace_back("proj.weight", projection_.weight);
  params.emplace_back("proj.bias", projection_.bias);
  if (config_.inference == InferenceMode::crf) {
    params.emplace_back("crf.transition", crf_.transition);
  }
  return params;
}

std::vector<std::pair<std::string, Tensor>> Tagger::named_buffers() {
  std::vector<std::pair<std::string, Tensor>> buffers;
  if (config_.word_rep == WordMode::cnn) {
    for (std::size_t l = 0; l < word_params_.bn_stats.size(); ++l) {
      const std::string layer = std::to_string(l);
      buffers.emplace_back("word.bn" + layer + ".running_mean",
                           word_params_.bn_stats[l].running_mean);
      buffers.emplace_back("word.bn" + layer + ".running_var",
                           word_params_.bn_stats[l].running_var);
    }
  }
  return buffers;
}

void Tagger::apply_constraints() {
  if (config_.inference == InferenceMode::crf) crf_.apply_constraints();
}

GradCheckReport model_gradient_check(ModelConfig config, std::uint64_t seed) {
  // reduced dimensions keep the finite-difference sweep fast while every
  // parameter tensor of the architecture stays present
  config.char_emb = 4;
  config.word_emb = 8;
  config.char_hidden = 4;
  config.word_hidden = 8;
  config.dropout = 0.0;  // the check needs a loss that is pure in the parameters

  std::vector<Sentence> sentences = {
      {{"alpha", "bb", "c", "dd", "echo"}, {"A", "B", "C", "D", "A"}},
      {{"bb", "zz", "alpha"}, {"B", "A", "C"}},
  };
  Alphabets alphabets = build_alphabets(sentences);
  Rng batch_rng(seed);
  Batch batch = make_batches(sentences, alphabets, 2, false, batch_rng).front();

  Rng init_rng(seed);
  Tagger tagger(config, alphabets, init_rng);
  Rng dropout_rng(seed + 1);
  auto loss = [&]() { return tagger.loss(batch, /*train_mode=*/true, dropout_rng); };
  return check_gradients(loss, tagger.named_parameters());
}

}  // namespace seqlab
