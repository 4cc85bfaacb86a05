#include "seqlab/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace seqlab {

CharMode parse_char_mode(const std::string& name) {
  if (name == "none" || name == "nochar") return CharMode::none;
  if (name == "cnn") return CharMode::cnn;
  if (name == "lstm") return CharMode::lstm;
  throw std::invalid_argument("unknown char encoder '" + name +
                              "' (expected none, cnn, or lstm)");
}

WordMode parse_word_mode(const std::string& name) {
  if (name == "lstm") return WordMode::lstm;
  if (name == "cnn") return WordMode::cnn;
  throw std::invalid_argument("unknown word encoder '" + name + "' (expected lstm or cnn)");
}

const char* to_string(CharMode mode) {
  switch (mode) {
    case CharMode::none: return "none";
    case CharMode::cnn: return "cnn";
    case CharMode::lstm: return "lstm";
  }
  return "?";
}

const char* to_string(WordMode mode) {
  switch (mode) {
    case WordMode::lstm: return "lstm";
    case WordMode::cnn: return "cnn";
  }
  return "?";
}

Tensor glorot_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  if (fan_in < 1 || fan_out < 1) {
    throw std::invalid_argument("glorot_uniform: fan sizes must be positive");
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::uniform({fan_in, fan_out}, -bound, bound, rng, /*requires_grad=*/true);
}

std::vector<std::int64_t> real_token_indices(const Batch& batch) {
  std::vector<std::int64_t> indices;
  indices.reserve(static_cast<std::size_t>(batch.total_tokens()));
  for (std::int64_t b = 0; b < batch.size; ++b) {
    const std::int64_t len = batch.word_lengths[static_cast<std::size_t>(b)];
    for (std::int64_t t = 0; t < len; ++t) indices.push_back(b * batch.max_len + t);
  }
  return indices;
}

// ---- LSTM cell ----

LstmCellParams make_lstm_cell(std::int64_t input_dim, std::int64_t hidden, Rng& rng) {
  if (input_dim < 1 || hidden < 1) {
    throw std::invalid_argument("make_lstm_cell: dimensions must be positive");
  }
  LstmCellParams cell;
  cell.w_input = glorot_uniform(input_dim, 4 * hidden, rng);
  cell.w_hidden = glorot_uniform(hidden, 4 * hidden, rng);
  cell.bias = Tensor::zeros({4 * hidden}, /*requires_grad=*/true);
  return cell;
}

namespace {

struct LstmState {
  Tensor h;  // [1, hidden]
  Tensor c;  // [1, hidden]
};

LstmState lstm_step(const LstmCellParams& cell, const Tensor& x_row, const LstmState& prev) {
  const std::int64_t hidden = cell.hidden();
  Tensor gates = add_row_broadcast(
      add(matmul(x_row, cell.w_input), matmul(prev.h, cell.w_hidden)), cell.bias);
  Tensor i = sigmoid(slice_cols(gates, 0, hidden));
  Tensor f = sigmoid(slice_cols(gates, hidden, hidden));
  Tensor g = tanh(slice_cols(gates, 2 * hidden, hidden));
  Tensor o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace

LstmTrace run_lstm(const LstmCellParams& cell, const Tensor& inputs, bool reverse) {
  if (inputs.ndim() != 2 || inputs.dim(1) != cell.input_dim()) {
    throw std::invalid_argument("run_lstm: inputs must be [T, " +
                                std::to_string(cell.input_dim()) + "]");
  }
  const std::int64_t t_len = inputs.dim(0);
  if (t_len < 1) throw std::invalid_argument("run_lstm: empty sequence");
  const std::int64_t hidden = cell.hidden();
  LstmTrace trace;
  trace.states.resize(static_cast<std::size_t>(t_len));
  LstmState state{Tensor::zeros({1, hidden}), Tensor::zeros({1, hidden})};
  for (std::int64_t step = 0; step < t_len; ++step) {
    const std::int64_t t = reverse ? t_len - 1 - step : step;
    state = lstm_step(cell, slice_rows(inputs, t, 1), state);
    trace.states[static_cast<std::size_t>(t)] = state.h;
  }
  trace.final_h = state.h;
  return trace;
}

// ---- character encoder ----

CharEncoderParams make_char_encoder(CharMode mode, std::int64_t char_vocab,
                                    std::int64_t emb_dim, std::int64_t hidden, Rng& rng) {
  CharEncoderParams params;
  params.mode = mode;
  if (mode == CharMode::none) return params;
  if (char_vocab < 1 || emb_dim < 1 || hidden < 1) {
    throw std::invalid_argument("make_char_encoder: dimensions must be positive");
  }
  params.emb_dim = emb_dim;
  params.hidden = hidden;
  const double emb_bound = std::sqrt(3.0 / static_cast<double>(emb_dim));
  params.embeddings =
      Tensor::uniform({char_vocab, emb_dim}, -emb_bound, emb_bound, rng, /*requires_grad=*/true);
  if (mode == CharMode::cnn) {
    params.conv_weight = glorot_uniform(3 * emb_dim, hidden, rng);
    params.conv_bias = Tensor::zeros({hidden}, /*requires_grad=*/true);
  } else {
    if (hidden % 2 != 0) {
      throw std::invalid_argument("make_char_encoder: LSTM variant needs an even hidden size, got " +
                                  std::to_string(hidden));
    }
    params.forward_cell = make_lstm_cell(emb_dim, hidden / 2, rng);
    params.backward_cell = make_lstm_cell(emb_dim, hidden / 2, rng);
  }
  return params;
}

namespace {

Tensor char_embeddings_for_word(const CharEncoderParams& params,
                                const std::vector<std::int64_t>& char_ids, double dropout_rate,
                                bool train_mode, Rng& rng) {
  if (char_ids.empty()) {
    throw std::invalid_argument("character encoder: empty word");
  }
  Tensor emb = embedding_lookup(params.embeddings, char_ids);
  return dropout(emb, dropout_rate, train_mode, rng);
}

}  // namespace

Tensor char_cnn_encode(const CharEncoderParams& params,
                       const std::vector<std::int64_t>& char_ids, double dropout_rate,
                       bool train_mode, Rng& rng) {
  if (params.mode != CharMode::cnn) {
    throw std::invalid_argument("char_cnn_encode: encoder is not the CNN variant");
  }
  Tensor emb = char_embeddings_for_word(params, char_ids, dropout_rate, train_mode, rng);
  Tensor conv = conv1d_same(emb, params.conv_weight, params.conv_bias, 3);
  return max_over_time(conv);
}

Tensor char_lstm_encode(const CharEncoderParams& params,
                        const std::vector<std::int64_t>& char_ids, double dropout_rate,
                        bool train_mode, Rng& rng) {
  if (params.mode != CharMode::lstm) {
    throw std::invalid_argument("char_lstm_encode: encoder is not the LSTM variant");
  }
  Tensor emb = char_embeddings_for_word(params, char_ids, dropout_rate, train_mode, rng);
  LstmTrace fwd = run_lstm(params.forward_cell, emb, /*reverse=*/false);
  LstmTrace bwd = run_lstm(params.backward_cell, emb, /*reverse=*/true);
  Tensor joined = concat({fwd.final_h, bwd.final_h}, 1);  // [1, hidden]
  return row(joined, 0);
}

Tensor encode_word_chars(const CharEncoderParams& params,
                         const std::vector<std::int64_t>& char_ids, double dropout_rate,
                         bool train_mode, Rng& rng) {
  switch (params.mode) {
    case CharMode::none: return Tensor::zeros({0});
    case CharMode::cnn: return char_cnn_encode(params, char_ids, dropout_rate, train_mode, rng);
    case CharMode::lstm: return char_lstm_encode(params, char_ids, dropout_rate, train_mode, rng);
  }
  throw std::logic_error("encode_word_chars: unreachable");
}

Tensor encode_batch_chars(const CharEncoderParams& params, const Batch& batch,
                          double dropout_rate, bool train_mode, Rng& rng) {
  const std::int64_t rows = batch.size * batch.max_len;
  if (params.mode == CharMode::none) {
    return Tensor::zeros({rows, 0});
  }
  std::vector<Tensor> encodings;
  std::vector<std::int64_t> positions;
  for (std::int64_t b = 0; b < batch.size; ++b) {
    const std::int64_t len = batch.word_lengths[static_cast<std::size_t>(b)];
    for (std::int64_t t = 0; t < len; ++t) {
      const std::int64_t flat = b * batch.max_len + t;
      const std::int64_t n_chars = batch.char_lengths[static_cast<std::size_t>(flat)];
      std::vector<std::int64_t> char_ids(
          batch.char_ids.begin() + static_cast<std::ptrdiff_t>(flat * batch.max_chars),
          batch.char_ids.begin() + static_cast<std::ptrdiff_t>(flat * batch.max_chars + n_chars));
      Tensor rep = encode_word_chars(params, char_ids, dropout_rate, train_mode, rng);
      encodings.push_back(reshape(rep, {1, params.hidden}));
      positions.push_back(flat);
    }
  }
  if (encodings.empty()) {
    throw std::invalid_argument("encode_batch_chars: batch has no tokens");
  }
  return scatter_rows(concat(encodings, 0), positions, rows);
}

// ---- word encoder ----

WordEncoderParams make_word_encoder(WordMode mode, std::int64_t input_dim, std::int64_t hidden,
                                    std::int64_t cnn_layers, Rng& rng) {
  if (input_dim < 1 || hidden < 1) {
    throw std::invalid_argument("make_word_encoder: dimensions must be positive");
  }
  WordEncoderParams params;
  params.mode = mode;
  params.input_dim = input_dim;
  params.hidden = hidden;
  if (mode == WordMode::lstm) {
    if (hidden % 2 != 0) {
      throw std::invalid_argument("make_word_encoder: LSTM variant needs an even hidden size, got " +
                                  std::to_string(hidden));
    }
    params.forward_cell = make_lstm_cell(input_dim, hidden / 2, rng);
    params.backward_cell = make_lstm_cell(input_dim, hidden / 2, rng);
    return params;
  }
  if (cnn_layers < 1) {
    throw std::invalid_argument("make_word_encoder: CNN variant needs at least one layer");
  }
  params.proj_weight = glorot_uniform(input_dim, hidden, rng);
  params.proj_bias = Tensor::zeros({hidden}, /*requires_grad=*/true);
  for (std::int64_t layer = 0; layer < cnn_layers; ++layer) {
    params.conv_weights.push_back(glorot_uniform(3 * hidden, hidden, rng));
    params.conv_biases.push_back(Tensor::zeros({hidden}, /*requires_grad=*/true));
    params.bn_gammas.push_back(Tensor::constant({hidden}, 1.0, /*requires_grad=*/true));
    params.bn_betas.push_back(Tensor::zeros({hidden}, /*requires_grad=*/true));
    params.bn_stats.push_back({Tensor::zeros({hidden}), Tensor::constant({hidden}, 1.0)});
  }
  return params;
}

Tensor compose_inputs(const Batch& batch, const Tensor& word_emb_table, const Tensor& char_reps,
                      double dropout_rate, bool train_mode, Rng& rng) {
  const std::int64_t rows = batch.size * batch.max_len;
  if (char_reps.ndim() != 2 || char_reps.dim(0) != rows) {
    throw std::invalid_argument("compose_inputs: char representations must cover " +
                                std::to_string(rows) + " rows");
  }
  Tensor words = embedding_lookup(word_emb_table, batch.word_ids);
  Tensor composed = char_reps.dim(1) == 0 ? words : concat({words, char_reps}, 1);
  composed = dropout(composed, dropout_rate, train_mode, rng);
  return mask_rows(composed, batch.word_mask);
}

namespace {

// Per-sentence row blocks of the real tokens, gathered at true length.
struct SentenceBlocks {
  std::vector<std::int64_t> flat_indices;  // into [B*T]
  std::vector<std::int64_t> offsets;       // start of each sentence inside the gathered rows
  std::vector<std::int64_t> lengths;
};

SentenceBlocks sentence_blocks(const Batch& batch) {
  SentenceBlocks blocks;
  blocks.flat_indices = real_token_indices(batch);
  std::int64_t offset = 0;
  for (std::int64_t b = 0; b < batch.size; ++b) {
    const std::int64_t len = batch.word_lengths[static_cast<std::size_t>(b)];
    blocks.offsets.push_back(offset);
    blocks.lengths.push_back(len);
    offset += len;
  }
  return blocks;
}

}  // namespace

Tensor word_bilstm_encode(const WordEncoderParams& params, const Tensor& inputs,
                          const Batch& batch) {
  if (params.mode != WordMode::lstm) {
    throw std::invalid_argument("word_bilstm_encode: encoder is not the LSTM variant");
  }
  const std::int64_t rows = batch.size * batch.max_len;
  if (inputs.ndim() != 2 || inputs.dim(0) != rows || inputs.dim(1) != params.input_dim) {
    throw std::invalid_argument("word_bilstm_encode: inputs must be [" + std::to_string(rows) +
                                ", " + std::to_string(params.input_dim) + "]");
  }
  const SentenceBlocks blocks = sentence_blocks(batch);
  std::vector<Tensor> sentence_outputs;
  for (std::int64_t b = 0; b < batch.size; ++b) {
    const std::int64_t len = blocks.lengths[static_cast<std::size_t>(b)];
    std::vector<std::int64_t> rows_b(
        blocks.flat_indices.begin() + static_cast<std::ptrdiff_t>(blocks.offsets[static_cast<std::size_t>(b)]),
        blocks.flat_indices.begin() +
            static_cast<std::ptrdiff_t>(blocks.offsets[static_cast<std::size_t>(b)] + len));
    Tensor xs = select_rows(inputs, rows_b);
    LstmTrace fwd = run_lstm(params.forward_cell, xs, /*reverse=*/false);
    LstmTrace bwd = run_lstm(params.backward_cell, xs, /*reverse=*/true);
    sentence_outputs.push_back(concat({concat(fwd.states, 0), concat(bwd.states, 0)}, 1));
  }
  return scatter_rows(concat(sentence_outputs, 0), blocks.flat_indices, rows);
}

Tensor word_cnn_encode(WordEncoderParams& params, const Tensor& inputs, const Batch& batch,
                       double dropout_rate, bool train_mode, Rng& rng) {
  if (params.mode != WordMode::cnn) {
    throw std::invalid_argument("word_cnn_encode: encoder is not the CNN variant");
  }
  const std::int64_t rows = batch.size * batch.max_len;
  if (inputs.ndim() != 2 || inputs.dim(0) != rows || inputs.dim(1) != params.input_dim) {
    throw std::invalid_argument("word_cnn_encode: inputs must be [" + std::to_string(rows) +
                                ", " + std::to_string(params.input_dim) + "]");
  }
  const SentenceBlocks blocks = sentence_blocks(batch);
  // All real tokens, packed sentence-by-sentence; convolutions run inside a
  // sentence, batch norm across every real token of the batch.
  Tensor hidden = add_row_broadcast(matmul(select_rows(inputs, blocks.flat_indices),
                                           params.proj_weight),
                                    params.proj_bias);
  for (std::int64_t layer = 0; layer < params.layers(); ++layer) {
    const std::size_t l = static_cast<std::size_t>(layer);
    std::vector<Tensor> convolved;
    for (std::int64_t b = 0; b < batch.size; ++b) {
      Tensor xs = slice_rows(hidden, blocks.offsets[static_cast<std::size_t>(b)],
                             blocks.lengths[static_cast<std::size_t>(b)]);
      convolved.push_back(conv1d_same(xs, params.conv_weights[l], params.conv_biases[l], 3));
    }
    Tensor activated = relu(concat(convolved, 0));
    Tensor normalized = batch_norm(activated, params.bn_gammas[l], params.bn_betas[l],
                                   params.bn_stats[l], params.bn_momentum, params.bn_eps,
                                   train_mode);
    hidden = dropout(normalized, dropout_rate, train_mode, rng);
  }
  return scatter_rows(hidden, blocks.flat_indices, rows);
}

Tensor word_encode(WordEncoderParams& params, const Tensor& inputs, const Batch& batch,
                   double dropout_rate, bool train_mode, Rng& rng) {
  if (params.mode == WordMode::lstm) {
    Tensor states = word_bilstm_encode(params, inputs, batch);
    // Output dropout keeps the two variants symmetric ahead of inference;
    // padded rows are zero and dropout preserves that.
    return dropout(states, dropout_rate, train_mode, rng);
  }
  return word_cnn_encode(params, inputs, batch, dropout_rate, train_mode, rng);
}

}  // namespace seqlab
