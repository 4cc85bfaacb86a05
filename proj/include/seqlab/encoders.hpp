#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/corpus.hpp"
#include "seqlab/rng.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

enum class CharMode { none, cnn, lstm };
enum class WordMode { lstm, cnn };

CharMode parse_char_mode(const std::string& name);
WordMode parse_word_mode(const std::string& name);
const char* to_string(CharMode mode);
const char* to_string(WordMode mode);

// Fan-balanced uniform init: shape [fan_in, fan_out], entries drawn from
// U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
Tensor glorot_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

// Flat row indices (b * max_len + t) of the real tokens, row-major over the
// batch; the order every gather/scatter in the encoders relies on.
std::vector<std::int64_t> real_token_indices(const Batch& batch);

// ---- LSTM cell ----

// Gates packed [input, forget, candidate, output] along the width of the
// parameter matrices; tanh candidate, no peepholes, zero initial states.
struct LstmCellParams {
  Tensor w_input;   // [input_dim, 4*hidden]
  Tensor w_hidden;  // [hidden, 4*hidden]
  Tensor bias;      // [4*hidden]

  std::int64_t input_dim() const { return w_input.dim(0); }
  std::int64_t hidden() const { return w_hidden.dim(0); }
};

LstmCellParams make_lstm_cell(std::int64_t input_dim, std::int64_t hidden, Rng& rng);

struct LstmTrace {
  std::vector<Tensor> states;  // one [1, hidden] per original position
  Tensor final_h;              // [1, hidden], state at the end of the scan
};

// Scans inputs [T, input_dim]; reverse scans right-to-left but states stay
// indexed by original position.
LstmTrace run_lstm(const LstmCellParams& cell, const Tensor& inputs, bool reverse);

// ---- character encoder ----

struct CharEncoderParams {
  CharMode mode = CharMode::none;
  std::int64_t emb_dim = 0;
  std::int64_t hidden = 0;  // total representation width (both directions)
  Tensor embeddings;        // [char vocab, emb_dim]
  // CNN variant
  Tensor conv_weight;  // [3*emb_dim, hidden]
  Tensor conv_bias;    // [hidden]
  // LSTM variant, hidden/2 per direction
  LstmCellParams forward_cell;
  LstmCellParams backward_cell;

  std::int64_t rep_width() const { return mode == CharMode::none ? 0 : hidden; }
};

// Parameter draws happen in a fixed order (embeddings first), so a given
// seed always produces the same encoder.
CharEncoderParams make_char_encoder(CharMode mode, std::int64_t char_vocab,
                                    std::int64_t emb_dim, std::int64_t hidden, Rng& rng);

// Single word -> [hidden]: dropout on char embeddings (train mode), window-3
// same-padded convolution, max over positions.
Tensor char_cnn_encode(const CharEncoderParams& params,
                       const std::vector<std::int64_t>& char_ids, double dropout_rate,
                       bool train_mode, Rng& rng);

// Single word -> [hidden]: dropout on char embeddings (train mode), then
// forward final state concatenated with backward final state.
Tensor char_lstm_encode(const CharEncoderParams& params,
                        const std::vector<std::int64_t>& char_ids, double dropout_rate,
                        bool train_mode, Rng& rng);

// Mode dispatch for one word; CharMode::none yields a zero-width vector.
Tensor encode_word_chars(const CharEncoderParams& params,
                         const std::vector<std::int64_t>& char_ids, double dropout_rate,
                         bool train_mode, Rng& rng);

// Whole batch -> [B*T, rep_width]; real-token rows carry their word encodings
// (computed at true char length, row-major batch order), padded rows are zero.
Tensor encode_batch_chars(const CharEncoderParams& params, const Batch& batch,
                          double dropout_rate, bool train_mode, Rng& rng);

// ---- word encoder ----

struct WordEncoderParams {
  WordMode mode = WordMode::lstm;
  std::int64_t input_dim = 0;
  std::int64_t hidden = 0;  // total output width (both directions / channels)
  // LSTM variant, hidden/2 per direction
  LstmCellParams forward_cell;
  LstmCellParams backward_cell;
  // CNN variant: input projection to `hidden`, then `layers` stacked blocks
  Tensor proj_weight;  // [input_dim, hidden]
  Tensor proj_bias;    // [hidden]
  std::vector<Tensor> conv_weights;  // each [3*hidden, hidden]
  std::vector<Tensor> conv_biases;   // each [hidden]
  std::vector<Tensor> bn_gammas;     // each [hidden]
  std::vector<Tensor> bn_betas;      // each [hidden]
  std::vector<BatchNormStats> bn_stats;  // buffers, not parameters
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  std::int64_t layers() const { return static_cast<std::int64_t>(conv_weights.size()); }
};

WordEncoderParams make_word_encoder(WordMode mode, std::int64_t input_dim, std::int64_t hidden,
                                    std::int64_t cnn_layers, Rng& rng);

// Word-embedding rows concatenated with char representations, dropout on the
// composed vector (train mode), padded rows masked to zero -> [B*T, width].
Tensor compose_inputs(const Batch& batch, const Tensor& word_emb_table, const Tensor& char_reps,
                      double dropout_rate, bool train_mode, Rng& rng);

// Per-sentence bidirectional scan at true length -> [B*T, hidden]; padded
// rows are zero and never feed the recurrences.
Tensor word_bilstm_encode(const WordEncoderParams& params, const Tensor& inputs,
                          const Batch& batch);

// Projection to `hidden`, then layers x [per-sentence window-3 convolution ->
// ReLU -> batch norm over the batch's real tokens -> dropout]; padded rows
// zero. Train mode updates the batch-norm running statistics.
Tensor word_cnn_encode(WordEncoderParams& params, const Tensor& inputs, const Batch& batch,
                       double dropout_rate, bool train_mode, Rng& rng);

// Mode dispatch; output is [B*T, hidden] either way.
Tensor word_encode(WordEncoderParams& params, const Tensor& inputs, const Batch& batch,
                   double dropout_rate, bool train_mode, Rng& rng);

}  // namespace seqlab
