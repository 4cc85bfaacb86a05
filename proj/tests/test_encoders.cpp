#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "seqlab/encoders.hpp"
#include "seqlab/gradcheck.hpp"
#include "testutil.hpp"

using namespace seqlab;
using testutil::bit_identical;

namespace {

// Two sentences of different lengths, enough chars to exercise the encoders.
std::vector<Sentence> toy_sentences() {
  return {
      {{"abc", "de", "f"}, {"O", "B-X", "O"}},
      {{"gh", "abc"}, {"O", "O"}},
  };
}

struct ToyData {
  std::vector<Sentence> sentences = toy_sentences();
  Alphabets alphabets = build_alphabets(sentences);
  Batch batch;

  ToyData() {
    Rng rng(1);
    batch = make_batches(sentences, alphabets, 8, false, rng).front();
  }
};

std::vector<std::int64_t> word_char_ids(const Batch& batch, std::int64_t flat) {
  const std::int64_t n = batch.char_lengths[static_cast<std::size_t>(flat)];
  return {batch.char_ids.begin() + static_cast<std::ptrdiff_t>(flat * batch.max_chars),
          batch.char_ids.begin() + static_cast<std::ptrdiff_t>(flat * batch.max_chars + n)};
}

}  // namespace

TEST_CASE("glorot_uniform stays inside the fan-balanced bound") {
  Rng rng(2);
  Tensor w = glorot_uniform(30, 50, rng);
  const double bound = std::sqrt(6.0 / 80.0);
  for (double v : w.values()) {
    CHECK(v >= -bound);
    CHECK(v < bound);
  }
  CHECK(w.requires_grad());
}

TEST_CASE("lstm cell dimensions and zero-parameter analytic zero") {
  Rng rng(3);
  LstmCellParams cell = make_lstm_cell(4, 3, rng);
  CHECK(cell.input_dim() == 4);
  CHECK(cell.hidden() == 3);
  CHECK(cell.w_input.shape() == Shape{4, 12});
  CHECK(cell.w_hidden.shape() == Shape{3, 12});
  for (double v : cell.bias.values()) CHECK(v == 0.0);

  // zero weights: every gate is constant, candidate tanh(0)=0, so h stays 0
  LstmCellParams zero{Tensor::zeros({4, 12}, true), Tensor::zeros({3, 12}, true),
                      Tensor::zeros({12}, true)};
  Tensor inputs = Tensor::from_values({2, 4}, {1, -2, 3, -4, 5, -6, 7, -8});
  LstmTrace trace = run_lstm(zero, inputs, false);
  for (const Tensor& h : trace.states) {
    for (double v : h.values()) CHECK(v == 0.0);
  }

  CHECK_THROWS_AS(run_lstm(cell, Tensor::zeros({2, 5}), false), std::invalid_argument);
}

TEST_CASE("run_lstm reverse scans right-to-left with position-indexed states") {
  Rng rng(4);
  LstmCellParams cell = make_lstm_cell(2, 3, rng);
  Tensor inputs = Tensor::uniform({4, 2}, -1.0, 1.0, rng);
  LstmTrace fwd = run_lstm(cell, inputs, false);
  LstmTrace bwd = run_lstm(cell, inputs, true);
  // the final state of a reverse scan is the state at position 0
  CHECK(bit_identical(bwd.final_h.values(), bwd.states[0].values()));
  CHECK(bit_identical(fwd.final_h.values(), fwd.states[3].values()));
  // a reverse scan equals a forward scan over the reversed sequence
  Tensor reversed = concat({slice_rows(inputs, 3, 1), slice_rows(inputs, 2, 1),
                            slice_rows(inputs, 1, 1), slice_rows(inputs, 0, 1)},
                           0);
  LstmTrace fwd_rev = run_lstm(cell, reversed, false);
  CHECK(bit_identical(bwd.final_h.values(), fwd_rev.final_h.values()));
}

TEST_CASE("char CNN: zero filter gives zero vector, any length gives width hidden") {
  Rng rng(5);
  CharEncoderParams params = make_char_encoder(CharMode::cnn, 9, 3, 4, rng);
  std::fill(params.conv_weight.mutable_values().begin(),
            params.conv_weight.mutable_values().end(), 0.0);
  std::fill(params.conv_bias.mutable_values().begin(), params.conv_bias.mutable_values().end(),
            0.0);
  Rng dr(1);
  for (const std::vector<std::int64_t>& word :
       std::vector<std::vector<std::int64_t>>{{2}, {2, 3}, {4, 5, 6, 7, 8}}) {
    Tensor rep = char_cnn_encode(params, word, 0.0, false, dr);
    CHECK(rep.shape() == Shape{4});
    for (double v : rep.values()) CHECK(v == 0.0);
  }
  CHECK_THROWS_AS(char_cnn_encode(params, {}, 0.0, false, dr), std::invalid_argument);
}

TEST_CASE("char LSTM: tied directions swap halves on word reversal") {
  Rng rng(6);
  CharEncoderParams params = make_char_encoder(CharMode::lstm, 9, 3, 4, rng);
  params.backward_cell = params.forward_cell;  // tie the directions
  Rng dr(1);
  const std::vector<std::int64_t> word = {2, 5, 3, 7};
  const std::vector<std::int64_t> drow = {7, 3, 5, 2};
  Tensor rep = char_lstm_encode(params, word, 0.0, false, dr);
  Tensor rep_rev = char_lstm_encode(params, drow, 0.0, false, dr);
  REQUIRE(rep.shape() == Shape{4});
  for (int j = 0; j < 2; ++j) {
    CHECK(rep.at(j) == rep_rev.at(j + 2));
    CHECK(rep.at(j + 2) == rep_rev.at(j));
  }
  CHECK_THROWS_AS(char_lstm_encode(params, {}, 0.0, false, dr), std::invalid_argument);
  CHECK_THROWS_AS(make_char_encoder(CharMode::lstm, 9, 3, 5, rng), std::invalid_argument);
}

TEST_CASE("char encoders: gradients match finite differences at toy dims") {
  Rng rng(7);
  Rng dr(1);
  const std::vector<std::int64_t> word = {2, 3, 2, 4};  // repeated char exercises accumulation

  CharEncoderParams cnn = make_char_encoder(CharMode::cnn, 6, 3, 4, rng);
  auto cnn_loss = [&]() {
    Tensor rep = char_cnn_encode(cnn, word, 0.0, false, dr);
    return sum(mul(rep, rep));
  };
  auto r1 = check_gradients(cnn_loss, {{"emb", cnn.embeddings},
                                       {"conv_w", cnn.conv_weight},
                                       {"conv_b", cnn.conv_bias}});
  INFO(r1.describe());
  CHECK(r1.passed(1e-4));

  CharEncoderParams lstm = make_char_encoder(CharMode::lstm, 6, 3, 4, rng);
  auto lstm_loss = [&]() {
    Tensor rep = char_lstm_encode(lstm, word, 0.0, false, dr);
    return sum(mul(rep, rep));
  };
  auto r2 = check_gradients(lstm_loss, {{"emb", lstm.embeddings},
                                        {"fwd_wi", lstm.forward_cell.w_input},
                                        {"fwd_wh", lstm.forward_cell.w_hidden},
                                        {"fwd_b", lstm.forward_cell.bias},
                                        {"bwd_wi", lstm.backward_cell.w_input},
                                        {"bwd_wh", lstm.backward_cell.w_hidden},
                                        {"bwd_b", lstm.backward_cell.bias}});
  INFO(r2.describe());
  CHECK(r2.passed(1e-4));
}

TEST_CASE("encode_batch_chars: none mode, zero padding rows, sequential parity") {
  ToyData data;
  Rng rng(8);
  Rng dr(1);

  CharEncoderParams none = make_char_encoder(CharMode::none, 0, 0, 0, rng);
  Tensor empty = encode_batch_chars(none, data.batch, 0.5, true, dr);
  CHECK(empty.shape() == Shape{data.batch.size * data.batch.max_len, 0});

  for (CharMode mode : {CharMode::cnn, CharMode::lstm}) {
    CharEncoderParams params =
        make_char_encoder(mode, data.alphabets.chars.size(), 3, 4, rng);
    Tensor batched = encode_batch_chars(params, data.batch, 0.0, false, dr);
    REQUIRE(batched.shape() == Shape{data.batch.size * data.batch.max_len, 4});
    for (std::int64_t b = 0; b < data.batch.size; ++b) {
      for (std::int64_t t = 0; t < data.batch.max_len; ++t) {
        const std::int64_t flat = b * data.batch.max_len + t;
        Tensor batch_row = row(batched, flat);
        if (t >= data.batch.word_lengths[static_cast<std::size_t>(b)]) {
          for (double v : batch_row.values()) CHECK(v == 0.0);  // padding stays zero
        } else {
          Tensor solo =
              encode_word_chars(params, word_char_ids(data.batch, flat), 0.0, false, dr);
          CHECK(bit_identical(batch_row.values(), solo.values()));
        }
      }
    }
    // eval mode is a pure function of the indices: identical reruns
    Tensor again = encode_batch_chars(params, data.batch, 0.0, false, dr);
    CHECK(bit_identical(batched.values(), again.values()));
  }
}

TEST_CASE("compose_inputs concatenates, masks padding, and reports width") {
  ToyData data;
  Rng rng(9);
  Rng dr(1);
  Tensor word_table = Tensor::uniform({data.alphabets.words.size(), 5}, -1.0, 1.0, rng, true);

  Tensor none_reps = Tensor::zeros({data.batch.size * data.batch.max_len, 0});
  Tensor composed = compose_inputs(data.batch, word_table, none_reps, 0.0, false, dr);
  CHECK(composed.shape() == Shape{data.batch.size * data.batch.max_len, 5});

  Tensor char_reps = Tensor::constant({data.batch.size * data.batch.max_len, 4}, 0.5);
  Tensor wide = compose_inputs(data.batch, word_table, char_reps, 0.0, false, dr);
  CHECK(wide.shape() == Shape{data.batch.size * data.batch.max_len, 9});

  for (std::int64_t b = 0; b < data.batch.size; ++b) {
    for (std::int64_t t = data.batch.word_lengths[static_cast<std::size_t>(b)];
         t < data.batch.max_len; ++t) {
      Tensor padded_row = row(wide, b * data.batch.max_len + t);
      for (double v : padded_row.values()) CHECK(v == 0.0);
    }
  }
  // real token: word embedding then char rep
  Tensor first = row(wide, 0);
  const std::int64_t wid = data.batch.word_ids[0];
  for (int j = 0; j < 5; ++j) CHECK(first.at(j) == word_table.at(wid * 5 + j));
  for (int j = 5; j < 9; ++j) CHECK(first.at(j) == 0.5);

  CHECK_THROWS_AS(compose_inputs(data.batch, word_table, Tensor::zeros({3, 4}), 0.0, false, dr),
                  std::invalid_argument);
}

TEST_CASE("word encoders produce [B*T, hidden] for every length") {
  ToyData data;
  Rng rng(10);
  Rng dr(1);
  const std::int64_t rows = data.batch.size * data.batch.max_len;
  Tensor inputs = Tensor::uniform({rows, 5}, -1.0, 1.0, rng);
  // padded rows zeroed, as compose_inputs guarantees
  inputs = mask_rows(inputs, data.batch.word_mask);

  WordEncoderParams lstm = make_word_encoder(WordMode::lstm, 5, 6, 0, rng);
  Tensor out_lstm = word_encode(lstm, inputs, data.batch, 0.0, false, dr);
  CHECK(out_lstm.shape() == Shape{rows, 6});

  WordEncoderParams cnn = make_word_encoder(WordMode::cnn, 5, 6, 4, rng);
  Tensor out_cnn = word_encode(cnn, inputs, data.batch, 0.0, false, dr);
  CHECK(out_cnn.shape() == Shape{rows, 6});
  CHECK(cnn.layers() == 4);

  for (const Tensor& out : {out_lstm, out_cnn}) {
    for (std::int64_t b = 0; b < data.batch.size; ++b) {
      for (std::int64_t t = data.batch.word_lengths[static_cast<std::size_t>(b)];
           t < data.batch.max_len; ++t) {
        Tensor padded_row = row(out, b * data.batch.max_len + t);
        for (double v : padded_row.values()) CHECK(v == 0.0);
      }
    }
  }
  CHECK_THROWS_AS(make_word_encoder(WordMode::lstm, 5, 7, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_word_encoder(WordMode::cnn, 5, 6, 0, rng), std::invalid_argument);
}

TEST_CASE("single-token sentences pass through both word encoders") {
  std::vector<Sentence> sentences = {{{"a"}, {"O"}}, {{"b"}, {"O"}}};
  auto alphabets = build_alphabets(sentences);
  Rng rng(11);
  Batch batch = make_batches(sentences, alphabets, 4, false, rng).front();
  Tensor inputs = Tensor::uniform({batch.size * batch.max_len, 3}, -1.0, 1.0, rng);
  Rng dr(1);
  WordEncoderParams lstm = make_word_encoder(WordMode::lstm, 3, 4, 0, rng);
  CHECK(word_encode(lstm, inputs, batch, 0.0, false, dr).shape() == Shape{2, 4});
  WordEncoderParams cnn = make_word_encoder(WordMode::cnn, 3, 4, 2, rng);
  CHECK(word_encode(cnn, inputs, batch, 0.0, false, dr).shape() == Shape{2, 4});
}

TEST_CASE("padding amount never changes real-token outputs") {
  // the same sentence batched alone (T_max = its length) and alongside a much
  // longer one (T_max = 12) must produce identical rows
  std::vector<Sentence> small = {{{"a", "b", "c"}, {"O", "O", "O"}}};
  Sentence longer;
  for (int i = 0; i < 12; ++i) {
    longer.tokens.push_back("t" + std::to_string(i));
    longer.labels.push_back("O");
  }
  std::vector<Sentence> big = {small[0], longer};
  auto alphabets = build_alphabets(big);
  Rng batch_rng(12);
  Batch alone = make_batches(small, alphabets, 4, false, batch_rng).front();
  Batch padded = make_batches(big, alphabets, 4, false, batch_rng).front();
  REQUIRE(alone.max_len == 3);
  REQUIRE(padded.max_len == 12);

  Rng rng(13);
  Tensor word_table = Tensor::uniform({alphabets.words.size(), 4}, -1.0, 1.0, rng, true);
  CharEncoderParams chars = make_char_encoder(CharMode::cnn, alphabets.chars.size(), 3, 4, rng);
  WordEncoderParams lstm = make_word_encoder(WordMode::lstm, 8, 6, 0, rng);
  WordEncoderParams cnn = make_word_encoder(WordMode::cnn, 8, 6, 4, rng);

  auto encode = [&](WordEncoderParams& enc, const Batch& batch) {
    Rng dr(1);
    NoGradGuard no_grad;
    Tensor reps = encode_batch_chars(chars, batch, 0.0, false, dr);
    Tensor composed = compose_inputs(batch, word_table, reps, 0.0, false, dr);
    return word_encode(enc, composed, batch, 0.0, false, dr);
  };
  for (WordEncoderParams* enc : {&lstm, &cnn}) {
    Tensor small_out = encode(*enc, alone);
    Tensor big_out = encode(*enc, padded);
    for (std::int64_t t = 0; t < 3; ++t) {
      CHECK(bit_identical(row(small_out, t).values(), row(big_out, t).values()));
    }
  }
}

TEST_CASE("CNN influence is bounded by the receptive field; LSTM's is not") {
  Sentence ten;
  for (int i = 0; i < 10; ++i) {
    ten.tokens.push_back("t" + std::to_string(i));
    ten.labels.push_back("O");
  }
  std::vector<Sentence> sentences = {ten};
  auto alphabets = build_alphabets(sentences);
  Rng batch_rng(14);
  Batch batch = make_batches(sentences, alphabets, 1, false, batch_rng).front();

  Rng rng(15);
  Tensor base = Tensor::uniform({10, 3}, -1.0, 1.0, rng);
  Tensor perturbed_far = Tensor::from_values({10, 3}, base.values());
  perturbed_far.mutable_values()[9 * 3] += 5.0;  // position 9: distance 9 from position 0
  Tensor perturbed_near = Tensor::from_values({10, 3}, base.values());
  perturbed_near.mutable_values()[1 * 3] += 5.0;  // position 1: inside every field

  WordEncoderParams cnn = make_word_encoder(WordMode::cnn, 3, 4, 4, rng);  // field spans 9 tokens
  WordEncoderParams lstm = make_word_encoder(WordMode::lstm, 3, 4, 0, rng);
  Rng dr(1);
  NoGradGuard no_grad;

  Tensor cnn_base = row(word_encode(cnn, base, batch, 0.0, false, dr), 0);
  Tensor cnn_far = row(word_encode(cnn, perturbed_far, batch, 0.0, false, dr), 0);
  Tensor cnn_near = row(word_encode(cnn, perturbed_near, batch, 0.0, false, dr), 0);
  CHECK(bit_identical(cnn_base.values(), cnn_far.values()));
  CHECK(testutil::max_abs_diff(cnn_base.values(), cnn_near.values()) > 0.0);

  Tensor lstm_base = row(word_encode(lstm, base, batch, 0.0, false, dr), 0);
  Tensor lstm_far = row(word_encode(lstm, perturbed_far, batch, 0.0, false, dr), 0);
  CHECK(testutil::max_abs_diff(lstm_base.values(), lstm_far.values()) > 0.0);
}

TEST_CASE("word encoders: gradients match finite differences at toy dims") {
  ToyData data;
  Rng rng(16);
  Rng dr(1);
  const std::int64_t rows = data.batch.size * data.batch.max_len;
  Tensor word_table = Tensor::uniform({data.alphabets.words.size(), 3}, -1.0, 1.0, rng, true);
  Tensor none_reps = Tensor::zeros({rows, 0});

  WordEncoderParams lstm = make_word_encoder(WordMode::lstm, 3, 4, 0, rng);
  auto lstm_loss = [&]() {
    Tensor composed = compose_inputs(data.batch, word_table, none_reps, 0.0, false, dr);
    Tensor out = word_encode(lstm, composed, data.batch, 0.0, false, dr);
    return sum(mul(out, out));
  };
  auto r1 = check_gradients(lstm_loss, {{"word_table", word_table},
                                        {"fwd_wi", lstm.forward_cell.w_input},
                                        {"fwd_wh", lstm.forward_cell.w_hidden},
                                        {"fwd_b", lstm.forward_cell.bias},
                                        {"bwd_wi", lstm.backward_cell.w_input},
                                        {"bwd_wh", lstm.backward_cell.w_hidden},
                                        {"bwd_b", lstm.backward_cell.bias}});
  INFO(r1.describe());
  CHECK(r1.passed(1e-4));

  // eval-mode batch norm keeps the loss a pure function of the parameters
  WordEncoderParams cnn = make_word_encoder(WordMode::cnn, 3, 4, 2, rng);
  auto cnn_loss = [&]() {
    Tensor composed = compose_inputs(data.batch, word_table, none_reps, 0.0, false, dr);
    Tensor out = word_encode(cnn, composed, data.batch, 0.0, false, dr);
    return sum(mul(out, out));
  };
  std::vector<std::pair<std::string, Tensor>> cnn_params = {{"word_table", word_table},
                                                            {"proj_w", cnn.proj_weight},
                                                            {"proj_b", cnn.proj_bias}};
  for (std::size_t l = 0; l < 2; ++l) {
    cnn_params.emplace_back("conv_w" + std::to_string(l), cnn.conv_weights[l]);
    cnn_params.emplace_back("conv_b" + std::to_string(l), cnn.conv_biases[l]);
    cnn_params.emplace_back("gamma" + std::to_string(l), cnn.bn_gammas[l]);
    cnn_params.emplace_back("beta" + std::to_string(l), cnn.bn_betas[l]);
  }
  auto r2 = check_gradients(cnn_loss, cnn_params);
  INFO(r2.describe());
  CHECK(r2.passed(1e-4));
}

TEST_CASE("train-mode batch norm updates running statistics during word CNN") {
  ToyData data;
  Rng rng(17);
  Rng dr(1);
  const std::int64_t rows = data.batch.size * data.batch.max_len;
  Tensor inputs = mask_rows(Tensor::uniform({rows, 3}, -1.0, 1.0, rng), data.batch.word_mask);
  WordEncoderParams cnn = make_word_encoder(WordMode::cnn, 3, 4, 2, rng);
  const std::vector<double> before = cnn.bn_stats[0].running_mean.values();
  (void)word_cnn_encode(cnn, inputs, data.batch, 0.0, /*train_mode=*/true, dr);
  CHECK_FALSE(bit_identical(before, cnn.bn_stats[0].running_mean.values()));
  // eval mode leaves them untouched
  const std::vector<double> after = cnn.bn_stats[0].running_mean.values();
  (void)word_cnn_encode(cnn, inputs, data.batch, 0.0, /*train_mode=*/false, dr);
  CHECK(bit_identical(after, cnn.bn_stats[0].running_mean.values()));
}

TEST_CASE("mode parsing round-trips") {
  CHECK(parse_char_mode("none") == CharMode::none);
  CHECK(parse_char_mode("cnn") == CharMode::cnn);
  CHECK(parse_char_mode("lstm") == CharMode::lstm);
  CHECK(parse_word_mode("cnn") == WordMode::cnn);
  CHECK(parse_word_mode("lstm") == WordMode::lstm);
  CHECK_THROWS_AS(parse_char_mode("gru"), std::invalid_argument);
  CHECK_THROWS_AS(parse_word_mode("transformer"), std::invalid_argument);
  CHECK(std::string(to_string(CharMode::cnn)) == "cnn");
  CHECK(std::string(to_string(WordMode::lstm)) == "lstm");
}
