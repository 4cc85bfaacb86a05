#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "seqlab/eval.hpp"
#include "testutil.hpp"

using namespace seqlab;

namespace {

using Labels = std::vector<std::string>;

std::vector<Sentence> tagged(const std::vector<std::pair<Labels, Labels>>& rows) {
  std::vector<Sentence> sentences;
  for (const auto& [tokens, labels] : rows) sentences.push_back({tokens, labels});
  return sentences;
}

}  // namespace

TEST_CASE("prf counts: zero-denominator conventions and the pinned case") {
  PrfCounts empty;
  CHECK(empty.precision() == 0.0);
  CHECK(empty.recall() == 0.0);
  CHECK(empty.f1() == 0.0);

  PrfCounts pinned{6, 5, 4};
  CHECK(std::abs(pinned.precision() - 0.8) <= 1e-12);
  CHECK(std::abs(pinned.recall() - 2.0 / 3.0) <= 1e-12);
  CHECK(std::abs(pinned.f1() - 8.0 / 11.0) <= 1e-12);
  CHECK(pinned.f1() == doctest::Approx(0.727273).epsilon(1e-6));
}

TEST_CASE("token accuracy: closed cases and misalignment") {
  Labels a = {"A", "B", "C", "D"};
  Labels b = {"A", "B", "C", "X"};
  CHECK(token_accuracy({a}, {a}) == 1.0);
  CHECK(token_accuracy({a}, {b}) == 0.75);
  CHECK(token_accuracy({{"A", "B"}}, {{"C", "D"}}) == 0.0);
  CHECK_THROWS_AS(token_accuracy({a}, {{"A"}}), std::invalid_argument);
  CHECK_THROWS_AS(token_accuracy({a, b}, {a}), std::invalid_argument);
}

TEST_CASE("span_prf: identity, empty predictions, and the derived 6/5/4 case") {
  std::vector<Labels> gold = {
      {"B-PER", "I-PER", "O", "B-LOC"},
      {"B-ORG", "O", "B-LOC", "I-LOC"},
      {"O", "B-PER", "O", "B-MISC"},
  };
  CHECK(span_prf(gold, gold, TagScheme::bio).f1() == 1.0);

  std::vector<Labels> nothing = {
      {"O", "O", "O", "O"}, {"O", "O", "O", "O"}, {"O", "O", "O", "O"}};
  PrfCounts silent = span_prf(gold, nothing, TagScheme::bio);
  CHECK(silent.predicted == 0);
  CHECK(silent.precision() == 0.0);
  CHECK(silent.recall() == 0.0);
  CHECK(silent.f1() == 0.0);

  // six gold spans; predictions recover four of them exactly and invent one
  std::vector<Labels> pred = {
      {"B-PER", "I-PER", "O", "B-LOC"},   // 2 correct
      {"B-ORG", "I-ORG", "B-LOC", "I-LOC"},  // ORG end moved (wrong), LOC correct
      {"O", "B-PER", "O", "O"},           // PER correct, MISC missed
  };
  PrfCounts counts = span_prf(gold, pred, TagScheme::bio);
  CHECK(counts.gold == 6);
  CHECK(counts.predicted == 5);
  CHECK(counts.correct == 4);
  CHECK(std::abs(counts.precision() - 0.8) <= 1e-12);
  CHECK(std::abs(counts.recall() - 2.0 / 3.0) <= 1e-12);
  CHECK(std::abs(counts.f1() - 8.0 / 11.0) <= 1e-12);

  // swapping gold and predictions swaps precision and recall
  PrfCounts swapped = span_prf(pred, gold, TagScheme::bio);
  CHECK(swapped.precision() == counts.recall());
  CHECK(swapped.recall() == counts.precision());
  CHECK(swapped.f1() == doctest::Approx(counts.f1()).epsilon(1e-15));
}

TEST_CASE("span_prf: sentence-final entities, adjacent entities, lenient reads") {
  // entity running to the sentence end must close
  CHECK(span_prf({{"O", "B-LOC", "I-LOC"}}, {{"O", "B-LOC", "I-LOC"}}, TagScheme::bio).correct ==
        1);
  // adjacent B-X B-X are two separate spans
  PrfCounts adjacent = span_prf({{"B-ORG", "B-ORG"}}, {{"B-ORG", "B-ORG"}}, TagScheme::bio);
  CHECK(adjacent.gold == 2);
  CHECK(adjacent.correct == 2);
  // scheme-invalid predictions (dangling I-) still score via the lenient read
  PrfCounts lenient = span_prf({{"B-PER", "I-PER"}}, {{"O", "I-PER"}}, TagScheme::bio);
  CHECK(lenient.predicted == 1);
  CHECK(lenient.correct == 0);
}

TEST_CASE("span_prf is invariant under consistent BIO<->BIOES conversion") {
  Rng rng(1);
  const std::vector<std::string> types = {"PER", "LOC", "ORG"};
  for (int round = 0; round < 50; ++round) {
    auto random_bio = [&](std::int64_t length) {
      Labels labels(static_cast<std::size_t>(length), "O");
      std::int64_t t = 0;
      while (t < length) {
        if (rng.next_double() < 0.4) {
          const std::string& type = types[static_cast<std::size_t>(
              rng.uniform_int(static_cast<std::int64_t>(types.size())))];
          const std::int64_t len = 1 + rng.uniform_int(std::min<std::int64_t>(3, length - t));
          labels[static_cast<std::size_t>(t)] = "B-" + type;
          for (std::int64_t k = 1; k < len; ++k) {
            labels[static_cast<std::size_t>(t + k)] = "I-" + type;
          }
          t += len;
        } else {
          ++t;
        }
      }
      return labels;
    };
    const std::int64_t length = 3 + rng.uniform_int(8);
    Labels gold = random_bio(length);
    Labels pred = random_bio(length);
    PrfCounts bio = span_prf({gold}, {pred}, TagScheme::bio);
    PrfCounts bioes = span_prf({convert_tag_scheme(gold, TagScheme::bio, TagScheme::bioes)},
                               {convert_tag_scheme(pred, TagScheme::bio, TagScheme::bioes)},
                               TagScheme::bioes);
    CHECK(bio.gold == bioes.gold);
    CHECK(bio.predicted == bioes.predicted);
    CHECK(bio.correct == bioes.correct);
  }
}

TEST_CASE("oov breakdown: span classes partition the counts") {
  OovVocab vocab;
  vocab.training = {"paris", "in", "met"};
  vocab.embedding = {"paris", "in", "met", "london"};
  // paris: IV; london: OOTV (embedding only); zurich: OOBV (neither)
  std::vector<Sentence> gold = tagged({
      {{"met", "in", "paris"}, {"O", "O", "B-LOC"}},
      {{"london", "in", "zurich"}, {"B-LOC", "O", "B-LOC"}},
  });
  std::vector<Labels> pred = {
      {"O", "O", "B-LOC"},      // paris recognized (IV correct)
      {"O", "O", "B-LOC"},      // london missed, zurich recognized (OOBV correct)
  };
  OovBreakdown breakdown = oov_breakdown(gold, pred, vocab, TagScheme::bio);
  REQUIRE(breakdown.span_task);
  const PrfCounts& iv = breakdown.span[static_cast<std::size_t>(OovClass::iv)];
  const PrfCounts& ootv = breakdown.span[static_cast<std::size_t>(OovClass::ootv)];
  const PrfCounts& oobv = breakdown.span[static_cast<std::size_t>(OovClass::oobv)];
  CHECK(iv.gold == 1);
  CHECK(iv.correct == 1);
  CHECK(ootv.gold == 1);
  CHECK(ootv.correct == 0);
  CHECK(oobv.gold == 1);
  CHECK(oobv.correct == 1);
  CHECK(oobv.f1() == 1.0);

  PrfCounts overall = span_prf({gold[0].labels, gold[1].labels}, pred, TagScheme::bio);
  PrfCounts totals = breakdown.span_totals();
  CHECK(totals.gold == overall.gold);
  CHECK(totals.predicted == overall.predicted);
  CHECK(totals.correct == overall.correct);
}

TEST_CASE("oov breakdown: unmatched predictions attribute by their own tokens") {
  OovVocab vocab;
  vocab.training = {"known"};
  vocab.embedding = {"known"};
  std::vector<Sentence> gold = tagged({{{"known", "mystery"}, {"O", "O"}}});
  std::vector<Labels> pred = {{"B-PER", "B-PER"}};  // both invented
  OovBreakdown breakdown = oov_breakdown(gold, pred, vocab, TagScheme::bio);
  CHECK(breakdown.span[static_cast<std::size_t>(OovClass::iv)].predicted == 1);
  CHECK(breakdown.span[static_cast<std::size_t>(OovClass::oobv)].predicted == 1);
  CHECK(breakdown.span_totals().gold == 0);
}

TEST_CASE("oov breakdown: token task reports per-class accuracy") {
  OovVocab vocab;
  vocab.training = {"the"};
  vocab.embedding = {"the", "cat"};
  std::vector<Sentence> gold = tagged({{{"the", "cat", "xyzzy"}, {"DT", "NN", "NN"}}});
  std::vector<Labels> pred = {{"DT", "NN", "VB"}};
  OovBreakdown breakdown = oov_breakdown(gold, pred, vocab, TagScheme::raw);
  REQUIRE_FALSE(breakdown.span_task);
  CHECK(breakdown.token[static_cast<std::size_t>(OovClass::iv)].accuracy() == 1.0);
  CHECK(breakdown.token[static_cast<std::size_t>(OovClass::ootv)].accuracy() == 1.0);
  CHECK(breakdown.token[static_cast<std::size_t>(OovClass::oobv)].accuracy() == 0.0);
  CHECK(breakdown.token_totals().total == 3);
  CHECK(breakdown.token_totals().correct == 2);
}

TEST_CASE("predict_labels keeps corpus order across batches") {
  std::vector<Sentence> sentences;
  for (int i = 0; i < 7; ++i) {
    Sentence s;
    for (int t = 0; t <= i % 3; ++t) {
      s.tokens.push_back("w" + std::to_string(i));
      s.labels.push_back("O");
    }
    sentences.push_back(s);
  }
  Alphabets alphabets = build_alphabets(sentences);
  ModelConfig config;
  config.char_rep = CharMode::none;
  config.word_rep = WordMode::lstm;
  config.inference = InferenceMode::softmax;
  config.word_emb = 4;
  config.word_hidden = 4;
  Rng rng(2);
  Tagger tagger(config, alphabets, rng);

  auto predictions = predict_labels(tagger, sentences, 3);  // three batches
  REQUIRE(predictions.size() == sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    CHECK(predictions[i].size() == sentences[i].tokens.size());
    for (const std::string& label : predictions[i]) {
      CHECK(alphabets.labels.find(label).has_value());
    }
  }
  CHECK(predict_labels(tagger, sentences, 7) == predictions);  // batch size is irrelevant

  const double score = corpus_score(tagger, sentences, 3);
  CHECK(score >= 0.0);
  CHECK(score <= 1.0);
}

TEST_CASE("decode speed benchmark measures and validates") {
  std::vector<Sentence> sentences;
  for (int i = 0; i < 12; ++i) {
    Sentence s;
    for (int t = 0; t < 5; ++t) {
      s.tokens.push_back("tok" + std::to_string(t));
      s.labels.push_back(t % 2 == 0 ? "O" : "B-X");
    }
    sentences.push_back(s);
  }
  Alphabets alphabets = build_alphabets(sentences);
  ModelConfig config;
  config.word_emb = 4;
  config.word_hidden = 4;
  config.inference = InferenceMode::crf;
  Rng rng(3);
  Tagger tagger(config, alphabets, rng);

  SpeedReport report = decode_speed_benchmark(tagger, sentences, 3);
  CHECK(report.sentences == 12);
  CHECK(report.tokens == 60);
  CHECK(report.repetitions == 3);
  CHECK(report.all_times.size() == 3);
  CHECK(report.seconds > 0.0);
  CHECK(report.sentences_per_second > 0.0);
  CHECK(report.tokens_per_second == doctest::Approx(report.sentences_per_second * 5));
  CHECK(report.config_id == "Nochar+WLSTM+CRF");

  CHECK_THROWS_AS(decode_speed_benchmark(tagger, {}, 3), std::invalid_argument);
  CHECK_THROWS_AS(decode_speed_benchmark(tagger, sentences, 0), std::invalid_argument);
}
