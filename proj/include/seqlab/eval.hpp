#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/corpus.hpp"
#include "seqlab/model.hpp"

namespace seqlab {

// Micro-averaged exact-match span counts. The zero-denominator convention
// follows chunk evaluation scripts: a vanishing denominator scores 0.
struct PrfCounts {
  std::int64_t gold = 0;
  std::int64_t predicted = 0;
  std::int64_t correct = 0;

  double precision() const;
  double recall() const;
  double f1() const;
};

struct TokenCounts {
  std::int64_t total = 0;
  std::int64_t correct = 0;

  double accuracy() const;
};

// Fraction of aligned positions with equal labels; throws on misalignment.
double token_accuracy(const std::vector<std::vector<std::string>>& gold,
                      const std::vector<std::vector<std::string>>& pred);

// Span precision/recall/F1 with spans extracted leniently from both sides; a
// predicted span is correct iff label, start, and end all match a gold span.
PrfCounts span_prf(const std::vector<std::vector<std::string>>& gold,
                   const std::vector<std::vector<std::string>>& pred, TagScheme scheme);

// Per-OOV-class sub-scores. Span task: every gold span is classed by its
// tokens; a matched prediction counts in its gold span's class, an unmatched
// one in the class of its own tokens. Token task: per-class accuracy.
struct OovBreakdown {
  bool span_task = true;
  std::array<PrfCounts, 4> span;    // indexed by OovClass
  std::array<TokenCounts, 4> token;

  PrfCounts span_totals() const;
  TokenCounts token_totals() const;
};

OovBreakdown oov_breakdown(const std::vector<Sentence>& gold_sentences,
                           const std::vector<std::vector<std::string>>& pred_labels,
                           const OovVocab& vocab, TagScheme scheme);

// Everything one scoring pass produces: the task-level totals, token accuracy
// (informative under both tasks), and the OOV split.
struct EvalReport {
  bool span_task = true;
  PrfCounts span;
  TokenCounts token;
  OovBreakdown oov;

  // Human-readable table, one row per split.
  std::string table() const;
  // Machine-readable `key=value` lines with stable field order: one record
  // per split (overall, iv, ootv, ooev, oobv).
  std::vector<std::string> records(const std::string& config_id) const;
};

EvalReport evaluate_corpus(const std::vector<Sentence>& gold,
                           const std::vector<std::vector<std::string>>& pred,
                           const OovVocab& vocab, TagScheme scheme);

// ---- model-facing helpers ----

// Batched eval-mode predictions, one label sequence per input sentence, in
// input order.
std::vector<std::vector<std::string>> predict_labels(Tagger& tagger,
                                                     const std::vector<Sentence>& sentences,
                                                     std::int64_t batch_size);

// The dev/test selection metric: span F1 under BIO/BIOES schemes, token
// accuracy under raw labels.
double corpus_score(Tagger& tagger, const std::vector<Sentence>& sentences,
                    std::int64_t batch_size);

// ---- decoding speed ----

struct SpeedReport {
  std::string config_id;
  std::int64_t sentences = 0;
  std::int64_t tokens = 0;
  int repetitions = 0;
  double seconds = 0.0;  // median over repetitions, decoding only
  double sentences_per_second = 0.0;
  double tokens_per_second = 0.0;
  std::vector<double> all_times;
  std::string environment;

  std::string describe() const;  // one human-readable line
  std::string record() const;    // machine-readable `key=value` line
};

// Times eval-mode decoding over pre-built batches (batching and I/O excluded)
// with one warmup pass, then `repetitions` timed passes; reports the median.
SpeedReport decode_speed_benchmark(Tagger& tagger, const std::vector<Sentence>& sentences,
                                   int repetitions);

}  // namespace seqlab
