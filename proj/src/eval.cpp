#include "seqlab/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace seqlab {

namespace {

void check_aligned(const std::vector<std::vector<std::string>>& gold,
                   const std::vector<std::vector<std::string>>& pred, const char* who) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(gold.size()) +
                                " gold sentences vs " + std::to_string(pred.size()) +
                                " predictions");
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) {
      throw std::invalid_argument(std::string(who) + ": sentence " + std::to_string(i) +
                                  " has " + std::to_string(gold[i].size()) + " gold labels vs " +
                                  std::to_string(pred[i].size()) + " predicted");
    }
  }
}

// Count of exact (label, start, end) matches between two span multisets.
std::int64_t matched_spans(std::vector<Span> gold, std::vector<Span> pred) {
  std::sort(gold.begin(), gold.end());
  std::sort(pred.begin(), pred.end());
  std::int64_t matches = 0;
  std::size_t g = 0, p = 0;
  while (g < gold.size() && p < pred.size()) {
    if (gold[g] == pred[p]) {
      ++matches;
      ++g;
      ++p;
    } else if (gold[g] < pred[p]) {
      ++g;
    } else {
      ++p;
    }
  }
  return matches;
}

std::size_t class_index(OovClass c) { return static_cast<std::size_t>(c); }

}  // namespace

double PrfCounts::precision() const {
  return predicted > 0 ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
}

double PrfCounts::recall() const {
  return gold > 0 ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
}

double PrfCounts::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double TokenCounts::accuracy() const {
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double token_accuracy(const std::vector<std::vector<std::string>>& gold,
                      const std::vector<std::vector<std::string>>& pred) {
  check_aligned(gold, pred, "token_accuracy");
  TokenCounts counts;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t t = 0; t < gold[i].size(); ++t) {
      ++counts.total;
      if (gold[i][t] == pred[i][t]) ++counts.correct;
    }
  }
  return counts.accuracy();
}

PrfCounts span_prf(const std::vector<std::vector<std::string>>& gold,
                   const std::vector<std::vector<std::string>>& pred, TagScheme scheme) {
  check_aligned(gold, pred, "span_prf");
  PrfCounts counts;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::vector<Span> gold_spans = tags_to_spans(gold[i], scheme, /*strict=*/false);
    const std::vector<Span> pred_spans = tags_to_spans(pred[i], scheme, /*strict=*/false);
    counts.gold += static_cast<std::int64_t>(gold_spans.size());
    counts.predicted += static_cast<std::int64_t>(pred_spans.size());
    counts.correct += matched_spans(gold_spans, pred_spans);
  }
  return counts;
}

PrfCounts OovBreakdown::span_totals() const {
  PrfCounts totals;
  for (const PrfCounts& c : span) {
    totals.gold += c.gold;
    totals.predicted += c.predicted;
    totals.correct += c.correct;
  }
  return totals;
}

TokenCounts OovBreakdown::token_totals() const {
  TokenCounts totals;
  for (const TokenCounts& c : token) {
    totals.total += c.total;
    totals.correct += c.correct;
  }
  return totals;
}

OovBreakdown oov_breakdown(const std::vector<Sentence>& gold_sentences,
                           const std::vector<std::vector<std::string>>& pred_labels,
                           const OovVocab& vocab, TagScheme scheme) {
  std::vector<std::vector<std::string>> gold_labels;
  gold_labels.reserve(gold_sentences.size());
  for (const Sentence& sentence : gold_sentences) gold_labels.push_back(sentence.labels);
  check_aligned(gold_labels, pred_labels, "oov_breakdown");

  OovBreakdown breakdown;
  breakdown.span_task = scheme != TagScheme::raw;

  if (!breakdown.span_task) {
    for (std::size_t i = 0; i < gold_sentences.size(); ++i) {
      const Sentence& sentence = gold_sentences[i];
      for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
        TokenCounts& bucket = breakdown.token[class_index(classify_token(sentence.tokens[t],
                                                                         vocab))];
        ++bucket.total;
        if (sentence.labels[t] == pred_labels[i][t]) ++bucket.correct;
      }
    }
    return breakdown;
  }

  for (std::size_t i = 0; i < gold_sentences.size(); ++i) {
    const Sentence& sentence = gold_sentences[i];
    std::vector<Span> gold_spans = tags_to_spans(sentence.labels, scheme, false);
    std::vector<Span> pred_spans = tags_to_spans(pred_labels[i], scheme, false);

    auto span_class = [&](const Span& span) {
      std::vector<std::string> tokens(
          sentence.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
          sentence.tokens.begin() + static_cast<std::ptrdiff_t>(span.end + 1));
      return classify_span(tokens, vocab);
    };

    std::vector<bool> pred_matched(pred_spans.size(), false);
    for (const Span& gold_span : gold_spans) {
      const std::size_t cls = class_index(span_class(gold_span));
      ++breakdown.span[cls].gold;
      for (std::size_t p = 0; p < pred_spans.size(); ++p) {
        if (!pred_matched[p] && pred_spans[p] == gold_span) {
          pred_matched[p] = true;
          ++breakdown.span[cls].predicted;
          ++breakdown.span[cls].correct;
          break;
        }
      }
    }
    for (std::size_t p = 0; p < pred_spans.size(); ++p) {
      if (!pred_matched[p]) {
        ++breakdown.span[class_index(span_class(pred_spans[p]))].predicted;
      }
    }
  }
  return breakdown;
}

std::vector<std::vector<std::string>> predict_labels(Tagger& tagger,
                                                     const std::vector<Sentence>& sentences,
                                                     std::int64_t batch_size) {
  std::vector<std::vector<std::string>> predictions(sentences.size());
  Rng rng(0);  // unshuffled batching draws nothing
  const std::vector<Batch> batches = make_batches(sentences, tagger.alphabets(), batch_size,
                                                  /*shuffle=*/false, rng,
                                                  /*strict_labels=*/false);
  const Alphabet& labels = tagger.alphabets().labels;
  for (const Batch& batch : batches) {
    const auto decoded = tagger.decode(batch);
    for (std::int64_t b = 0; b < batch.size; ++b) {
      std::vector<std::string>& out = predictions[batch.sentence_index[static_cast<std::size_t>(b)]];
      out.reserve(decoded[static_cast<std::size_t>(b)].size());
      for (std::int64_t id : decoded[static_cast<std::size_t>(b)]) {
        out.push_back(labels.entry(id));
      }
    }
  }
  return predictions;
}

double corpus_score(Tagger& tagger, const std::vector<Sentence>& sentences,
                    std::int64_t batch_size) {
  const std::vector<std::vector<std::string>> predictions =
      predict_labels(tagger, sentences, batch_size);
  std::vector<std::vector<std::string>> gold;
  gold.reserve(sentences.size());
  for (const Sentence& sentence : sentences) gold.push_back(sentence.labels);
  const TagScheme scheme = tagger.config().tag_scheme;
  if (scheme == TagScheme::raw) return token_accuracy(gold, predictions);
  return span_prf(gold, predictions, scheme).f1();
}

SpeedReport decode_speed_benchmark(Tagger& tagger, const std::vector<Sentence>& sentences,
                                   int repetitions) {
  if (sentences.empty()) {
    throw std::invalid_argument("decode_speed_benchmark: no sentences to decode");
  }
  if (repetitions < 1) {
    throw std::invalid_argument("decode_speed_benchmark: repetitions must be at least 1");
  }
  SpeedReport report;
  report.config_id = tagger.config().id();
  report.sentences = static_cast<std::int64_t>(sentences.size());
  for (const Sentence& sentence : sentences) {
    report.tokens += static_cast<std::int64_t>(sentence.tokens.size());
  }
  report.repetitions = repetitions;
  report.environment = "single-threaded";

  Rng rng(0);
  const std::vector<Batch> batches = make_batches(sentences, tagger.alphabets(),
                                                  tagger.config().batch_size, false, rng, false);
  auto run = [&]() {
    for (const Batch& batch : batches) {
      volatile std::size_t sink = tagger.decode(batch).size();  // keep the decode alive
      (void)sink;
    }
  };
  run();  // warmup
  report.all_times.reserve(static_cast<std::size_t>(repetitions));
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto begin = std::chrono::steady_clock::now();
    run();
    const auto end = std::chrono::steady_clock::now();
    report.all_times.push_back(std::chrono::duration<double>(end - begin).count());
  }
  std::vector<double> times = report.all_times;
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  report.seconds = times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  if (report.seconds > 0.0) {
    report.sentences_per_second = static_cast<double>(report.sentences) / report.seconds;
    report.tokens_per_second = static_cast<double>(report.tokens) / report.seconds;
  }
  return report;
}

// ---- report formatting ----

namespace {

std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

constexpr std::array<const char*, 4> kSplitKeys = {"iv", "ootv", "ooev", "oobv"};

}  // namespace

EvalReport evaluate_corpus(const std::vector<Sentence>& gold,
                           const std::vector<std::vector<std::string>>& pred,
                           const OovVocab& vocab, TagScheme scheme) {
  std::vector<std::vector<std::string>> gold_labels;
  gold_labels.reserve(gold.size());
  for (const Sentence& s : gold) gold_labels.push_back(s.labels);

  EvalReport report;
  report.span_task = scheme != TagScheme::raw;
  token_accuracy(gold_labels, pred);  // alignment check
  for (std::size_t i = 0; i < gold_labels.size(); ++i) {
    report.token.total += static_cast<std::int64_t>(gold_labels[i].size());
    for (std::size_t t = 0; t < gold_labels[i].size(); ++t) {
      if (gold_labels[i][t] == pred[i][t]) ++report.token.correct;
    }
  }
  if (report.span_task) report.span = span_prf(gold_labels, pred, scheme);
  report.oov = oov_breakdown(gold, pred, vocab, scheme);
  return report;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  if (span_task) {
    os << "task=span token_accuracy=" << fixed6(token.accuracy()) << "\n";
    os << "split      gold  pred  correct  precision  recall    f1\n";
    auto row = [&](const char* name, const PrfCounts& c) {
      os << std::left << std::setw(10) << name << ' ' << std::setw(5) << c.gold << ' '
         << std::setw(5) << c.predicted << ' ' << std::setw(8) << c.correct << ' '
         << fixed6(c.precision()) << "   " << fixed6(c.recall()) << "  " << fixed6(c.f1())
         << "\n";
    };
    row("overall", span);
    for (std::size_t k = 0; k < kSplitKeys.size(); ++k) row(kSplitKeys[k], oov.span[k]);
  } else {
    os << "task=token\n";
    os << "split      total  correct  accuracy\n";
    auto row = [&](const char* name, const TokenCounts& c) {
      os << std::left << std::setw(10) << name << ' ' << std::setw(6) << c.total << ' '
         << std::setw(8) << c.correct << ' ' << fixed6(c.accuracy()) << "\n";
    };
    row("overall", token);
    for (std::size_t k = 0; k < kSplitKeys.size(); ++k) row(kSplitKeys[k], oov.token[k]);
  }
  return os.str();
}

std::vector<std::string> EvalReport::records(const std::string& config_id) const {
  std::vector<std::string> lines;
  auto span_record = [&](const char* split, const PrfCounts& c) {
    lines.push_back("config=" + config_id + " task=span split=" + split +
                    " gold=" + std::to_string(c.gold) +
                    " predicted=" + std::to_string(c.predicted) +
                    " correct=" + std::to_string(c.correct) + " precision=" +
                    fixed6(c.precision()) + " recall=" + fixed6(c.recall()) +
                    " f1=" + fixed6(c.f1()));
  };
  auto token_record = [&](const char* split, const TokenCounts& c) {
    lines.push_back("config=" + config_id + " task=token split=" + split +
                    " total=" + std::to_string(c.total) +
                    " correct=" + std::to_string(c.correct) +
                    " accuracy=" + fixed6(c.accuracy()));
  };
  if (span_task) {
    span_record("overall", span);
    for (std::size_t k = 0; k < kSplitKeys.size(); ++k) span_record(kSplitKeys[k], oov.span[k]);
  } else {
    token_record("overall", token);
    for (std::size_t k = 0; k < kSplitKeys.size(); ++k) token_record(kSplitKeys[k], oov.token[k]);
  }
  return lines;
}

std::string SpeedReport::describe() const {
  std::ostringstream os;
  os << config_id << ": " << sentences << " sentences / " << tokens << " tokens, median "
     << fixed6(seconds) << " s over " << repetitions << " reps -> "
     << fixed6(sentences_per_second) << " sent/s, " << fixed6(tokens_per_second) << " tok/s ("
     << environment << ")";
  return os.str();
}

std::string SpeedReport::record() const {
  return "config=" + config_id + " sentences=" + std::to_string(sentences) +
         " tokens=" + std::to_string(tokens) + " repetitions=" + std::to_string(repetitions) +
         " median_seconds=" + fixed6(seconds) +
         " sentences_per_second=" + fixed6(sentences_per_second) +
         " tokens_per_second=" + fixed6(tokens_per_second);
}

}  // namespace seqlab
