// Python bindings over the core library: training, prediction, checkpoints,
// tag-scheme algebra, and span evaluation. The CLI remains the primary
// interface; this module exposes the same operations for scripting.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <sstream>
#include <utility>

#include "seqlab/checkpoint.hpp"
#include "seqlab/corpus.hpp"
#include "seqlab/embeddings.hpp"
#include "seqlab/eval.hpp"
#include "seqlab/model.hpp"
#include "seqlab/trainer.hpp"

namespace py = pybind11;
using namespace seqlab;

namespace {

// Sentences cross the boundary as (tokens, labels) pairs.
using SentencePair = std::pair<std::vector<std::string>, std::vector<std::string>>;

std::vector<Sentence> to_sentences(const std::vector<SentencePair>& pairs) {
  std::vector<Sentence> sentences;
  sentences.reserve(pairs.size());
  for (const auto& [tokens, labels] : pairs) {
    if (tokens.size() != labels.size()) {
      throw std::invalid_argument("sentence has " + std::to_string(tokens.size()) +
                                  " tokens but " + std::to_string(labels.size()) + " labels");
    }
    sentences.push_back({tokens, labels});
  }
  return sentences;
}

// Lenient span-preserving relabel, as the CLI applies at its boundaries.
void relabel(std::vector<Sentence>& sentences, TagScheme from, TagScheme to) {
  if (from == to || to == TagScheme::raw) return;
  if (from == TagScheme::raw) {
    throw std::invalid_argument(
        "data_scheme=raw cannot be converted to a span scheme; train with scheme=\"raw\"");
  }
  for (Sentence& s : sentences) {
    const auto spans = tags_to_spans(s.labels, from, /*strict=*/false);
    s.labels = spans_to_tags(spans, to, static_cast<std::int64_t>(s.labels.size()));
  }
}

py::dict prf_dict(const PrfCounts& counts) {
  py::dict out;
  out["gold"] = counts.gold;
  out["predicted"] = counts.predicted;
  out["correct"] = counts.correct;
  out["precision"] = counts.precision();
  out["recall"] = counts.recall();
  out["f1"] = counts.f1();
  return out;
}

// A trained tagger plus everything needed to score and persist it.
class Model {
 public:
  Model(Tagger tagger, FitReport report, std::string log, std::string embeddings_path)
      : tagger_(std::move(tagger)),
        report_(std::move(report)),
        log_(std::move(log)),
        embeddings_path_(std::move(embeddings_path)) {}

  static Model train(const std::vector<SentencePair>& train_pairs,
                     const std::vector<SentencePair>& dev_pairs,
                     const std::optional<std::vector<SentencePair>>& test_pairs,
                     const ModelConfig& config, const std::string& data_scheme,
                     const std::string& embeddings) {
    std::vector<Sentence> train = to_sentences(train_pairs);
    std::vector<Sentence> dev = to_sentences(dev_pairs);
    std::vector<Sentence> test;
    if (test_pairs) test = to_sentences(*test_pairs);

    const TagScheme from = parse_tag_scheme(data_scheme);
    relabel(train, from, config.tag_scheme);
    relabel(dev, from, config.tag_scheme);
    relabel(test, from, config.tag_scheme);

    config.validate();
    const Alphabets alphabets = build_alphabets(train);
    Rng rng(config.seed);
    Rng init = rng.stream(Rng::StreamKind::init);
    std::optional<Tagger> tagger;
    if (embeddings.empty()) {
      tagger.emplace(config, alphabets, init);
    } else {
      const EmbeddingTable table =
          load_pretrained_embeddings(embeddings, alphabets.words, config.word_emb, init);
      tagger.emplace(config, alphabets, init, table);
    }

    std::ostringstream log;
    FitReport report = fit(*tagger, train, dev, test, &log);
    return Model(std::move(*tagger), std::move(report), log.str(), embeddings);
  }

  static Model load(const std::string& path) {
    Tagger tagger = load_model(path);
    FitReport report;
    report.config_id = tagger.config().id();
    return Model(std::move(tagger), std::move(report), "", "");
  }

  void save(const std::string& path) { save_model(tagger_, path); }

  std::vector<std::vector<std::string>> predict(
      const std::vector<std::vector<std::string>>& token_lists,
      const std::optional<std::string>& scheme) {
    std::vector<Sentence> sentences;
    sentences.reserve(token_lists.size());
    for (const auto& tokens : token_lists) {
      Sentence sentence;
      sentence.tokens = tokens;
      sentence.labels.assign(tokens.size(), "O");  // placeholders, never read
      sentences.push_back(std::move(sentence));
    }
    auto pred = predict_labels(tagger_, sentences, tagger_.config().batch_size);
    if (!scheme) return pred;
    const TagScheme to = parse_tag_scheme(*scheme);
    const TagScheme from = tagger_.config().tag_scheme;
    if (from == to || from == TagScheme::raw || to == TagScheme::raw) return pred;
    for (auto& labels : pred) {
      const auto spans = tags_to_spans(labels, from, /*strict=*/false);
      labels = spans_to_tags(spans, to, static_cast<std::int64_t>(labels.size()));
    }
    return pred;
  }

  py::dict evaluate(const std::vector<SentencePair>& gold_pairs,
                    const std::string& data_scheme) {
    std::vector<Sentence> gold = to_sentences(gold_pairs);
    relabel(gold, parse_tag_scheme(data_scheme), tagger_.config().tag_scheme);
    const auto pred = predict_labels(tagger_, gold, tagger_.config().batch_size);

    OovVocab vocab;
    const Alphabet& words = tagger_.alphabets().words;
    for (std::int64_t i = 0; i < words.size(); ++i) {
      if (i == words.pad_index() || i == words.unk_index()) continue;
      vocab.training.insert(words.entry(i));
    }
    vocab.embedding = embeddings_path_.empty() ? vocab.training
                                               : read_embedding_vocab(embeddings_path_);

    const EvalReport report =
        evaluate_corpus(gold, pred, vocab, tagger_.config().tag_scheme);
    py::dict out;
    out["task"] = report.span_task ? "span" : "token";
    out["token_accuracy"] = report.token.accuracy();
    out["overall"] = report.span_task ? prf_dict(report.span) : py::dict();
    const char* split_names[] = {"iv", "ootv", "ooev", "oobv"};
    for (int c = 0; c < 4; ++c) {
      if (report.span_task) {
        out[split_names[c]] = prf_dict(report.oov.span[static_cast<std::size_t>(c)]);
      } else {
        py::dict split;
        split["total"] = report.oov.token[static_cast<std::size_t>(c)].total;
        split["correct"] = report.oov.token[static_cast<std::size_t>(c)].correct;
        split["accuracy"] = report.oov.token[static_cast<std::size_t>(c)].accuracy();
        out[split_names[c]] = split;
      }
    }
    return out;
  }

  std::string config_id() const { return tagger_.config().id(); }
  std::string scheme() const { return to_string(tagger_.config().tag_scheme); }
  int best_epoch() const { return report_.best_epoch; }
  double best_dev() const { return report_.best_dev; }
  double test_score() const { return report_.test_score; }
  const std::string& fit_log() const { return log_; }

  py::list history() const {
    py::list out;
    for (const EpochRecord& record : report_.history) {
      py::dict epoch;
      epoch["epoch"] = record.epoch;
      epoch["lr"] = record.lr;
      epoch["loss"] = record.loss;
      epoch["dev"] = record.dev_score;
      out.append(epoch);
    }
    return out;
  }

 private:
  Tagger tagger_;
  FitReport report_;
  std::string log_;
  std::string embeddings_path_;
};

ModelConfig config_from_kwargs(const std::string& char_rep, const std::string& word_rep,
                               const std::string& inference, const std::string& scheme,
                               std::int64_t char_emb, std::int64_t word_emb,
                               std::int64_t char_hidden, std::int64_t word_hidden,
                               int word_cnn_layers, std::int64_t batch_size, double dropout,
                               double l2, std::optional<double> lr, double lr_decay,
                               std::optional<int> epochs, double momentum, double clip_norm,
                               const std::string& optimizer, std::uint64_t seed) {
  ModelConfig config;
  config.char_rep = parse_char_mode(char_rep);
  config.word_rep = parse_word_mode(word_rep);
  config.inference = parse_inference_mode(inference);
  config.tag_scheme = parse_tag_scheme(scheme);
  config.char_emb = char_emb;
  config.word_emb = word_emb;
  config.char_hidden = char_hidden;
  config.word_hidden = word_hidden;
  config.word_cnn_layers = word_cnn_layers;
  config.batch_size = batch_size;
  config.dropout = dropout;
  config.l2 = l2;
  config.lr = lr;
  config.lr_decay = lr_decay;
  config.epochs = epochs;
  config.momentum = momentum;
  config.clip_norm = clip_norm;
  config.optimizer = parse_optimizer_kind(optimizer);
  config.seed = seed;
  return config;
}

}  // namespace

PYBIND11_MODULE(_seqlab, module) {
  module.doc() = "Sequence-labeling toolkit: LSTM/CNN encoders with softmax or CRF inference";

  module.def(
      "read_conll",
      [](const std::string& path, int token_column, int label_column,
         const std::string& separator) {
        std::vector<SentencePair> out;
        for (Sentence& s : read_conll(path, token_column, label_column, separator)) {
          out.emplace_back(std::move(s.tokens), std::move(s.labels));
        }
        return out;
      },
      py::arg("path"), py::arg("token_column") = 0, py::arg("label_column") = -1,
      py::arg("separator") = "",
      "Read a CoNLL-style column file into (tokens, labels) pairs.");

  module.def(
      "convert_tag_scheme",
      [](const std::vector<std::string>& labels, const std::string& from,
         const std::string& to) {
        return convert_tag_scheme(labels, parse_tag_scheme(from), parse_tag_scheme(to));
      },
      py::arg("labels"), py::arg("from_scheme"), py::arg("to_scheme"),
      "Strict span-preserving conversion between BIO and BIOES.");

  module.def(
      "tags_to_spans",
      [](const std::vector<std::string>& labels, const std::string& scheme, bool strict) {
        std::vector<std::tuple<std::string, std::int64_t, std::int64_t>> out;
        for (const Span& span : tags_to_spans(labels, parse_tag_scheme(scheme), strict)) {
          out.emplace_back(span.label, span.start, span.end);
        }
        return out;
      },
      py::arg("labels"), py::arg("scheme"), py::arg("strict") = false,
      "Extract (label, start, end) spans; lenient mode repairs dangling continuations.");

  module.def(
      "spans_to_tags",
      [](const std::vector<std::tuple<std::string, std::int64_t, std::int64_t>>& spans,
         const std::string& scheme, std::int64_t length) {
        std::vector<Span> converted;
        for (const auto& [label, start, end] : spans) converted.push_back({label, start, end});
        return spans_to_tags(converted, parse_tag_scheme(scheme), length);
      },
      py::arg("spans"), py::arg("scheme"), py::arg("length"),
      "Write the label sequence realizing sorted, non-overlapping spans.");

  module.def("token_accuracy", &token_accuracy, py::arg("gold"), py::arg("pred"),
             "Fraction of aligned positions with equal labels.");

  module.def(
      "span_scores",
      [](const std::vector<std::vector<std::string>>& gold,
         const std::vector<std::vector<std::string>>& pred, const std::string& scheme) {
        return prf_dict(span_prf(gold, pred, parse_tag_scheme(scheme)));
      },
      py::arg("gold"), py::arg("pred"), py::arg("scheme") = "bioes",
      "Exact-match span precision/recall/F1 over aligned corpora.");

  module.def("architectures", []() {
    std::vector<std::string> ids;
    for (const ModelConfig& config : all_architectures()) ids.push_back(config.id());
    return ids;
  });

  py::class_<Model>(module, "Model")
      .def_static(
          "_train",
          [](const std::vector<SentencePair>& train, const std::vector<SentencePair>& dev,
             const std::optional<std::vector<SentencePair>>& test,
             const std::string& char_rep, const std::string& word_rep,
             const std::string& inference, const std::string& scheme,
             const std::string& data_scheme, std::int64_t char_emb, std::int64_t word_emb,
             std::int64_t char_hidden, std::int64_t word_hidden, int word_cnn_layers,
             std::int64_t batch_size, double dropout, double l2, std::optional<double> lr,
             double lr_decay, std::optional<int> epochs, double momentum, double clip_norm,
             const std::string& optimizer, std::uint64_t seed, const std::string& embeddings) {
            const ModelConfig config = config_from_kwargs(
                char_rep, word_rep, inference, scheme, char_emb, word_emb, char_hidden,
                word_hidden, word_cnn_layers, batch_size, dropout, l2, lr, lr_decay, epochs,
                momentum, clip_norm, optimizer, seed);
            return Model::train(train, dev, test, config, data_scheme, embeddings);
          },
          py::arg("train"), py::arg("dev"), py::arg("test") = py::none(),
          py::arg("char_rep") = "none", py::arg("word_rep") = "lstm",
          py::arg("inference") = "softmax", py::arg("scheme") = "bioes",
          py::arg("data_scheme") = "bio", py::arg("char_emb") = 30,
          py::arg("word_emb") = 100, py::arg("char_hidden") = 50,
          py::arg("word_hidden") = 200, py::arg("word_cnn_layers") = 4,
          py::arg("batch_size") = 10, py::arg("dropout") = 0.5, py::arg("l2") = 1e-8,
          py::arg("lr") = py::none(), py::arg("lr_decay") = 0.05,
          py::arg("epochs") = py::none(), py::arg("momentum") = 0.0,
          py::arg("clip_norm") = 5.0, py::arg("optimizer") = "sgd", py::arg("seed") = 42,
          py::arg("embeddings") = "")
      .def_static("load", &Model::load, py::arg("path"),
                  "Rebuild a model from a checkpoint file.")
      .def("save", &Model::save, py::arg("path"), "Write a self-contained checkpoint.")
      .def("predict", &Model::predict, py::arg("sentences"), py::arg("scheme") = py::none(),
           "Predict label sequences for lists of tokens; `scheme` converts the "
           "output from the model's training scheme.")
      .def("evaluate", &Model::evaluate, py::arg("gold"), py::arg("data_scheme") = "bio",
           "Score gold (tokens, labels) pairs: overall P/R/F1 plus the "
           "IV/OOTV/OOEV/OOBV breakdown.")
      .def_property_readonly("config_id", &Model::config_id)
      .def_property_readonly("scheme", &Model::scheme)
      .def_property_readonly("best_epoch", &Model::best_epoch)
      .def_property_readonly("best_dev", &Model::best_dev)
      .def_property_readonly("test_score", &Model::test_score)
      .def_property_readonly("fit_log", &Model::fit_log)
      .def_property_readonly("history", &Model::history)
      .def("__repr__", [](const Model& model) {
        return "<seqlab.Model " + model.config_id() + ">";
      });
}
