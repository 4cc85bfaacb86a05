#include "seqlab/commands.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "seqlab/checkpoint.hpp"
#include "seqlab/embeddings.hpp"
#include "seqlab/eval.hpp"
#include "seqlab/trainer.hpp"

namespace seqlab {

namespace {

std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

std::vector<Sentence> read_corpus(const RunConfig& config, const std::string& path) {
  return read_conll(path, config.token_column, config.label_column);
}

// Lenient span-preserving relabel. Identity when the schemes agree or the
// target is raw; moving raw-labeled data into a span scheme is refused
// because raw labels carry no span structure to convert.
void relabel(std::vector<Sentence>& sentences, TagScheme from, TagScheme to) {
  if (from == to || to == TagScheme::raw) return;
  if (from == TagScheme::raw) {
    throw std::invalid_argument(
        "data_scheme=raw cannot be converted to a span scheme; set scheme=raw");
  }
  for (Sentence& s : sentences) {
    const auto spans = tags_to_spans(s.labels, from, /*strict=*/false);
    s.labels = spans_to_tags(spans, to, static_cast<std::int64_t>(s.labels.size()));
  }
}

std::vector<std::vector<std::string>> relabel_predictions(
    const std::vector<std::vector<std::string>>& pred, TagScheme from, TagScheme to) {
  if (from == to || from == TagScheme::raw || to == TagScheme::raw) return pred;
  std::vector<std::vector<std::string>> out;
  out.reserve(pred.size());
  for (const auto& labels : pred) {
    const auto spans = tags_to_spans(labels, from, /*strict=*/false);
    out.push_back(spans_to_tags(spans, to, static_cast<std::int64_t>(labels.size())));
  }
  return out;
}

// Training vocabulary = the model's word alphabet minus pad/unk. Without an
// embeddings file the embedding vocabulary collapses onto the training one,
// which empties the OOTV and OOEV splits (they are undefined then).
OovVocab make_oov_vocab(const Alphabets& alphabets, const RunConfig& config) {
  OovVocab vocab;
  const Alphabet& words = alphabets.words;
  for (std::int64_t i = 0; i < words.size(); ++i) {
    if (i == words.pad_index() || i == words.unk_index()) continue;
    vocab.training.insert(words.entry(i));
  }
  if (!config.embeddings_path.empty()) {
    vocab.embedding = read_embedding_vocab(config.embeddings_path);
  } else {
    vocab.embedding = vocab.training;
  }
  return vocab;
}

void write_records(const std::string& path, const std::vector<std::string>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report file '" + path + "'");
  for (const std::string& record : records) out << record << '\n';
}

// Synthetic decode workload drawn from a word alphabet.
std::vector<Sentence> bench_sentences_from(const Alphabet& words, const std::string& any_label,
                                           std::int64_t count, std::int64_t length) {
  std::vector<std::string> pool;
  for (std::int64_t i = 0; i < words.size(); ++i) {
    if (i == words.pad_index() || i == words.unk_index()) continue;
    pool.push_back(words.entry(i));
  }
  if (pool.empty()) pool.push_back("token");
  Rng rng(97);
  std::vector<Sentence> sentences(static_cast<std::size_t>(count));
  for (Sentence& s : sentences) {
    for (std::int64_t t = 0; t < length; ++t) {
      s.tokens.push_back(pool[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(pool.size())))]);
      s.labels.push_back(any_label);
    }
  }
  return sentences;
}

}  // namespace

int cmd_train(const RunConfig& config, std::ostream& out) {
  std::vector<Sentence> train = read_corpus(config, config.train_path);
  std::vector<Sentence> dev = read_corpus(config, config.dev_path);
  std::vector<Sentence> test;
  if (!config.test_path.empty()) test = read_corpus(config, config.test_path);

  const TagScheme scheme = config.model.tag_scheme;
  relabel(train, config.data_scheme, scheme);
  relabel(dev, config.data_scheme, scheme);
  relabel(test, config.data_scheme, scheme);

  const Alphabets alphabets = build_alphabets(train);
  out << "train=" << train.size() << " dev=" << dev.size() << " test=" << test.size()
      << " words=" << alphabets.words.size() << " labels=" << alphabets.labels.size() << "\n";

  std::vector<std::uint64_t> seeds = config.seeds;
  if (!config.deterministic) {
    std::random_device device;
    for (std::uint64_t& seed : seeds) {
      seed = (static_cast<std::uint64_t>(device()) << 32) | device();
    }
    out << "drawn seeds:";
    for (std::uint64_t seed : seeds) out << ' ' << seed;
    out << "\n";
  }

  std::vector<double> scores;
  for (std::uint64_t seed : seeds) {
    ModelConfig model_config = config.model;
    model_config.seed = seed;
    out << "## seed=" << seed << " model=" << model_config.id() << "\n";

    Rng rng(seed);
    std::optional<Tagger> tagger;
    if (config.embeddings_path.empty()) {
      tagger.emplace(model_config, alphabets, rng);
    } else {
      const EmbeddingTable table = load_pretrained_embeddings(
          config.embeddings_path, alphabets.words, model_config.word_emb, rng);
      out << table.describe() << "\n";
      tagger.emplace(model_config, alphabets, rng, table);
    }

    const FitReport report = fit(*tagger, train, dev, test, &out);
    scores.push_back(test.empty() ? report.best_dev : report.test_score);

    if (!config.model_path.empty()) {
      const std::string path = seeds.size() == 1
                                   ? config.model_path
                                   : config.model_path + ".seed" + std::to_string(seed);
      save_model(*tagger, path);
      out << "checkpoint written: " << path << "\n";
    }
  }

  const SeedSummary summary = summarize_scores(scores);
  out << "seeds=" << seeds.size() << " metric=" << (test.empty() ? "dev" : "test")
      << " max=" << fixed6(summary.max) << " mean=" << fixed6(summary.mean)
      << " std=" << fixed6(summary.stddev) << "\n";
  return 0;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  std::vector<Sentence> gold = read_corpus(config, config.test_path);

  TagScheme scheme;
  std::vector<std::vector<std::string>> pred;
  OovVocab vocab;
  std::string config_id;

  if (!config.model_path.empty()) {
    Tagger tagger = load_model(config.model_path);
    scheme = tagger.config().tag_scheme;
    relabel(gold, config.data_scheme, scheme);
    pred = predict_labels(tagger, gold, tagger.config().batch_size);
    vocab = make_oov_vocab(tagger.alphabets(), config);
    config_id = tagger.config().id();
  } else {
    // a predictions file is scored in the data's own scheme
    scheme = config.data_scheme;
    const std::vector<Sentence> pred_sentences = read_corpus(config, config.predictions_path);
    pred.reserve(pred_sentences.size());
    for (const Sentence& s : pred_sentences) pred.push_back(s.labels);
    if (!config.train_path.empty()) {
      const std::vector<Sentence> train = read_corpus(config, config.train_path);
      Alphabets alphabets = build_alphabets(train);
      vocab = make_oov_vocab(alphabets, config);
    } else {
      out << "note: no 'train' path given; every token counts as OOBV\n";
      if (!config.embeddings_path.empty()) {
        vocab.embedding = read_embedding_vocab(config.embeddings_path);
      }
    }
    config_id = "predictions-file";
  }

  const EvalReport report = evaluate_corpus(gold, pred, vocab, scheme);
  out << report.table();
  if (!config.output_path.empty()) {
    write_records(config.output_path, report.records(config_id));
    out << "report written: " << config.output_path << "\n";
  }
  return 0;
}

int cmd_decode(const RunConfig& config, std::ostream& out) {
  Tagger tagger = load_model(config.model_path);
  const std::vector<Sentence> sentences = read_corpus(config, config.test_path);
  std::vector<std::vector<std::string>> pred =
      predict_labels(tagger, sentences, tagger.config().batch_size);
  pred = relabel_predictions(pred, tagger.config().tag_scheme, config.data_scheme);

  std::ifstream in(config.test_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file '" + config.test_path + "'");
  std::ofstream result(config.output_path, std::ios::trunc);
  if (!result) throw std::runtime_error("cannot write output file '" + config.output_path + "'");

  // Streams the input through untouched, appending one label column to every
  // token row; blank lines and -DOCSTART- rows keep the file's shape.
  const std::string separator = " ";
  std::size_t sentence = 0;
  std::size_t position = 0;
  std::int64_t tokens = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> cols = split_columns(line, "");
    if (cols.empty()) {
      result << line << '\n';
      continue;
    }
    if (cols[0].rfind("-DOCSTART-", 0) == 0) {
      result << line << separator << "O" << '\n';
      continue;
    }
    if (sentence >= pred.size() || position >= pred[sentence].size()) {
      throw std::logic_error("decode: prediction cursor ran past the input");
    }
    result << line << separator << pred[sentence][position] << '\n';
    ++tokens;
    if (++position == pred[sentence].size()) {
      ++sentence;
      position = 0;
    }
  }
  if (sentence != pred.size() || position != 0) {
    throw std::logic_error("decode: input ended before all predictions were written");
  }
  out << "decoded " << pred.size() << " sentences (" << tokens << " tokens) -> "
      << config.output_path << "\n";
  return 0;
}

int cmd_bench(const RunConfig& config, std::ostream& out) {
  std::vector<std::string> records;
  if (!config.model_path.empty()) {
    Tagger tagger = load_model(config.model_path);
    const std::vector<Sentence> sentences =
        bench_sentences_from(tagger.alphabets().words, tagger.alphabets().labels.entry(0),
                             config.bench_sentences, config.bench_length);
    const SpeedReport report =
        decode_speed_benchmark(tagger, sentences, config.bench_repetitions);
    out << report.describe() << "\n";
    records.push_back(report.record());
  } else {
    // no checkpoint: run the full architecture matrix on a shared workload
    std::vector<Sentence> seed_corpus;
    Rng rng(41);
    for (int i = 0; i < 50; ++i) {
      Sentence s;
      for (int t = 0; t < 8; ++t) {
        s.tokens.push_back("w" + std::to_string(rng.uniform_int(200)));
        s.labels.push_back(t % 4 == 0 ? "B-X" : "O");
      }
      seed_corpus.push_back(s);
    }
    const Alphabets alphabets = build_alphabets(seed_corpus);
    const std::vector<Sentence> sentences = bench_sentences_from(
        alphabets.words, "O", config.bench_sentences, config.bench_length);
    for (const ModelConfig& model_config : all_architectures(config.model)) {
      Rng init(model_config.seed);
      Tagger tagger(model_config, alphabets, init);
      const SpeedReport report =
          decode_speed_benchmark(tagger, sentences, config.bench_repetitions);
      out << report.describe() << "\n";
      records.push_back(report.record());
    }
  }
  if (!config.output_path.empty()) {
    write_records(config.output_path, records);
    out << "report written: " << config.output_path << "\n";
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& config, std::ostream& out) {
  int failures = 0;
  for (const ModelConfig& model_config : all_architectures()) {
    const GradCheckReport report = model_gradient_check(model_config);
    const bool passed = report.passed(config.gradcheck_tolerance);
    out << model_config.id() << ": max_rel_err=" << std::scientific << std::setprecision(3)
        << report.max_rel_error << (passed ? " PASS" : " FAIL") << "\n";
    if (!passed) {
      out << "  " << report.describe() << "\n";
      ++failures;
    }
  }
  if (failures == 0) {
    out << "gradcheck: all " << all_architectures().size() << " configurations pass\n";
    return 0;
  }
  out << "gradcheck: " << failures << " configurations failed\n";
  return 1;
}

int run_command(const RunConfig& config, std::ostream& out) {
  if (config.command == "train") return cmd_train(config, out);
  if (config.command == "eval") return cmd_eval(config, out);
  if (config.command == "decode") return cmd_decode(config, out);
  if (config.command == "bench") return cmd_bench(config, out);
  if (config.command == "gradcheck") return cmd_gradcheck(config, out);
  throw std::logic_error("unreachable command '" + config.command + "'");
}

}  // namespace seqlab
