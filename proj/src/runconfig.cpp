#include "seqlab/runconfig.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace seqlab {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void key_error(const std::string& context, const std::string& key,
                            const std::string& what) {
  throw std::invalid_argument(context + ": key '" + key + "': " + what);
}

std::int64_t parse_int(const std::string& value, const std::string& key,
                       const std::string& context) {
  std::size_t consumed = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(value, &consumed);
  } catch (const std::exception&) {
    key_error(context, key, "expected an integer, got '" + value + "'");
  }
  if (consumed != value.size()) {
    key_error(context, key, "expected an integer, got '" + value + "'");
  }
  return v;
}

double parse_double(const std::string& value, const std::string& key,
                    const std::string& context) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &consumed);
  } catch (const std::exception&) {
    key_error(context, key, "expected a number, got '" + value + "'");
  }
  if (consumed != value.size()) {
    key_error(context, key, "expected a number, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& value, const std::string& key, const std::string& context) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  key_error(context, key, "expected true/false, got '" + value + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& value, const std::string& key,
                                           const std::string& context) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) key_error(context, key, "empty entry in seed list '" + value + "'");
    std::size_t consumed = 0;
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(item, &consumed);
    } catch (const std::exception&) {
      key_error(context, key, "expected comma-separated seeds, got '" + value + "'");
    }
    if (consumed != item.size()) {
      key_error(context, key, "expected comma-separated seeds, got '" + value + "'");
    }
    seeds.push_back(seed);
  }
  if (seeds.empty()) key_error(context, key, "seed list is empty");
  return seeds;
}

// Wraps the enum parsers so their message carries file/flag context.
template <typename Fn>
auto parse_enum(Fn&& fn, const std::string& value, const std::string& key,
                const std::string& context) {
  try {
    return fn(value);
  } catch (const std::exception& e) {
    key_error(context, key, e.what());
  }
}

struct KeyEntry {
  const char* key;         // config-file form; the flag is --kebab-case
  const char* value_name;  // placeholder in help ("BOOL" keys accept a bare flag)
  const char* help;
  std::function<void(RunConfig&, const std::string&, const std::string&)> apply;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      // paths
      {"train", "PATH", "training corpus (CoNLL columns)",
       [](RunConfig& c, const std::string& v, const std::string&) { c.train_path = v; }},
      {"dev", "PATH", "development corpus for model selection",
       [](RunConfig& c, const std::string& v, const std::string&) { c.dev_path = v; }},
      {"test", "PATH", "test corpus; also the eval/decode input",
       [](RunConfig& c, const std::string& v, const std::string&) { c.test_path = v; }},
      {"embeddings", "PATH", "pretrained word embeddings text file",
       [](RunConfig& c, const std::string& v, const std::string&) { c.embeddings_path = v; }},
      {"predictions", "PATH", "score this predictions file instead of a model",
       [](RunConfig& c, const std::string& v, const std::string&) { c.predictions_path = v; }},
      {"model", "PATH", "checkpoint to write (train) or read (eval/decode/bench)",
       [](RunConfig& c, const std::string& v, const std::string&) { c.model_path = v; }},
      {"output", "PATH", "decode output / machine-readable report file",
       [](RunConfig& c, const std::string& v, const std::string&) { c.output_path = v; }},
      {"data_dir", "PATH", "base directory for relative paths (default $SEQLAB_DATA_DIR)",
       [](RunConfig& c, const std::string& v, const std::string&) { c.data_dir = v; }},

      // data layout
      {"token_column", "INT", "column holding tokens (default 0)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const std::int64_t col = parse_int(v, "token_column", ctx);
         if (col < 0) key_error(ctx, "token_column", "must be non-negative");
         c.token_column = static_cast<int>(col);
       }},
      {"label_column", "INT", "column holding labels; -1 means last (default)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const std::int64_t col = parse_int(v, "label_column", ctx);
         if (col < -1) key_error(ctx, "label_column", "must be -1 or a column index");
         c.label_column = static_cast<int>(col);
       }},
      {"data_scheme", "NAME", "tag scheme of the data files: raw, bio, bioes (default bio)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.data_scheme = parse_enum(parse_tag_scheme, v, "data_scheme", ctx);
       }},

      // architecture
      {"scheme", "NAME", "tag scheme to train and score in (default bioes)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.tag_scheme = parse_enum(parse_tag_scheme, v, "scheme", ctx);
       }},
      {"char_rep", "NAME", "character encoder: none, lstm, cnn (default none)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.char_rep = parse_enum(parse_char_mode, v, "char_rep", ctx);
       }},
      {"word_rep", "NAME", "word encoder: lstm, cnn (default lstm)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.word_rep = parse_enum(parse_word_mode, v, "word_rep", ctx);
       }},
      {"inference", "NAME", "inference layer: softmax, crf (default softmax)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.inference = parse_enum(parse_inference_mode, v, "inference", ctx);
       }},

      // sizes
      {"char_emb", "INT", "character embedding dimension (default 30)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.char_emb = parse_int(v, "char_emb", ctx);
       }},
      {"word_emb", "INT", "word embedding dimension (default 100)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.word_emb = parse_int(v, "word_emb", ctx);
       }},
      {"char_hidden", "INT", "character encoder hidden size (default 50)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.char_hidden = parse_int(v, "char_hidden", ctx);
       }},
      {"word_hidden", "INT", "word encoder hidden size (default 200)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.word_hidden = parse_int(v, "word_hidden", ctx);
       }},
      {"word_cnn_layers", "INT", "stacked word-CNN layers (default 4)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.word_cnn_layers = static_cast<int>(parse_int(v, "word_cnn_layers", ctx));
       }},
      {"batch_size", "INT", "sentences per batch (default 10)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.batch_size = parse_int(v, "batch_size", ctx);
       }},

      // optimization
      {"dropout", "FLOAT", "dropout rate in [0, 1) (default 0.5)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const double d = parse_double(v, "dropout", ctx);
         if (d < 0.0 || d >= 1.0) key_error(ctx, "dropout", "must be in [0, 1)");
         c.model.dropout = d;
       }},
      {"l2", "FLOAT", "coupled L2 strength (default 1e-8)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const double l2 = parse_double(v, "l2", ctx);
         if (l2 < 0.0) key_error(ctx, "l2", "must be non-negative");
         c.model.l2 = l2;
       }},
      {"lr", "FLOAT", "initial learning rate (default 0.015 word-LSTM / 0.005 word-CNN)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const double lr = parse_double(v, "lr", ctx);
         if (lr <= 0.0) key_error(ctx, "lr", "must be positive");
         c.model.lr = lr;
       }},
      {"lr_decay", "FLOAT", "per-epoch decay: lr / (1 + decay * epoch) (default 0.05)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const double d = parse_double(v, "lr_decay", ctx);
         if (d < 0.0) key_error(ctx, "lr_decay", "must be non-negative");
         c.model.lr_decay = d;
       }},
      {"epochs", "INT", "training epochs (default 100 word-LSTM / 200 word-CNN)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const std::int64_t e = parse_int(v, "epochs", ctx);
         if (e < 1) key_error(ctx, "epochs", "must be at least 1");
         c.model.epochs = static_cast<int>(e);
       }},
      {"momentum", "FLOAT", "SGD momentum in [0, 1) (default 0, plain SGD)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const double m = parse_double(v, "momentum", ctx);
         if (m < 0.0 || m >= 1.0) key_error(ctx, "momentum", "must be in [0, 1)");
         c.model.momentum = m;
       }},
      {"clip_norm", "FLOAT", "global gradient-norm clip; 0 disables (default 5)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const double clip = parse_double(v, "clip_norm", ctx);
         if (clip < 0.0) key_error(ctx, "clip_norm", "must be non-negative");
         c.model.clip_norm = clip;
       }},
      {"optimizer", "NAME", "sgd, adagrad, adadelta, rmsprop, adam (default sgd)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.model.optimizer = parse_enum(parse_optimizer_kind, v, "optimizer", ctx);
       }},

      // run control
      {"seeds", "LIST", "comma-separated training seeds (default 42)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.seeds = parse_seed_list(v, "seeds", ctx);
       }},
      {"deterministic", "BOOL", "false draws fresh seeds per run (default true)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         c.deterministic = parse_bool(v, "deterministic", ctx);
       }},

      // benchmark / gradcheck
      {"bench_sentences", "INT", "synthetic sentences for bench (default 10000)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const std::int64_t n = parse_int(v, "bench_sentences", ctx);
         if (n < 1) key_error(ctx, "bench_sentences", "must be at least 1");
         c.bench_sentences = n;
       }},
      {"bench_length", "INT", "tokens per synthetic bench sentence (default 25)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const std::int64_t n = parse_int(v, "bench_length", ctx);
         if (n < 1) key_error(ctx, "bench_length", "must be at least 1");
         c.bench_length = n;
       }},
      {"bench_repetitions", "INT", "timed decode passes, median reported (default 5)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const std::int64_t n = parse_int(v, "bench_repetitions", ctx);
         if (n < 1) key_error(ctx, "bench_repetitions", "must be at least 1");
         c.bench_repetitions = static_cast<int>(n);
       }},
      {"gradcheck_tolerance", "FLOAT", "max relative error accepted (default 1e-4)",
       [](RunConfig& c, const std::string& v, const std::string& ctx) {
         const double tol = parse_double(v, "gradcheck_tolerance", ctx);
         if (tol <= 0.0) key_error(ctx, "gradcheck_tolerance", "must be positive");
         c.gradcheck_tolerance = tol;
       }},
  };
  return table;
}

std::string to_kebab(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string to_snake(std::string flag) {
  std::replace(flag.begin(), flag.end(), '-', '_');
  return flag;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t above = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diagonal = above;
    }
  }
  return row[b.size()];
}

std::string near_miss_suffix(const std::string& key) {
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const KeyEntry& entry : key_table()) {
    const std::string candidate = entry.key;
    const std::size_t distance = edit_distance(key, candidate);
    const bool related = distance <= 2 || candidate.find(key) != std::string::npos ||
                         key.find(candidate) != std::string::npos;
    if (related) ranked.emplace_back(distance, candidate);
  }
  if (ranked.empty()) return "";
  std::sort(ranked.begin(), ranked.end());
  std::string suffix = "; did you mean: ";
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) {
    if (i > 0) suffix += ", ";
    suffix += ranked[i].second;
  }
  return suffix + "?";
}

const KeyEntry* find_key(const std::string& key) {
  for (const KeyEntry& entry : key_table()) {
    if (key == entry.key) return &entry;
  }
  return nullptr;
}

void resolve_against_data_dir(RunConfig& config) {
  if (config.data_dir.empty()) return;
  auto resolve = [&](std::string& path) {
    if (path.empty()) return;
    std::filesystem::path p(path);
    if (p.is_relative()) path = (std::filesystem::path(config.data_dir) / p).string();
  };
  resolve(config.train_path);
  resolve(config.dev_path);
  resolve(config.test_path);
  resolve(config.embeddings_path);
  resolve(config.predictions_path);
  resolve(config.model_path);
  resolve(config.output_path);
}

}  // namespace

void apply_config_key(RunConfig& config, const std::string& key, const std::string& value,
                      const std::string& context) {
  const KeyEntry* entry = find_key(key);
  if (entry == nullptr) {
    throw std::invalid_argument(context + ": unknown key '" + key + "'" + near_miss_suffix(key));
  }
  entry->apply(config, value, context);
}

void parse_config_file(const std::string& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string context = path + ":" + std::to_string(line_no);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(context + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(context + ": empty key");
    apply_config_key(config, key, value, context);
  }
}

RunConfig parse_cli(const std::vector<std::string>& args) {
  if (args.empty()) {
    throw std::invalid_argument(
        "missing command; expected train, eval, decode, bench, or gradcheck");
  }
  RunConfig config;
  config.command = args[0];
  const bool known_command = config.command == "train" || config.command == "eval" ||
                             config.command == "decode" || config.command == "bench" ||
                             config.command == "gradcheck";
  if (!known_command) {
    throw std::invalid_argument("unknown command '" + config.command +
                                "'; expected train, eval, decode, bench, or gradcheck");
  }

  // one scan splits flags into (key, value) pairs and pulls out --config
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> settings;  // snake_case key, value
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& token = args[i];
    if (token.rfind("--", 0) != 0) {
      throw std::invalid_argument("unexpected positional argument '" + token + "'");
    }
    std::string flag = token.substr(2);
    std::string value;
    bool has_value = false;
    const std::size_t eq = flag.find('=');
    if (eq != std::string::npos) {
      value = flag.substr(eq + 1);
      flag = flag.substr(0, eq);
      has_value = true;
    }
    const std::string key = to_snake(flag);
    const bool is_config = key == "config";
    const KeyEntry* entry = is_config ? nullptr : find_key(key);
    if (!is_config && entry == nullptr) {
      throw std::invalid_argument("flag --" + flag + ": unknown key '" + key + "'" +
                                  near_miss_suffix(key));
    }
    const bool is_bool = entry != nullptr && std::string(entry->value_name) == "BOOL";
    if (!has_value) {
      const bool next_is_flag = i + 1 >= args.size() || args[i + 1].rfind("--", 0) == 0;
      if (is_bool && next_is_flag) {
        value = "true";  // bare boolean flag
      } else if (i + 1 < args.size()) {
        value = args[++i];
      } else {
        throw std::invalid_argument("flag --" + flag + ": expected a value");
      }
    }
    if (is_config) {
      config_file = value;
    } else {
      settings.emplace_back(key, value);
    }
  }

  if (!config_file.empty()) parse_config_file(config_file, config);
  for (const auto& [key, value] : settings) {
    apply_config_key(config, key, value, "flag --" + to_kebab(key));
  }

  if (config.data_dir.empty()) {
    if (const char* env = std::getenv("SEQLAB_DATA_DIR")) config.data_dir = env;
  }
  resolve_against_data_dir(config);
  validate_run_config(config);
  return config;
}

void validate_run_config(const RunConfig& config) {
  config.model.validate();
  if (config.seeds.empty()) throw std::invalid_argument("seed list is empty");

  auto require = [&](const std::string& path, const char* key) {
    if (path.empty()) {
      throw std::invalid_argument("command '" + config.command + "' requires key '" + key + "'");
    }
  };
  if (config.command == "train") {
    require(config.train_path, "train");
    require(config.dev_path, "dev");
  } else if (config.command == "eval") {
    require(config.test_path, "test");
    if (config.model_path.empty() && config.predictions_path.empty()) {
      throw std::invalid_argument("command 'eval' requires 'model' or 'predictions'");
    }
    if (!config.model_path.empty() && !config.predictions_path.empty()) {
      throw std::invalid_argument("command 'eval' takes 'model' or 'predictions', not both");
    }
  } else if (config.command == "decode") {
    require(config.model_path, "model");
    require(config.test_path, "test");
    require(config.output_path, "output");
  }
  // bench and gradcheck have no required paths; bench without a model runs
  // the full architecture matrix on synthetic data
}

std::string help_text() {
  std::ostringstream os;
  os << "usage: seqlab COMMAND [--config FILE] [--KEY VALUE]...\n\n"
     << "commands:\n"
     << "  train      fit one model per seed; writes checkpoints and a summary\n"
     << "  eval       score a checkpoint (or predictions file) on a test corpus\n"
     << "  decode     append a predicted-label column to a CoNLL file\n"
     << "  bench      decoding-speed report for a checkpoint or the full matrix\n"
     << "  gradcheck  finite-difference audit of all twelve architectures\n\n"
     << "configuration keys (file form `key=value`; flag form `--key-with-dashes`):\n";
  for (const KeyEntry& entry : key_table()) {
    std::ostringstream flag;
    flag << "--" << to_kebab(entry.key) << ' ' << entry.value_name;
    os << "  " << std::left << std::setw(28) << flag.str() << ' ' << entry.help << '\n';
  }
  os << "\nRelative paths resolve against --data-dir or $SEQLAB_DATA_DIR when set.\n";
  return os.str();
}

}  // namespace seqlab
