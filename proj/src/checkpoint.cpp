#include "seqlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace seqlab {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'E', 'Q', 'L', 'A', 'B', 'C', 'K'};

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char byte : data) {
    hash ^= byte;
    hash *= 1099511628211ULL;
  }
  return hash;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& out, double v) { append_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::string take(std::size_t n, const char* what) {
    if (pos_ + n > data_.size()) {
      throw std::runtime_error(path_ + ": truncated checkpoint while reading " + what);
    }
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t take_u32(const char* what) {
    const std::string raw = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(raw[i]);
    return v;
  }

  std::uint64_t take_u64(const char* what) {
    const std::string raw = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(raw[i]);
    return v;
  }

  double take_f64(const char* what) { return std::bit_cast<double>(take_u64(what)); }

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& data() const { return data_; }
  std::size_t pos() const { return pos_; }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

json config_to_json(const ModelConfig& config) {
  json j;
  j["char_rep"] = to_string(config.char_rep);
  j["word_rep"] = to_string(config.word_rep);
  j["inference"] = to_string(config.inference);
  j["tag_scheme"] = to_string(config.tag_scheme);
  j["char_emb"] = config.char_emb;
  j["word_emb"] = config.word_emb;
  j["char_hidden"] = config.char_hidden;
  j["word_hidden"] = config.word_hidden;
  j["word_cnn_layers"] = config.word_cnn_layers;
  j["batch_size"] = config.batch_size;
  j["dropout"] = config.dropout;
  j["l2"] = config.l2;
  j["lr_decay"] = config.lr_decay;
  j["lr"] = config.lr.has_value() ? json(*config.lr) : json(nullptr);
  j["epochs"] = config.epochs.has_value() ? json(*config.epochs) : json(nullptr);
  j["momentum"] = config.momentum;
  j["clip_norm"] = config.clip_norm;
  j["optimizer"] = to_string(config.optimizer);
  j["seed"] = config.seed;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig config;
  config.char_rep = parse_char_mode(j.at("char_rep").get<std::string>());
  config.word_rep = parse_word_mode(j.at("word_rep").get<std::string>());
  config.inference = parse_inference_mode(j.at("inference").get<std::string>());
  config.tag_scheme = parse_tag_scheme(j.at("tag_scheme").get<std::string>());
  config.char_emb = j.at("char_emb").get<std::int64_t>();
  config.word_emb = j.at("word_emb").get<std::int64_t>();
  config.char_hidden = j.at("char_hidden").get<std::int64_t>();
  config.word_hidden = j.at("word_hidden").get<std::int64_t>();
  config.word_cnn_layers = j.at("word_cnn_layers").get<int>();
  config.batch_size = j.at("batch_size").get<std::int64_t>();
  config.dropout = j.at("dropout").get<double>();
  config.l2 = j.at("l2").get<double>();
  config.lr_decay = j.at("lr_decay").get<double>();
  if (!j.at("lr").is_null()) config.lr = j.at("lr").get<double>();
  if (!j.at("epochs").is_null()) config.epochs = j.at("epochs").get<int>();
  config.momentum = j.at("momentum").get<double>();
  config.clip_norm = j.at("clip_norm").get<double>();
  config.optimizer = parse_optimizer_kind(j.at("optimizer").get<std::string>());
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

Alphabet alphabet_from_entries(Alphabet::Kind kind, const json& entries) {
  Alphabet alphabet(kind);
  for (const json& entry : entries) {
    alphabet.insert(entry.get<std::string>());
  }
  alphabet.freeze();
  if (alphabet.size() != static_cast<std::int64_t>(entries.size())) {
    throw std::runtime_error("checkpoint: duplicate alphabet entries");
  }
  return alphabet;
}

json directory_to_json(std::vector<std::pair<std::string, Tensor>>& tensors) {
  json dir = json::array();
  for (auto& [name, tensor] : tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    dir.push_back(entry);
  }
  return dir;
}

}  // namespace

void save_model(Tagger& tagger, const std::string& path) {
  auto params = tagger.named_parameters();
  auto buffers = tagger.named_buffers();

  json meta;
  meta["config"] = config_to_json(tagger.config());
  meta["alphabets"]["words"] = tagger.alphabets().words.entries();
  meta["alphabets"]["chars"] = tagger.alphabets().chars.entries();
  meta["alphabets"]["labels"] = tagger.alphabets().labels.entries();
  meta["parameters"] = directory_to_json(params);
  meta["buffers"] = directory_to_json(buffers);
  const std::string meta_text = meta.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u32(out, kCheckpointVersion);
  append_u64(out, meta_text.size());
  out += meta_text;
  for (auto& [name, tensor] : params) {
    for (double v : tensor.values()) append_f64(out, v);
  }
  for (auto& [name, tensor] : buffers) {
    for (double v : tensor.values()) append_f64(out, v);
  }
  append_u64(out, fnv1a(out));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error(path + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error(path + ": write failed");
}

Tagger load_model(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error(path + ": cannot open checkpoint");
  std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader reader(std::move(data), path);
  const std::string magic = reader.take(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path + ": not a model checkpoint (bad magic)");
  }
  const std::uint32_t version = reader.take_u32("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path + ": checkpoint version " + std::to_string(version) +
                             " is not supported (this build reads version " +
                             std::to_string(kCheckpointVersion) + ")");
  }

  // integrity first: the trailing hash must cover everything before it
  if (reader.data().size() < reader.pos() + 8) {
    throw std::runtime_error(path + ": truncated checkpoint while reading checksum");
  }
  const std::string body = reader.data().substr(0, reader.data().size() - 8);
  Reader tail(reader.data().substr(reader.data().size() - 8), path);
  if (tail.take_u64("checksum") != fnv1a(body)) {
    throw std::runtime_error(path + ": checksum mismatch, checkpoint is corrupted");
  }

  const std::uint64_t meta_size = reader.take_u64("metadata size");
  json meta;
  try {
    meta = json::parse(reader.take(static_cast<std::size_t>(meta_size), "metadata"));
  } catch (const json::parse_error& error) {
    throw std::runtime_error(path + ": unreadable checkpoint metadata: " + error.what());
  }

  ModelConfig config = config_from_json(meta.at("config"));
  Alphabets alphabets;
  alphabets.words = alphabet_from_entries(Alphabet::Kind::word, meta.at("alphabets").at("words"));
  alphabets.chars = alphabet_from_entries(Alphabet::Kind::chars, meta.at("alphabets").at("chars"));
  alphabets.labels =
      alphabet_from_entries(Alphabet::Kind::label, meta.at("alphabets").at("labels"));

  Rng rng(config.seed);
  Tagger tagger(config, alphabets, rng);

  auto restore = [&](const json& directory, std::vector<std::pair<std::string, Tensor>> tensors,
                     const char* what) {
    if (directory.size() != tensors.size()) {
      throw std::runtime_error(path + ": checkpoint lists " + std::to_string(directory.size()) +
                               " " + what + ", architecture has " +
                               std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const json& entry = directory[i];
      auto& [name, tensor] = tensors[i];
      if (entry.at("name").get<std::string>() != name ||
          entry.at("shape").get<Shape>() != tensor.shape()) {
        throw std::runtime_error(path + ": checkpoint entry '" +
                                 entry.at("name").get<std::string>() +
                                 "' does not match architecture tensor '" + name + "'");
      }
      std::vector<double>& values = tensor.mutable_values();
      for (double& v : values) v = reader.take_f64(name.c_str());
    }
  };
  restore(meta.at("parameters"), tagger.named_parameters(), "parameters");
  restore(meta.at("buffers"), tagger.named_buffers(), "buffers");

  if (reader.remaining() != 8) {
    throw std::runtime_error(path + ": checkpoint has trailing bytes beyond the payload");
  }
  return tagger;
}

}  // namespace seqlab
