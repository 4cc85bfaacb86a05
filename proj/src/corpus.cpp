#include "seqlab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace seqlab {

namespace {

std::string quoted(const std::string& s) { return "'" + s + "'"; }

// Decodes the codepoint starting at byte `i`, returning its byte length.
// Strict: rejects stray continuations, truncation, overlongs, surrogates,
// and anything beyond U+10FFFF.
std::size_t decode_codepoint(const std::string& text, std::size_t i) {
  const unsigned char c = static_cast<unsigned char>(text[i]);
  std::size_t len;
  std::uint32_t cp;
  if (c < 0x80) {
    return 1;
  } else if ((c & 0xE0) == 0xC0) {
    len = 2;
    cp = c & 0x1Fu;
  } else if ((c & 0xF0) == 0xE0) {
    len = 3;
    cp = c & 0x0Fu;
  } else if ((c & 0xF8) == 0xF0) {
    len = 4;
    cp = c & 0x07u;
  } else {
    throw std::runtime_error("malformed UTF-8 at byte offset " + std::to_string(i));
  }
  if (i + len > text.size()) {
    throw std::runtime_error("truncated UTF-8 sequence at byte offset " + std::to_string(i));
  }
  for (std::size_t k = 1; k < len; ++k) {
    const unsigned char cc = static_cast<unsigned char>(text[i + k]);
    if ((cc & 0xC0) != 0x80) {
      throw std::runtime_error("malformed UTF-8 at byte offset " + std::to_string(i + k));
    }
    cp = (cp << 6) | (cc & 0x3Fu);
  }
  if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
    throw std::runtime_error("overlong UTF-8 encoding at byte offset " + std::to_string(i));
  }
  if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    throw std::runtime_error("UTF-8 codepoint out of range at byte offset " + std::to_string(i));
  }
  return len;
}

void validate_utf8(const std::string& text) {
  std::size_t i = 0;
  while (i < text.size()) i += decode_codepoint(text, i);
}

std::string ascii_lower(const std::string& s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<std::string> split_columns(const std::string& line, const std::string& separator) {
  std::vector<std::string> cols;
  if (separator.empty()) {
    std::istringstream ss(line);
    std::string col;
    while (ss >> col) cols.push_back(col);
    return cols;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(separator, start);
    if (pos == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + separator.size();
  }
  return cols;
}

std::vector<std::string> utf8_codepoints(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = decode_codepoint(text, i);
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string normalize_digits(const std::string& token) {
  std::string out(token);
  for (char& c : out) {
    if (c >= '0' && c <= '9') c = '0';
  }
  return out;
}

std::vector<Sentence> normalize_corpus(const std::vector<Sentence>& sentences) {
  std::vector<Sentence> out(sentences);
  for (Sentence& s : out) {
    for (std::string& t : s.tokens) t = normalize_digits(t);
  }
  return out;
}

std::vector<Sentence> read_conll(const std::string& path, int token_column, int label_column,
                                 const std::string& separator) {
  if (token_column < 0) {
    throw std::invalid_argument("read_conll: token column must be non-negative");
  }
  if (label_column < -1) {
    throw std::invalid_argument("read_conll: label column must be non-negative or -1 for last");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file " + quoted(path));

  std::vector<Sentence> sentences;
  Sentence current;
  std::string line;
  std::size_t line_no = 0;
  auto context = [&](const std::string& msg) { return path + ":" + std::to_string(line_no) + ": " + msg; };
  auto flush = [&]() {
    if (!current.tokens.empty()) {
      sentences.push_back(std::move(current));
      current = Sentence{};
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      validate_utf8(line);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(context(e.what()));
    }
    std::vector<std::string> cols = split_columns(line, separator);
    if (cols.empty() || (cols.size() == 1 && cols[0].empty())) {
      flush();
      continue;
    }
    if (cols[0].rfind("-DOCSTART-", 0) == 0) continue;
    const int min_columns = std::max(token_column + 1, label_column == -1 ? 2 : label_column + 1);
    if (static_cast<int>(cols.size()) < min_columns) {
      throw std::runtime_error(context("expected at least " + std::to_string(min_columns) +
                                       " columns, got " + std::to_string(cols.size())));
    }
    const std::string& token = cols[static_cast<std::size_t>(token_column)];
    const std::string& label =
        label_column == -1 ? cols.back() : cols[static_cast<std::size_t>(label_column)];
    if (token.empty() || label.empty()) {
      throw std::runtime_error(context("empty column value"));
    }
    current.tokens.push_back(token);
    current.labels.push_back(label);
  }
  flush();
  if (sentences.empty()) {
    throw std::runtime_error("no sentences found in " + quoted(path));
  }
  return sentences;
}

// ---- Alphabet ----

Alphabet::Alphabet(Kind kind) : kind_(kind) {
  if (kind_ != Kind::label) {
    entries_ = {"<pad>", "<unk>"};
    index_ = {{"<pad>", 0}, {"<unk>", 1}};
  }
}

std::int64_t Alphabet::insert(const std::string& entry) {
  auto it = index_.find(entry);
  if (it != index_.end()) return it->second;
  if (frozen_) {
    throw std::runtime_error("alphabet is frozen; cannot insert " + quoted(entry));
  }
  const std::int64_t idx = size();
  entries_.push_back(entry);
  index_.emplace(entry, idx);
  return idx;
}

std::optional<std::int64_t> Alphabet::find(const std::string& entry) const {
  auto it = index_.find(entry);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t Alphabet::lookup(const std::string& entry) const {
  auto it = index_.find(entry);
  if (it != index_.end()) return it->second;
  if (kind_ == Kind::label) {
    throw std::runtime_error("unknown label " + quoted(entry));
  }
  return unk_index();
}

const std::string& Alphabet::entry(std::int64_t index) const {
  if (index < 0 || index >= size()) {
    throw std::invalid_argument("alphabet index " + std::to_string(index) + " outside " +
                                std::to_string(size()) + " entries");
  }
  return entries_[static_cast<std::size_t>(index)];
}

std::int64_t Alphabet::pad_index() const {
  if (kind_ == Kind::label) throw std::logic_error("label alphabet has no pad slot");
  return 0;
}

std::int64_t Alphabet::unk_index() const {
  if (kind_ == Kind::label) throw std::logic_error("label alphabet has no unk slot");
  return 1;
}

Alphabets build_alphabets(const std::vector<Sentence>& train_sentences) {
  if (train_sentences.empty()) {
    throw std::invalid_argument("build_alphabets: empty corpus");
  }
  Alphabets out;
  for (const Sentence& s : train_sentences) {
    if (s.tokens.size() != s.labels.size() || s.tokens.empty()) {
      throw std::invalid_argument("build_alphabets: sentence with mismatched or empty columns");
    }
    for (const std::string& token : s.tokens) {
      out.words.insert(token);
      for (const std::string& cp : utf8_codepoints(token)) out.chars.insert(cp);
    }
    for (const std::string& label : s.labels) out.labels.insert(label);
  }
  out.words.freeze();
  out.chars.freeze();
  out.labels.freeze();
  return out;
}

// ---- tag schemes and spans ----

TagScheme parse_tag_scheme(const std::string& name) {
  if (name == "raw") return TagScheme::raw;
  if (name == "bio" || name == "BIO") return TagScheme::bio;
  if (name == "bioes" || name == "BIOES") return TagScheme::bioes;
  throw std::invalid_argument("unknown tag scheme " + quoted(name) +
                              " (expected raw, bio, or bioes)");
}

const char* to_string(TagScheme scheme) {
  switch (scheme) {
    case TagScheme::raw: return "raw";
    case TagScheme::bio: return "bio";
    case TagScheme::bioes: return "bioes";
  }
  return "?";
}

namespace {

struct ParsedTag {
  char prefix;       // 'O', 'B', 'I', 'E', 'S'
  std::string type;  // empty for 'O'
};

ParsedTag parse_tag(const std::string& label, std::size_t position) {
  if (label == "O") return {'O', ""};
  if (label.size() >= 3 && label[1] == '-' &&
      (label[0] == 'B' || label[0] == 'I' || label[0] == 'E' || label[0] == 'S')) {
    return {label[0], label.substr(2)};
  }
  throw std::runtime_error("invalid tag " + quoted(label) + " at position " +
                           std::to_string(position));
}

void validate_strict(const std::vector<ParsedTag>& tags, TagScheme scheme) {
  const std::size_t n = tags.size();
  for (std::size_t i = 0; i < n; ++i) {
    const ParsedTag& t = tags[i];
    auto fail = [&](const std::string& why) {
      throw std::runtime_error("tag sequence invalid under " + std::string(to_string(scheme)) +
                               " at position " + std::to_string(i) + ": " + why);
    };
    if (scheme == TagScheme::bio) {
      if (t.prefix == 'E' || t.prefix == 'S') fail("prefix not part of the scheme");
      if (t.prefix == 'I') {
        const bool continues =
            i > 0 && (tags[i - 1].prefix == 'B' || tags[i - 1].prefix == 'I') &&
            tags[i - 1].type == t.type;
        if (!continues) fail("I- tag does not continue a same-type span");
      }
      continue;
    }
    // BIOES
    const bool next_continues =
        i + 1 < n && (tags[i + 1].prefix == 'I' || tags[i + 1].prefix == 'E') &&
        tags[i + 1].type == t.type;
    const bool prev_opens =
        i > 0 && (tags[i - 1].prefix == 'B' || tags[i - 1].prefix == 'I') &&
        tags[i - 1].type == t.type;
    if (t.prefix == 'B' && !next_continues) fail("B- tag is never closed by E-");
    if (t.prefix == 'I' && !prev_opens) fail("I- tag does not continue a same-type span");
    if (t.prefix == 'I' && !next_continues) fail("I- tag is never closed by E-");
    if (t.prefix == 'E' && !prev_opens) fail("E- tag closes nothing");
  }
}

}  // namespace

std::vector<Span> tags_to_spans(const std::vector<std::string>& labels, TagScheme scheme,
                                bool strict) {
  if (scheme == TagScheme::raw) {
    throw std::invalid_argument("tags_to_spans: raw scheme has no span structure");
  }
  std::vector<ParsedTag> tags;
  tags.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) tags.push_back(parse_tag(labels[i], i));
  if (strict) validate_strict(tags, scheme);

  std::vector<Span> spans;
  std::string open_type;
  std::int64_t open_start = -1;
  auto close = [&](std::int64_t end) {
    if (open_start >= 0) {
      spans.push_back({open_type, open_start, end});
      open_start = -1;
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const ParsedTag& t = tags[i];
    const std::int64_t pos = static_cast<std::int64_t>(i);
    switch (t.prefix) {
      case 'O':
        close(pos - 1);
        break;
      case 'B':
        close(pos - 1);
        open_type = t.type;
        open_start = pos;
        break;
      case 'S':
        close(pos - 1);
        spans.push_back({t.type, pos, pos});
        break;
      case 'I':
        if (open_start >= 0 && open_type == t.type) break;  // continue the span
        close(pos - 1);
        open_type = t.type;  // repair: dangling continuation starts a span
        open_start = pos;
        break;
      case 'E':
        if (open_start >= 0 && open_type == t.type) {
          close(pos);
        } else {
          close(pos - 1);
          spans.push_back({t.type, pos, pos});
        }
        break;
    }
  }
  close(static_cast<std::int64_t>(tags.size()) - 1);
  return spans;
}

std::vector<std::string> spans_to_tags(const std::vector<Span>& spans, TagScheme scheme,
                                       std::int64_t length) {
  if (scheme == TagScheme::raw) {
    throw std::invalid_argument("spans_to_tags: raw scheme has no span structure");
  }
  std::vector<std::string> out(static_cast<std::size_t>(length), "O");
  std::int64_t previous_end = -1;
  for (const Span& span : spans) {
    if (span.start < 0 || span.end < span.start || span.end >= length) {
      throw std::invalid_argument("spans_to_tags: span outside [0, " + std::to_string(length) +
                                  ")");
    }
    if (span.start <= previous_end) {
      throw std::invalid_argument("spans_to_tags: spans overlap or are unsorted");
    }
    previous_end = span.end;
    if (scheme == TagScheme::bio) {
      out[static_cast<std::size_t>(span.start)] = "B-" + span.label;
      for (std::int64_t i = span.start + 1; i <= span.end; ++i)
        out[static_cast<std::size_t>(i)] = "I-" + span.label;
    } else if (span.start == span.end) {
      out[static_cast<std::size_t>(span.start)] = "S-" + span.label;
    } else {
      out[static_cast<std::size_t>(span.start)] = "B-" + span.label;
      for (std::int64_t i = span.start + 1; i < span.end; ++i)
        out[static_cast<std::size_t>(i)] = "I-" + span.label;
      out[static_cast<std::size_t>(span.end)] = "E-" + span.label;
    }
  }
  return out;
}

std::vector<std::string> convert_tag_scheme(const std::vector<std::string>& labels,
                                            TagScheme from, TagScheme to) {
  if (from == TagScheme::raw || to == TagScheme::raw) {
    throw std::invalid_argument("convert_tag_scheme: raw scheme cannot be converted");
  }
  const std::vector<Span> spans = tags_to_spans(labels, from, /*strict=*/true);
  return spans_to_tags(spans, to, static_cast<std::int64_t>(labels.size()));
}

// ---- batching ----

std::int64_t Batch::total_tokens() const {
  return std::accumulate(word_lengths.begin(), word_lengths.end(), std::int64_t{0});
}

std::vector<Batch> make_batches(const std::vector<Sentence>& sentences,
                                const Alphabets& alphabets, std::int64_t batch_size,
                                bool shuffle, Rng& rng, bool strict_labels) {
  if (batch_size < 1) {
    throw std::invalid_argument("make_batches: batch size " + std::to_string(batch_size) +
                                " must be at least 1");
  }
  if (!alphabets.words.frozen() || !alphabets.chars.frozen() || !alphabets.labels.frozen()) {
    throw std::invalid_argument("make_batches: alphabets must be frozen");
  }
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    Batch batch;
    batch.size = static_cast<std::int64_t>(end - begin);
    std::vector<std::vector<std::vector<std::string>>> sentence_chars;
    for (std::size_t k = begin; k < end; ++k) {
      const Sentence& s = sentences[order[k]];
      batch.sentence_index.push_back(order[k]);
      batch.word_lengths.push_back(static_cast<std::int64_t>(s.tokens.size()));
      batch.max_len = std::max(batch.max_len, batch.word_lengths.back());
      std::vector<std::vector<std::string>> chars;
      for (const std::string& token : s.tokens) {
        chars.push_back(utf8_codepoints(token));
        batch.max_chars =
            std::max(batch.max_chars, static_cast<std::int64_t>(chars.back().size()));
      }
      sentence_chars.push_back(std::move(chars));
    }

    const std::int64_t word_pad = alphabets.words.pad_index();
    const std::int64_t char_pad = alphabets.chars.pad_index();
    batch.word_ids.assign(static_cast<std::size_t>(batch.size * batch.max_len), word_pad);
    batch.char_ids.assign(static_cast<std::size_t>(batch.size * batch.max_len * batch.max_chars),
                          char_pad);
    batch.word_mask.assign(static_cast<std::size_t>(batch.size * batch.max_len), 0);
    batch.char_lengths.assign(static_cast<std::size_t>(batch.size * batch.max_len), 0);
    batch.label_ids.assign(static_cast<std::size_t>(batch.size * batch.max_len), 0);

    for (std::int64_t b = 0; b < batch.size; ++b) {
      const Sentence& s = sentences[batch.sentence_index[static_cast<std::size_t>(b)]];
      for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        const std::size_t flat = static_cast<std::size_t>(b * batch.max_len) + t;
        batch.word_ids[flat] = alphabets.words.lookup(s.tokens[t]);
        batch.word_mask[flat] = 1;
        if (strict_labels) {
          batch.label_ids[flat] = alphabets.labels.lookup(s.labels[t]);
        } else {
          batch.label_ids[flat] = alphabets.labels.find(s.labels[t]).value_or(0);
        }
        const std::vector<std::string>& chars =
            sentence_chars[static_cast<std::size_t>(b)][t];
        batch.char_lengths[flat] = static_cast<std::int64_t>(chars.size());
        for (std::size_t c = 0; c < chars.size(); ++c) {
          batch.char_ids[flat * static_cast<std::size_t>(batch.max_chars) + c] =
              alphabets.chars.lookup(chars[c]);
        }
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

Sentence unpad_sentence(const Batch& batch, std::int64_t b, const Alphabets& alphabets) {
  if (b < 0 || b >= batch.size) {
    throw std::invalid_argument("unpad_sentence: row " + std::to_string(b) + " outside batch of " +
                                std::to_string(batch.size));
  }
  Sentence out;
  const std::int64_t len = batch.word_lengths[static_cast<std::size_t>(b)];
  for (std::int64_t t = 0; t < len; ++t) {
    const std::size_t flat = static_cast<std::size_t>(b * batch.max_len + t);
    out.tokens.push_back(alphabets.words.entry(batch.word_ids[flat]));
    out.labels.push_back(alphabets.labels.entry(batch.label_ids[flat]));
  }
  return out;
}

// ---- out-of-vocabulary classification ----

const char* to_string(OovClass c) {
  switch (c) {
    case OovClass::iv: return "IV";
    case OovClass::ootv: return "OOTV";
    case OovClass::ooev: return "OOEV";
    case OovClass::oobv: return "OOBV";
  }
  return "?";
}

bool OovVocab::in_training(const std::string& token) const {
  return training.count(token) > 0;
}

bool OovVocab::in_embedding(const std::string& token) const {
  return embedding.count(token) > 0 || embedding.count(ascii_lower(token)) > 0;
}

OovClass classify_token(const std::string& token, const OovVocab& vocab) {
  const bool train = vocab.in_training(token);
  const bool emb = vocab.in_embedding(token);
  if (train && emb) return OovClass::iv;
  if (emb) return OovClass::ootv;
  if (train) return OovClass::ooev;
  return OovClass::oobv;
}

OovClass classify_span(const std::vector<std::string>& span_tokens, const OovVocab& vocab) {
  bool any_ooev = false, any_ootv = false;
  for (const std::string& token : span_tokens) {
    switch (classify_token(token, vocab)) {
      case OovClass::oobv: return OovClass::oobv;
      case OovClass::ooev: any_ooev = true; break;
      case OovClass::ootv: any_ootv = true; break;
      case OovClass::iv: break;
    }
  }
  if (any_ooev) return OovClass::ooev;
  if (any_ootv) return OovClass::ootv;
  return OovClass::iv;
}

}  // namespace seqlab
