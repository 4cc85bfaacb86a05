#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "seqlab/rng.hpp"

namespace seqlab {

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

// Splits a UTF-8 string into codepoint substrings; rejects malformed bytes
// (stray continuations, overlong forms, surrogates, out-of-range values).
std::vector<std::string> utf8_codepoints(const std::string& text);

// Every ASCII decimal digit becomes '0'; other bytes pass through untouched.
std::string normalize_digits(const std::string& token);
std::vector<Sentence> normalize_corpus(const std::vector<Sentence>& sentences);

// Reads a CoNLL-style column file: one token per line, blank line ends a
// sentence, "-DOCSTART-" document separators dropped. `separator` empty means
// any whitespace run; otherwise columns split on that exact string.
std::vector<Sentence> read_conll(const std::string& path, int token_column, int label_column,
                                 const std::string& separator = "");

// The column split read_conll uses: whitespace runs when `separator` is
// empty, else exact-string splits (which can produce empty columns).
std::vector<std::string> split_columns(const std::string& line, const std::string& separator);

// Ordered string<->index bijection. Word and char alphabets reserve slot 0
// for padding and slot 1 for unknowns; the label alphabet has neither.
class Alphabet {
 public:
  enum class Kind { word, chars, label };

  explicit Alphabet(Kind kind);

  Kind kind() const { return kind_; }
  std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Returns the existing index or inserts at the back; throws once frozen.
  std::int64_t insert(const std::string& entry);
  // Index if present.
  std::optional<std::int64_t> find(const std::string& entry) const;
  // Word/char: unknown strings map to the unk slot. Label: unknown throws.
  std::int64_t lookup(const std::string& entry) const;
  const std::string& entry(std::int64_t index) const;
  const std::vector<std::string>& entries() const { return entries_; }

  std::int64_t pad_index() const;
  std::int64_t unk_index() const;

 private:
  Kind kind_;
  bool frozen_ = false;
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::int64_t> index_;
};

struct Alphabets {
  Alphabet words{Alphabet::Kind::word};
  Alphabet chars{Alphabet::Kind::chars};
  Alphabet labels{Alphabet::Kind::label};
};

// First-occurrence order over the training corpus; all three come back frozen.
// Call with scheme-converted labels so the label alphabet matches training.
Alphabets build_alphabets(const std::vector<Sentence>& train_sentences);

// ---- tag schemes and spans ----

enum class TagScheme { raw, bio, bioes };

TagScheme parse_tag_scheme(const std::string& name);
const char* to_string(TagScheme scheme);

struct Span {
  std::string label;
  std::int64_t start = 0;  // inclusive
  std::int64_t end = 0;    // inclusive

  friend bool operator==(const Span& a, const Span& b) {
    return a.start == b.start && a.end == b.end && a.label == b.label;
  }
  friend bool operator<(const Span& a, const Span& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end < b.end;
    return a.label < b.label;
  }
};

// Extracts maximal typed segments, returned in start order. Strict mode
// rejects sequences that are invalid in `scheme`; lenient mode repairs them
// the way chunk evaluation scripts do (a dangling continuation starts a new
// span), which is what model predictions need.
std::vector<Span> tags_to_spans(const std::vector<std::string>& labels, TagScheme scheme,
                                bool strict = false);

// Writes the label sequence realizing `spans` in `scheme`; spans must be
// sorted, non-overlapping, and inside [0, length).
std::vector<std::string> spans_to_tags(const std::vector<Span>& spans, TagScheme scheme,
                                       std::int64_t length);

// Span-preserving conversion between the two schemes; validates its input
// strictly and is a bijection on valid sequences.
std::vector<std::string> convert_tag_scheme(const std::vector<std::string>& labels,
                                            TagScheme from, TagScheme to);

// ---- batching ----

struct Batch {
  std::int64_t size = 0;       // B, sentences
  std::int64_t max_len = 0;    // T, tokens after padding
  std::int64_t max_chars = 0;  // C, chars per token after padding
  std::vector<std::int64_t> word_ids;      // [B*T]
  std::vector<std::int64_t> char_ids;      // [B*T*C]
  std::vector<std::uint8_t> word_mask;     // [B*T], 1 on real tokens
  std::vector<std::int64_t> word_lengths;  // [B]
  std::vector<std::int64_t> char_lengths;  // [B*T], 0 on padded tokens
  std::vector<std::int64_t> label_ids;     // [B*T]
  std::vector<std::size_t> sentence_index;  // positions in the source corpus

  std::int64_t total_tokens() const;
};

// Groups sentences (optionally shuffled with rng's shuffle stream) into runs
// of at most batch_size and pads to per-batch maxima. With strict_labels an
// unseen label throws; otherwise it maps to id 0 and only matters to callers
// that compare label strings, not ids.
std::vector<Batch> make_batches(const std::vector<Sentence>& sentences,
                                const Alphabets& alphabets, std::int64_t batch_size,
                                bool shuffle, Rng& rng, bool strict_labels = true);

// Recovers the token/label strings of batch row `b` from the alphabets.
Sentence unpad_sentence(const Batch& batch, std::int64_t b, const Alphabets& alphabets);

// ---- out-of-vocabulary classification ----

enum class OovClass { iv, ootv, ooev, oobv };

const char* to_string(OovClass c);

struct OovVocab {
  std::unordered_set<std::string> training;   // exact membership
  std::unordered_set<std::string> embedding;  // exact or lowercase membership

  bool in_training(const std::string& token) const;
  bool in_embedding(const std::string& token) const;
};

OovClass classify_token(const std::string& token, const OovVocab& vocab);
// Precedence over constituent tokens: OOBV, then OOEV, then OOTV, else IV.
OovClass classify_span(const std::vector<std::string>& span_tokens, const OovVocab& vocab);

}  // namespace seqlab
