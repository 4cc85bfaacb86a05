#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>

#include "seqlab/corpus.hpp"
#include "seqlab/rng.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

struct EmbeddingTable {
  Tensor matrix;  // [alphabet size, dim], gradient-tracking
  std::int64_t dim = 0;
  // Hit statistics cover real vocabulary entries (pad and unk excluded).
  std::int64_t exact_hits = 0;
  std::int64_t lowercase_hits = 0;
  std::int64_t random_inits = 0;
  // Every word present in the file, for out-of-vocabulary classification.
  std::unordered_set<std::string> file_vocab;

  std::string describe() const;
};

// Fresh table with rows drawn from U[-sqrt(3/dim), sqrt(3/dim)); the pad row
// (row 0) is zeroed for word/char tables built against an alphabet.
Tensor random_embedding_table(std::int64_t rows, std::int64_t dim, Rng& rng);

// Loads `word v1 ... vd` lines (optional `V d` header auto-detected). Each
// alphabet entry takes its exact-match vector, else its lowercase-match
// vector, else a deterministic random row; the pad row stays zero. Lines
// whose vector width disagrees with `dim`, or with unparsable floats, are
// errors naming the offending line.
EmbeddingTable load_pretrained_embeddings(const std::string& path, const Alphabet& words,
                                          std::int64_t dim, Rng& rng);

// Just the word column of such a file (header auto-skipped), for OOV
// classification when no vectors are needed.
std::unordered_set<std::string> read_embedding_vocab(const std::string& path);

}  // namespace seqlab
