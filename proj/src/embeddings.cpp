#include "seqlab/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace seqlab {

namespace {

std::string ascii_lower(const std::string& s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

double parse_float(const std::string& field, const std::string& context) {
  std::size_t consumed = 0;
  double v;
  try {
    v = std::stod(field, &consumed);
  } catch (const std::exception&) {
    throw std::runtime_error(context + ": unparsable float " + "'" + field + "'");
  }
  if (consumed != field.size()) {
    throw std::runtime_error(context + ": unparsable float " + "'" + field + "'");
  }
  return v;
}

}  // namespace

std::string EmbeddingTable::describe() const {
  std::ostringstream os;
  os << "pretrained embeddings: " << exact_hits << " exact, " << lowercase_hits
     << " lowercase, " << random_inits << " random (dim " << dim << ")";
  return os.str();
}

Tensor random_embedding_table(std::int64_t rows, std::int64_t dim, Rng& rng) {
  if (rows < 1 || dim < 1) {
    throw std::invalid_argument("random_embedding_table: rows and dim must be positive");
  }
  const double bound = std::sqrt(3.0 / static_cast<double>(dim));
  Tensor table = Tensor::uniform({rows, dim}, -bound, bound, rng, /*requires_grad=*/true);
  std::fill(table.mutable_values().begin(),
            table.mutable_values().begin() + static_cast<std::ptrdiff_t>(dim), 0.0);
  return table;
}

EmbeddingTable load_pretrained_embeddings(const std::string& path, const Alphabet& words,
                                          std::int64_t dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("load_pretrained_embeddings: dim must be positive");
  if (words.kind() != Alphabet::Kind::word) {
    throw std::invalid_argument("load_pretrained_embeddings: expected a word alphabet");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding file '" + path + "'");

  // Only vectors the vocabulary can reach (directly or via lowercase) are
  // kept; the full key set is retained for OOV classification.
  std::unordered_set<std::string> wanted;
  for (const std::string& entry : words.entries()) {
    wanted.insert(entry);
    wanted.insert(ascii_lower(entry));
  }

  EmbeddingTable table;
  table.dim = dim;
  std::unordered_map<std::string, std::vector<double>> vectors;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string field;
    while (ss >> field) fields.push_back(field);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2 && all_digits(fields[0]) && all_digits(fields[1])) {
      continue;  // `V d` header
    }
    const std::string context = path + ":" + std::to_string(line_no);
    if (static_cast<std::int64_t>(fields.size()) != dim + 1) {
      throw std::runtime_error(context + ": expected " + std::to_string(dim) +
                               " vector components, got " + std::to_string(fields.size() - 1));
    }
    table.file_vocab.insert(fields[0]);
    if (wanted.count(fields[0]) == 0) continue;
    std::vector<double> vec(static_cast<std::size_t>(dim));
    for (std::int64_t j = 0; j < dim; ++j)
      vec[static_cast<std::size_t>(j)] = parse_float(fields[static_cast<std::size_t>(j + 1)], context);
    vectors[fields[0]] = std::move(vec);  // duplicates: last occurrence wins
  }
  if (table.file_vocab.empty()) {
    throw std::runtime_error("no embedding entries found in '" + path + "'");
  }

  const std::int64_t rows = words.size();
  const double bound = std::sqrt(3.0 / static_cast<double>(dim));
  std::vector<double> matrix(static_cast<std::size_t>(rows * dim), 0.0);
  for (std::int64_t i = 0; i < rows; ++i) {
    const std::string& entry = words.entry(i);
    const bool is_real_word = i != words.pad_index() && i != words.unk_index();
    const std::vector<double>* source = nullptr;
    if (is_real_word) {
      auto exact = vectors.find(entry);
      if (exact != vectors.end()) {
        source = &exact->second;
        ++table.exact_hits;
      } else {
        auto lower = vectors.find(ascii_lower(entry));
        if (lower != vectors.end()) {
          source = &lower->second;
          ++table.lowercase_hits;
        }
      }
    }
    double* row = matrix.data() + static_cast<std::size_t>(i * dim);
    if (source != nullptr) {
      std::copy(source->begin(), source->end(), row);
    } else if (i == words.pad_index()) {
      // pad row stays zero
    } else {
      if (is_real_word) ++table.random_inits;
      for (std::int64_t j = 0; j < dim; ++j) row[j] = rng.uniform(-bound, bound);
    }
  }
  table.matrix = Tensor::from_values({rows, dim}, std::move(matrix), /*requires_grad=*/true);
  return table;
}

std::unordered_set<std::string> read_embedding_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding file '" + path + "'");
  std::unordered_set<std::string> vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string field;
    while (ss >> field) fields.push_back(field);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2 && all_digits(fields[0]) && all_digits(fields[1])) {
      continue;  // `V d` header
    }
    vocab.insert(fields[0]);
  }
  if (vocab.empty()) throw std::runtime_error("no embedding entries found in '" + path + "'");
  return vocab;
}

}  // namespace seqlab
