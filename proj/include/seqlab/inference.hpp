#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/corpus.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

enum class InferenceMode { softmax, crf };

InferenceMode parse_inference_mode(const std::string& text);
const char* to_string(InferenceMode mode);

// Finite stand-in for -infinity in transition constraints: large enough that
// forbidden paths carry no probability mass, small enough that log_sum_exp
// arithmetic stays NaN-free (a true -inf poisons its gradient).
inline constexpr double kForbiddenTransition = -1.0e4;

// ---- emission projection ----

struct ProjectionParams {
  Tensor weight;  // [hidden, labels]
  Tensor bias;    // [labels]
};

ProjectionParams make_projection(std::int64_t hidden, std::int64_t labels, Rng& rng);

// Affine map of hidden states [N, hidden] to label scores [N, labels].
Tensor project_emissions(const ProjectionParams& params, const Tensor& hidden);

// ---- linear-chain CRF ----

// Transition parameters over L real labels plus synthetic START/STOP tags
// occupying rows/columns L and L+1; transition(a, b) scores the move a -> b.
// START and STOP are never emitted: moves into START and out of STOP are
// pinned at kForbiddenTransition.
struct CrfParams {
  Tensor transition;  // [L+2, L+2]
  std::int64_t num_labels = 0;

  std::int64_t start_index() const { return num_labels; }
  std::int64_t stop_index() const { return num_labels + 1; }
  // Re-stamps the forbidden entries; call after in-place parameter updates.
  void apply_constraints();
};

CrfParams make_crf(std::int64_t num_labels, Rng& rng);

// ---- sentence-level primitives (emissions [T, L] over real tokens only) ----

// Sum over tokens of -log softmax(emissions[t])[labels[t]].
Tensor softmax_nll(const Tensor& emissions, const std::vector<std::int64_t>& labels);

// Path score: emissions along the path plus transitions START -> y_0 -> ... -> STOP.
Tensor crf_score_sequence(const Tensor& emissions, const CrfParams& crf,
                          const std::vector<std::int64_t>& labels);

// log of the sum over all L^T paths of exp(path score), via the forward
// recursion with log_sum_exp.
Tensor crf_log_partition(const Tensor& emissions, const CrfParams& crf);

struct ViterbiResult {
  std::vector<std::int64_t> labels;
  double score = 0.0;
};

// Highest-scoring path; ties break toward the lowest label index at each
// backpointer and at the final tag.
ViterbiResult viterbi_decode(const Tensor& emissions, const CrfParams& crf);

// ---- batch-level losses and decoders (emissions [B*T_max, L] flattened) ----

// Loss summed over real tokens / sentences; padded positions contribute
// exactly zero to both value and gradient.
Tensor softmax_nll(const Tensor& emissions, const Batch& batch);
Tensor crf_nll(const Tensor& emissions, const CrfParams& crf, const Batch& batch);

// Per-token argmax (ties -> lowest index) at real positions.
std::vector<std::vector<std::int64_t>> softmax_decode(const Tensor& emissions,
                                                      const Batch& batch);
// Per-sentence Viterbi over the real tokens.
std::vector<std::vector<std::int64_t>> crf_decode(const Tensor& emissions,
                                                  const CrfParams& crf,
                                                  const Batch& batch);

// ---- exhaustive-enumeration oracles ----
// Both expect the same [L+2, L+2] transition layout as CrfParams and refuse
// instances with more than 10^6 paths.

double brute_force_log_partition(const Tensor& emissions, const Tensor& transition);

struct BruteForceResult {
  std::vector<std::int64_t> labels;  // lexicographically first maximizer
  double score = 0.0;
  std::int64_t ties = 0;   // number of paths attaining the maximum exactly
  std::int64_t paths = 0;  // sequences enumerated (L^T)
};

BruteForceResult brute_force_best_path(const Tensor& emissions, const Tensor& transition);

}  // namespace seqlab
