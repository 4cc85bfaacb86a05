#include "seqlab/inference.hpp"

#include <cmath>
#include <stdexcept>

#include "seqlab/encoders.hpp"

namespace seqlab {

namespace {

void check_emissions(const Tensor& emissions, std::int64_t num_labels, const char* who) {
  if (!emissions.defined() || emissions.ndim() != 2) {
    throw std::invalid_argument(std::string(who) + ": emissions must be a [T, L] tensor");
  }
  if (emissions.dim(1) != num_labels) {
    throw std::invalid_argument(std::string(who) + ": emissions have " +
                                std::to_string(emissions.dim(1)) + " labels, CRF expects " +
                                std::to_string(num_labels));
  }
  if (emissions.dim(0) < 1) {
    throw std::invalid_argument(std::string(who) + ": need at least one token");
  }
}

void check_labels(const std::vector<std::int64_t>& labels, std::int64_t count,
                  std::int64_t num_labels, const char* who) {
  if (static_cast<std::int64_t>(labels.size()) != count) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(count) + " tokens");
  }
  for (std::int64_t y : labels) {
    if (y < 0 || y >= num_labels) {
      throw std::invalid_argument(std::string(who) + ": label index " + std::to_string(y) +
                                  " outside [0, " + std::to_string(num_labels) + ")");
    }
  }
}

// Flat indices of a sentence's real tokens and their gold labels.
struct SentenceView {
  std::vector<std::int64_t> flats;
  std::vector<std::int64_t> gold;
};

SentenceView sentence_view(const Batch& batch, std::int64_t b) {
  SentenceView view;
  const std::int64_t len = batch.word_lengths[static_cast<std::size_t>(b)];
  view.flats.reserve(static_cast<std::size_t>(len));
  view.gold.reserve(static_cast<std::size_t>(len));
  for (std::int64_t t = 0; t < len; ++t) {
    const std::int64_t flat = b * batch.max_len + t;
    view.flats.push_back(flat);
    view.gold.push_back(batch.label_ids[static_cast<std::size_t>(flat)]);
  }
  return view;
}

std::int64_t argmax_lowest(const double* begin, std::int64_t n) {
  std::int64_t best = 0;
  for (std::int64_t j = 1; j < n; ++j) {
    if (begin[j] > begin[best]) best = j;
  }
  return best;
}

}  // namespace

InferenceMode parse_inference_mode(const std::string& text) {
  if (text == "softmax") return InferenceMode::softmax;
  if (text == "crf") return InferenceMode::crf;
  throw std::invalid_argument("unknown inference mode '" + text + "' (softmax, crf)");
}

const char* to_string(InferenceMode mode) {
  return mode == InferenceMode::softmax ? "softmax" : "crf";
}

ProjectionParams make_projection(std::int64_t hidden, std::int64_t labels, Rng& rng) {
  if (hidden < 1 || labels < 1) {
    throw std::invalid_argument("make_projection: dimensions must be positive");
  }
  return {glorot_uniform(hidden, labels, rng), Tensor::zeros({labels}, true)};
}

Tensor project_emissions(const ProjectionParams& params, const Tensor& hidden) {
  if (hidden.ndim() != 2 || hidden.dim(1) != params.weight.dim(0)) {
    throw std::invalid_argument("project_emissions: hidden width " +
                                (hidden.ndim() == 2 ? std::to_string(hidden.dim(1)) : "?") +
                                " does not match projection input " +
                                std::to_string(params.weight.dim(0)));
  }
  return add_row_broadcast(matmul(hidden, params.weight), params.bias);
}

void CrfParams::apply_constraints() {
  const std::int64_t width = num_labels + 2;
  std::vector<double>& tv = transition.mutable_values();
  for (std::int64_t a = 0; a < width; ++a) {
    tv[static_cast<std::size_t>(a * width + start_index())] = kForbiddenTransition;
    tv[static_cast<std::size_t>(stop_index() * width + a)] = kForbiddenTransition;
  }
}

CrfParams make_crf(std::int64_t num_labels, Rng& rng) {
  if (num_labels < 1) {
    throw std::invalid_argument("make_crf: need at least one label");
  }
  const std::int64_t width = num_labels + 2;
  const double bound = std::sqrt(3.0 / static_cast<double>(width));
  CrfParams crf{Tensor::uniform({width, width}, -bound, bound, rng, true), num_labels};
  crf.apply_constraints();
  return crf;
}

Tensor softmax_nll(const Tensor& emissions, const std::vector<std::int64_t>& labels) {
  if (!emissions.defined() || emissions.ndim() != 2) {
    throw std::invalid_argument("softmax_nll: emissions must be a [T, L] tensor");
  }
  const std::int64_t num_labels = emissions.dim(1);
  check_labels(labels, emissions.dim(0), num_labels, "softmax_nll");
  std::vector<std::int64_t> gold_idx(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    gold_idx[t] = static_cast<std::int64_t>(t) * num_labels + labels[t];
  }
  Tensor normalizers = log_sum_exp(emissions, 1);
  return sub(sum(normalizers), sum(gather_elements(emissions, gold_idx)));
}

Tensor crf_score_sequence(const Tensor& emissions, const CrfParams& crf,
                          const std::vector<std::int64_t>& labels) {
  check_emissions(emissions, crf.num_labels, "crf_score_sequence");
  const std::int64_t T = emissions.dim(0);
  check_labels(labels, T, crf.num_labels, "crf_score_sequence");
  const std::int64_t width = crf.num_labels + 2;

  std::vector<std::int64_t> emit_idx(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    emit_idx[static_cast<std::size_t>(t)] = t * crf.num_labels + labels[static_cast<std::size_t>(t)];
  }
  std::vector<std::int64_t> trans_idx(static_cast<std::size_t>(T + 1));
  trans_idx[0] = crf.start_index() * width + labels[0];
  for (std::int64_t t = 1; t < T; ++t) {
    trans_idx[static_cast<std::size_t>(t)] =
        labels[static_cast<std::size_t>(t - 1)] * width + labels[static_cast<std::size_t>(t)];
  }
  trans_idx[static_cast<std::size_t>(T)] =
      labels[static_cast<std::size_t>(T - 1)] * width + crf.stop_index();

  return add(sum(gather_elements(emissions, emit_idx)),
             sum(gather_elements(crf.transition, trans_idx)));
}

Tensor crf_log_partition(const Tensor& emissions, const CrfParams& crf) {
  check_emissions(emissions, crf.num_labels, "crf_log_partition");
  const std::int64_t L = crf.num_labels;
  const std::int64_t T = emissions.dim(0);

  // Lay the real-label block out as (to, from): each recursion step is then a
  // broadcast of the previous alpha over rows followed by a row-wise reduction.
  Tensor to_from = slice_cols(slice_rows(transpose(crf.transition), 0, L), 0, L);
  Tensor from_start = reshape(slice_cols(slice_rows(crf.transition, crf.start_index(), 1), 0, L),
                              {L});
  Tensor to_stop = reshape(slice_rows(slice_cols(crf.transition, crf.stop_index(), 1), 0, L),
                           {L});

  Tensor alpha = add(row(emissions, 0), from_start);
  for (std::int64_t t = 1; t < T; ++t) {
    Tensor lattice = add_row_broadcast(to_from, alpha);  // [to, from]
    alpha = add(log_sum_exp(lattice, 1), row(emissions, t));
  }
  return log_sum_exp(add(alpha, to_stop), 0);
}

ViterbiResult viterbi_decode(const Tensor& emissions, const CrfParams& crf) {
  check_emissions(emissions, crf.num_labels, "viterbi_decode");
  const std::int64_t L = crf.num_labels;
  const std::int64_t T = emissions.dim(0);
  const std::int64_t width = L + 2;
  const std::vector<double>& ev = emissions.values();
  const std::vector<double>& tv = crf.transition.values();

  std::vector<double> delta(static_cast<std::size_t>(L));
  for (std::int64_t j = 0; j < L; ++j) {
    delta[static_cast<std::size_t>(j)] =
        ev[static_cast<std::size_t>(j)] + tv[static_cast<std::size_t>(crf.start_index() * width + j)];
  }

  std::vector<std::int64_t> backptr(static_cast<std::size_t>((T - 1) * L));
  std::vector<double> next(static_cast<std::size_t>(L));
  for (std::int64_t t = 1; t < T; ++t) {
    for (std::int64_t j = 0; j < L; ++j) {
      std::int64_t best_i = 0;
      double best = delta[0] + tv[static_cast<std::size_t>(j)];
      for (std::int64_t i = 1; i < L; ++i) {
        const double cand = delta[static_cast<std::size_t>(i)] +
                            tv[static_cast<std::size_t>(i * width + j)];
        if (cand > best) {  // strict: ties keep the lowest predecessor
          best = cand;
          best_i = i;
        }
      }
      next[static_cast<std::size_t>(j)] = best + ev[static_cast<std::size_t>(t * L + j)];
      backptr[static_cast<std::size_t>((t - 1) * L + j)] = best_i;
    }
    delta = next;
  }

  for (std::int64_t j = 0; j < L; ++j) {
    delta[static_cast<std::size_t>(j)] += tv[static_cast<std::size_t>(j * width + crf.stop_index())];
  }
  ViterbiResult result;
  result.labels.assign(static_cast<std::size_t>(T), 0);
  std::int64_t last = argmax_lowest(delta.data(), L);
  result.score = delta[static_cast<std::size_t>(last)];
  result.labels[static_cast<std::size_t>(T - 1)] = last;
  for (std::int64_t t = T - 1; t > 0; --t) {
    last = backptr[static_cast<std::size_t>((t - 1) * L + last)];
    result.labels[static_cast<std::size_t>(t - 1)] = last;
  }
  return result;
}

Tensor softmax_nll(const Tensor& emissions, const Batch& batch) {
  if (!emissions.defined() || emissions.ndim() != 2 ||
      emissions.dim(0) != batch.size * batch.max_len) {
    throw std::invalid_argument("softmax_nll: emissions must cover batch_size * max_len rows");
  }
  const std::int64_t num_labels = emissions.dim(1);
  std::vector<std::int64_t> real_flats;
  std::vector<std::int64_t> gold_idx;
  for (std::int64_t b = 0; b < batch.size; ++b) {
    SentenceView view = sentence_view(batch, b);
    check_labels(view.gold, static_cast<std::int64_t>(view.gold.size()), num_labels,
                 "softmax_nll");
    for (std::size_t t = 0; t < view.flats.size(); ++t) {
      real_flats.push_back(view.flats[t]);
      gold_idx.push_back(view.flats[t] * num_labels + view.gold[t]);
    }
  }
  Tensor normalizers = gather_elements(log_sum_exp(emissions, 1), real_flats);
  return sub(sum(normalizers), sum(gather_elements(emissions, gold_idx)));
}

Tensor crf_nll(const Tensor& emissions, const CrfParams& crf, const Batch& batch) {
  if (!emissions.defined() || emissions.ndim() != 2 ||
      emissions.dim(0) != batch.size * batch.max_len) {
    throw std::invalid_argument("crf_nll: emissions must cover batch_size * max_len rows");
  }
  std::vector<Tensor> losses;
  losses.reserve(static_cast<std::size_t>(batch.size));
  for (std::int64_t b = 0; b < batch.size; ++b) {
    SentenceView view = sentence_view(batch, b);
    Tensor sentence = select_rows(emissions, view.flats);
    losses.push_back(sub(crf_log_partition(sentence, crf),
                         crf_score_sequence(sentence, crf, view.gold)));
  }
  return add_list(losses);
}

std::vector<std::vector<std::int64_t>> softmax_decode(const Tensor& emissions,
                                                      const Batch& batch) {
  if (!emissions.defined() || emissions.ndim() != 2 ||
      emissions.dim(0) != batch.size * batch.max_len) {
    throw std::invalid_argument("softmax_decode: emissions must cover batch_size * max_len rows");
  }
  const std::int64_t num_labels = emissions.dim(1);
  const std::vector<double>& ev = emissions.values();
  std::vector<std::vector<std::int64_t>> decoded(static_cast<std::size_t>(batch.size));
  for (std::int64_t b = 0; b < batch.size; ++b) {
    const std::int64_t len = batch.word_lengths[static_cast<std::size_t>(b)];
    decoded[static_cast<std::size_t>(b)].reserve(static_cast<std::size_t>(len));
    for (std::int64_t t = 0; t < len; ++t) {
      const double* scores = ev.data() + (b * batch.max_len + t) * num_labels;
      decoded[static_cast<std::size_t>(b)].push_back(argmax_lowest(scores, num_labels));
    }
  }
  return decoded;
}

std::vector<std::vector<std::int64_t>> crf_decode(const Tensor& emissions, const CrfParams& crf,
                                                  const Batch& batch) {
  if (!emissions.defined() || emissions.ndim() != 2 ||
      emissions.dim(0) != batch.size * batch.max_len) {
    throw std::invalid_argument("crf_decode: emissions must cover batch_size * max_len rows");
  }
  NoGradGuard no_grad;
  std::vector<std::vector<std::int64_t>> decoded(static_cast<std::size_t>(batch.size));
  for (std::int64_t b = 0; b < batch.size; ++b) {
    SentenceView view = sentence_view(batch, b);
    Tensor sentence = select_rows(emissions, view.flats);
    decoded[static_cast<std::size_t>(b)] = viterbi_decode(sentence, crf).labels;
  }
  return decoded;
}

namespace {

struct BruteForceInstance {
  std::int64_t T = 0;
  std::int64_t L = 0;
  std::int64_t width = 0;
  const std::vector<double>* emissions = nullptr;
  const std::vector<double>* transition = nullptr;
  std::int64_t paths = 0;

  double path_score(const std::vector<std::int64_t>& labels) const {
    const std::vector<double>& ev = *emissions;
    const std::vector<double>& tv = *transition;
    double score = tv[static_cast<std::size_t>(L * width + labels[0])];  // START -> y_0
    for (std::int64_t t = 0; t < T; ++t) {
      score += ev[static_cast<std::size_t>(t * L + labels[static_cast<std::size_t>(t)])];
      if (t > 0) {
        score += tv[static_cast<std::size_t>(labels[static_cast<std::size_t>(t - 1)] * width +
                                             labels[static_cast<std::size_t>(t)])];
      }
    }
    score += tv[static_cast<std::size_t>(labels[static_cast<std::size_t>(T - 1)] * width + L + 1)];
    return score;
  }

  // Lexicographic successor (position 0 most significant); false once exhausted.
  bool advance(std::vector<std::int64_t>& labels) const {
    for (std::int64_t t = T - 1; t >= 0; --t) {
      if (++labels[static_cast<std::size_t>(t)] < L) return true;
      labels[static_cast<std::size_t>(t)] = 0;
    }
    return false;
  }
};

BruteForceInstance brute_force_instance(const Tensor& emissions, const Tensor& transition,
                                        const char* who) {
  if (!emissions.defined() || emissions.ndim() != 2 || emissions.dim(0) < 1) {
    throw std::invalid_argument(std::string(who) + ": emissions must be a [T, L] tensor, T >= 1");
  }
  if (!transition.defined() || transition.ndim() != 2 ||
      transition.dim(0) != emissions.dim(1) + 2 || transition.dim(1) != emissions.dim(1) + 2) {
    throw std::invalid_argument(std::string(who) + ": transition must be [L+2, L+2]");
  }
  BruteForceInstance inst;
  inst.T = emissions.dim(0);
  inst.L = emissions.dim(1);
  inst.width = inst.L + 2;
  inst.emissions = &emissions.values();
  inst.transition = &transition.values();
  inst.paths = 1;
  for (std::int64_t t = 0; t < inst.T; ++t) {
    inst.paths *= inst.L;
    if (inst.paths > 1000000) {
      throw std::invalid_argument(std::string(who) + ": instance too large (L^T > 10^6)");
    }
  }
  return inst;
}

}  // namespace

double brute_force_log_partition(const Tensor& emissions, const Tensor& transition) {
  BruteForceInstance inst = brute_force_instance(emissions, transition,
                                                 "brute_force_log_partition");
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(inst.paths));
  std::vector<std::int64_t> labels(static_cast<std::size_t>(inst.T), 0);
  do {
    scores.push_back(inst.path_score(labels));
  } while (inst.advance(labels));

  double max_score = scores[0];
  for (double s : scores) max_score = std::max(max_score, s);
  long double total = 0.0L;  // extended precision for the 10^6-term sum
  for (double s : scores) total += std::exp(static_cast<long double>(s - max_score));
  return max_score + static_cast<double>(std::log(total));
}

BruteForceResult brute_force_best_path(const Tensor& emissions, const Tensor& transition) {
  BruteForceInstance inst = brute_force_instance(emissions, transition,
                                                 "brute_force_best_path");
  BruteForceResult result;
  result.paths = inst.paths;
  std::vector<std::int64_t> labels(static_cast<std::size_t>(inst.T), 0);
  bool first = true;
  do {
    const double score = inst.path_score(labels);
    if (first || score > result.score) {
      result.score = score;
      result.labels = labels;
      result.ties = 1;
      first = false;
    } else if (score == result.score) {
      ++result.ties;
    }
  } while (inst.advance(labels));
  return result;
}

}  // namespace seqlab
