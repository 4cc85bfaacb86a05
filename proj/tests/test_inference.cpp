#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "seqlab/gradcheck.hpp"
#include "seqlab/inference.hpp"
#include "testutil.hpp"

using namespace seqlab;
using testutil::bit_identical;

namespace {

CrfParams zero_crf(std::int64_t num_labels) {
  return {Tensor::zeros({num_labels + 2, num_labels + 2}, true), num_labels};
}

// A two-sentence batch (lengths 3 and 1) with gold labels 0/1/2, padded to 3.
Batch tiny_batch() {
  std::vector<Sentence> sentences = {
      {{"a", "b", "c"}, {"X", "Y", "Z"}},
      {{"b"}, {"Y"}},
  };
  Alphabets alphabets = build_alphabets(sentences);
  Rng rng(1);
  return make_batches(sentences, alphabets, 4, false, rng).front();
}

}  // namespace

TEST_CASE("projection: zero weights give zero scores, bias broadcasts") {
  Rng rng(2);
  ProjectionParams proj = make_projection(4, 3, rng);
  CHECK(proj.weight.shape() == Shape{4, 3});
  CHECK(proj.bias.shape() == Shape{3});

  ProjectionParams zero{Tensor::zeros({4, 3}, true),
                        Tensor::from_values({3}, {1.5, -2.0, 0.25}, true)};
  Tensor hidden = Tensor::uniform({5, 4}, -1.0, 1.0, rng);
  Tensor scores = project_emissions(zero, hidden);
  REQUIRE(scores.shape() == Shape{5, 3});
  for (std::int64_t r = 0; r < 5; ++r) {
    CHECK(scores.at(r * 3 + 0) == 1.5);
    CHECK(scores.at(r * 3 + 1) == -2.0);
    CHECK(scores.at(r * 3 + 2) == 0.25);
  }
  std::fill(zero.bias.mutable_values().begin(), zero.bias.mutable_values().end(), 0.0);
  Tensor all_zero = project_emissions(zero, hidden);
  for (double v : all_zero.values()) CHECK(v == 0.0);

  Tensor leaf = Tensor::uniform({2, 4}, -1.0, 1.0, rng, true);
  auto loss = [&]() { return sum(mul(project_emissions(proj, leaf), project_emissions(proj, leaf))); };
  auto report = check_gradients(loss, {{"w", proj.weight}, {"b", proj.bias}, {"h", leaf}});
  INFO(report.describe());
  CHECK(report.passed(1e-4));

  CHECK_THROWS_AS(project_emissions(proj, Tensor::zeros({2, 5})), std::invalid_argument);
}

TEST_CASE("make_crf pins forbidden transitions and randomizes the rest") {
  Rng rng(3);
  CrfParams crf = make_crf(4, rng);
  REQUIRE(crf.transition.shape() == Shape{6, 6});
  CHECK(crf.start_index() == 4);
  CHECK(crf.stop_index() == 5);
  const double bound = std::sqrt(3.0 / 6.0);
  for (std::int64_t a = 0; a < 6; ++a) {
    for (std::int64_t b = 0; b < 6; ++b) {
      const double v = crf.transition.at(a * 6 + b);
      if (b == crf.start_index() || a == crf.stop_index()) {
        CHECK(v == kForbiddenTransition);
      } else {
        CHECK(std::abs(v) <= bound);
      }
    }
  }
  // in-place updates drift the pinned entries; apply_constraints restores them
  crf.transition.mutable_values()[4] = 7.0;  // (0, START)
  crf.apply_constraints();
  CHECK(crf.transition.at(4) == kForbiddenTransition);
  CHECK_THROWS_AS(make_crf(0, rng), std::invalid_argument);
}

TEST_CASE("softmax_nll: uniform case, saturation, and per-sentence additivity") {
  using Labels = std::vector<std::int64_t>;
  Tensor uniform = Tensor::zeros({1, 4});
  CHECK(softmax_nll(uniform, Labels{2}).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor confident = Tensor::from_values({1, 3}, {0.0, 50.0, 0.0});
  CHECK(softmax_nll(confident, Labels{1}).item() < 1e-20);
  CHECK(softmax_nll(confident, Labels{0}).item() == doctest::Approx(50.0).epsilon(1e-9));

  CHECK_THROWS_AS(softmax_nll(uniform, Labels{4}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_nll(uniform, Labels{0, 1}), std::invalid_argument);

  Batch batch = tiny_batch();
  Rng rng(4);
  Tensor emissions = Tensor::uniform({batch.size * batch.max_len, 3}, -2.0, 2.0, rng);
  const double batched = softmax_nll(emissions, batch).item();
  double by_sentence = 0.0;
  for (std::int64_t b = 0; b < batch.size; ++b) {
    const std::int64_t len = batch.word_lengths[static_cast<std::size_t>(b)];
    std::vector<std::int64_t> gold;
    for (std::int64_t t = 0; t < len; ++t) {
      gold.push_back(batch.label_ids[static_cast<std::size_t>(b * batch.max_len + t)]);
    }
    by_sentence += softmax_nll(select_rows(emissions, [&] {
                                 std::vector<std::int64_t> flats;
                                 for (std::int64_t t = 0; t < len; ++t)
                                   flats.push_back(b * batch.max_len + t);
                                 return flats;
                               }()),
                               gold)
                       .item();
  }
  CHECK(std::abs(batched - by_sentence) <= 1e-9);
}

TEST_CASE("softmax_decode: tie rule, one-hot recovery, shift invariance") {
  Batch batch = tiny_batch();
  Tensor zero = Tensor::zeros({batch.size * batch.max_len, 3});
  auto decoded = softmax_decode(zero, batch);
  REQUIRE(decoded.size() == 2);
  CHECK(decoded[0] == std::vector<std::int64_t>{0, 0, 0});
  CHECK(decoded[1] == std::vector<std::int64_t>{0});

  // one-hot rows encode the gold sequence; argmax recovers it
  std::vector<double> hot(static_cast<std::size_t>(batch.size * batch.max_len * 3), 0.0);
  for (std::int64_t b = 0; b < batch.size; ++b) {
    for (std::int64_t t = 0; t < batch.word_lengths[static_cast<std::size_t>(b)]; ++t) {
      const std::int64_t flat = b * batch.max_len + t;
      hot[static_cast<std::size_t>(flat * 3 + batch.label_ids[static_cast<std::size_t>(flat)])] =
          1.0;
    }
  }
  Tensor one_hot = Tensor::from_values({batch.size * batch.max_len, 3}, hot);
  decoded = softmax_decode(one_hot, batch);
  CHECK(decoded[0] == std::vector<std::int64_t>{
                          batch.label_ids[0], batch.label_ids[1], batch.label_ids[2]});

  // adding a per-row constant never changes the argmax
  std::vector<double> shifted = hot;
  for (std::int64_t r = 0; r < batch.size * batch.max_len; ++r) {
    for (int l = 0; l < 3; ++l) shifted[static_cast<std::size_t>(r * 3 + l)] += 10.0 * (r + 1);
  }
  CHECK(softmax_decode(Tensor::from_values({batch.size * batch.max_len, 3}, shifted), batch) ==
        decoded);
}

TEST_CASE("crf_score_sequence: zero params, T=1 closed form, re-summation") {
  CrfParams zero = zero_crf(3);
  Tensor emissions = Tensor::zeros({4, 3});
  CHECK(crf_score_sequence(emissions, zero, {0, 2, 1, 1}).item() == 0.0);

  Rng rng(5);
  CrfParams crf = make_crf(3, rng);
  Tensor single = Tensor::uniform({1, 3}, -1.0, 1.0, rng);
  for (std::int64_t y = 0; y < 3; ++y) {
    const double expected = single.at(y) + crf.transition.at(crf.start_index() * 5 + y) +
                            crf.transition.at(y * 5 + crf.stop_index());
    CHECK(crf_score_sequence(single, crf, {y}).item() ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  Tensor em = Tensor::uniform({4, 3}, -2.0, 2.0, rng);
  const std::vector<std::int64_t> path = {2, 0, 0, 1};
  double manual = crf.transition.at(crf.start_index() * 5 + path[0]);
  for (std::int64_t t = 0; t < 4; ++t) {
    manual += em.at(t * 3 + path[static_cast<std::size_t>(t)]);
    if (t > 0) {
      manual += crf.transition.at(path[static_cast<std::size_t>(t - 1)] * 5 +
                                  path[static_cast<std::size_t>(t)]);
    }
  }
  manual += crf.transition.at(path[3] * 5 + crf.stop_index());
  CHECK(crf_score_sequence(em, crf, path).item() == doctest::Approx(manual).epsilon(1e-12));

  CHECK_THROWS_AS(crf_score_sequence(em, crf, {2, 0, 0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(crf_score_sequence(em, crf, {2, 0}), std::invalid_argument);
}

TEST_CASE("crf_log_partition: uniform closed forms") {
  CrfParams zero2 = zero_crf(2);
  Tensor em22 = Tensor::zeros({2, 2});
  CHECK(crf_log_partition(em22, zero2).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  for (std::int64_t L : {2, 3, 4}) {
    CrfParams zero = zero_crf(L);
    for (std::int64_t T : {1, 2, 3, 5}) {
      Tensor em = Tensor::zeros({T, L});
      CHECK(crf_log_partition(em, zero).item() ==
            doctest::Approx(static_cast<double>(T) * std::log(static_cast<double>(L)))
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("brute force: single-token scan, path count, zero-instance parity") {
  Rng rng(6);
  CrfParams crf = make_crf(3, rng);
  Tensor single = Tensor::uniform({1, 3}, -1.0, 1.0, rng);
  BruteForceResult best = brute_force_best_path(single, crf.transition);
  CHECK(best.paths == 3);
  double top = -1e300;
  std::int64_t top_y = 0;
  for (std::int64_t y = 0; y < 3; ++y) {
    const double s = crf_score_sequence(single, crf, {y}).item();
    if (s > top) {
      top = s;
      top_y = y;
    }
  }
  CHECK(best.labels == std::vector<std::int64_t>{top_y});
  CHECK(best.score == doctest::Approx(top).epsilon(1e-12));

  Tensor em33 = Tensor::zeros({3, 3});
  CrfParams zero = zero_crf(3);
  BruteForceResult zero_best = brute_force_best_path(em33, zero.transition);
  CHECK(zero_best.paths == 27);
  CHECK(zero_best.ties == 27);
  CHECK(std::abs(brute_force_log_partition(em33, zero.transition) -
                 crf_log_partition(em33, zero).item()) <= 1e-12);

  CHECK_THROWS_AS(brute_force_log_partition(Tensor::zeros({25, 8}), zero_crf(8).transition),
                  std::invalid_argument);
}

TEST_CASE("forward algorithm and Viterbi agree with enumeration on random instances") {
  Rng rng(7);
  int unique_paths_checked = 0;
  for (std::int64_t L = 2; L <= 4; ++L) {
    for (std::int64_t T = 1; T <= 4; ++T) {
      for (int rep = 0; rep < 10; ++rep) {
        CrfParams crf = make_crf(L, rng);
        Tensor em = Tensor::uniform({T, L}, -2.0, 2.0, rng);
        const double log_z = crf_log_partition(em, crf).item();
        CHECK(std::abs(log_z - brute_force_log_partition(em, crf.transition)) <= 1e-8);

        ViterbiResult vit = viterbi_decode(em, crf);
        BruteForceResult best = brute_force_best_path(em, crf.transition);
        CHECK(std::abs(vit.score - best.score) <= 1e-10);
        if (best.ties == 1) {
          CHECK(vit.labels == best.labels);
          ++unique_paths_checked;
        }
        // the reported score is the score of the reported path
        CHECK(std::abs(vit.score - crf_score_sequence(em, crf, vit.labels).item()) <= 1e-10);
        // total probability mass over all paths is 1
        long double mass = 0.0L;
        std::vector<std::int64_t> labels(static_cast<std::size_t>(T), 0);
        bool more = true;
        while (more) {
          mass += std::exp(static_cast<long double>(
              crf_score_sequence(em, crf, labels).item() - log_z));
          more = false;
          for (std::int64_t t = T - 1; t >= 0; --t) {
            if (++labels[static_cast<std::size_t>(t)] < L) {
              more = true;
              break;
            }
            labels[static_cast<std::size_t>(t)] = 0;
          }
        }
        CHECK(std::abs(static_cast<double>(mass) - 1.0) <= 1e-8);
      }
    }
  }
  CHECK(unique_paths_checked > 100);  // random real-valued scores rarely tie
}

TEST_CASE("viterbi: zero transitions reduce to per-token argmax") {
  Batch batch = tiny_batch();
  Rng rng(8);
  Tensor emissions = Tensor::uniform({batch.size * batch.max_len, 3}, -2.0, 2.0, rng);
  CrfParams zero = zero_crf(3);
  CHECK(crf_decode(emissions, zero, batch) == softmax_decode(emissions, batch));
}

TEST_CASE("viterbi: forbidding label changes forces the best constant path") {
  const std::int64_t L = 3, T = 4;
  Rng rng(9);
  Tensor em = Tensor::uniform({T, L}, -2.0, 2.0, rng);
  CrfParams crf = zero_crf(L);
  std::vector<double>& tv = crf.transition.mutable_values();
  for (std::int64_t a = 0; a < L; ++a) {
    for (std::int64_t b = 0; b < L; ++b) {
      if (a != b) tv[static_cast<std::size_t>(a * (L + 2) + b)] = -1e6;
    }
  }
  double best_total = -1e300;
  std::int64_t best_label = 0;
  for (std::int64_t y = 0; y < L; ++y) {
    double total = 0.0;
    for (std::int64_t t = 0; t < T; ++t) total += em.at(t * L + y);
    if (total > best_total) {
      best_total = total;
      best_label = y;
    }
  }
  ViterbiResult vit = viterbi_decode(em, crf);
  CHECK(vit.labels == std::vector<std::int64_t>(static_cast<std::size_t>(T), best_label));
  CHECK(vit.score == doctest::Approx(best_total).epsilon(1e-9));
}

TEST_CASE("crf_nll: uniform loss, saturation, and non-negativity") {
  std::vector<Sentence> sentences = {{{"a", "b"}, {"P", "Q"}}};
  Alphabets alphabets = build_alphabets(sentences);
  Rng rng(10);
  Batch batch = make_batches(sentences, alphabets, 2, false, rng).front();

  CrfParams zero = zero_crf(2);
  Tensor em = Tensor::zeros({2, 2});
  CHECK(crf_nll(em, zero, batch).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // boosting every gold transition by +50 drives the loss to zero
  CrfParams boosted = zero_crf(2);
  std::vector<double>& tv = boosted.transition.mutable_values();
  const std::int64_t w = 4;
  tv[static_cast<std::size_t>(boosted.start_index() * w + 0)] += 50.0;  // START -> P
  tv[static_cast<std::size_t>(0 * w + 1)] += 50.0;                      // P -> Q
  tv[static_cast<std::size_t>(1 * w + boosted.stop_index())] += 50.0;   // Q -> STOP
  CHECK(crf_nll(em, boosted, batch).item() < 1e-10);

  Rng rng2(11);
  for (int rep = 0; rep < 20; ++rep) {
    CrfParams crf = make_crf(2, rng2);
    Tensor re = Tensor::uniform({2, 2}, -3.0, 3.0, rng2);
    CHECK(crf_nll(re, crf, batch).item() >= -1e-9);
  }
}

TEST_CASE("crf_nll gradients match finite differences") {
  Batch batch = tiny_batch();
  Rng rng(12);
  CrfParams crf = make_crf(3, rng);
  Tensor emissions = Tensor::uniform({batch.size * batch.max_len, 3}, -1.0, 1.0, rng, true);
  auto loss = [&]() { return crf_nll(emissions, crf, batch); };
  auto report = check_gradients(loss, {{"emissions", emissions}, {"transition", crf.transition}});
  INFO(report.describe());
  CHECK(report.passed(1e-4));

  auto soft_loss = [&]() { return softmax_nll(emissions, batch); };
  auto soft_report = check_gradients(soft_loss, {{"emissions", emissions}});
  INFO(soft_report.describe());
  CHECK(soft_report.passed(1e-4));
}

TEST_CASE("padded positions affect neither losses nor gradients") {
  Batch batch = tiny_batch();  // sentence 1 has two padded slots
  Rng rng(13);
  std::vector<double> base =
      Tensor::uniform({batch.size * batch.max_len, 3}, -1.0, 1.0, rng).values();
  std::vector<double> poked = base;
  for (std::int64_t t = batch.word_lengths[1]; t < batch.max_len; ++t) {
    for (int l = 0; l < 3; ++l) {
      poked[static_cast<std::size_t>((batch.max_len + t) * 3 + l)] += 100.0;
    }
  }
  Tensor em_a = Tensor::from_values({batch.size * batch.max_len, 3}, base, true);
  Tensor em_b = Tensor::from_values({batch.size * batch.max_len, 3}, poked, true);
  CrfParams crf = make_crf(3, rng);

  for (int variant = 0; variant < 2; ++variant) {
    Tensor loss_a = variant == 0 ? softmax_nll(em_a, batch) : crf_nll(em_a, crf, batch);
    Tensor loss_b = variant == 0 ? softmax_nll(em_b, batch) : crf_nll(em_b, crf, batch);
    CHECK(bit_identical(loss_a.values(), loss_b.values()));
    em_a.zero_grad();
    em_b.zero_grad();
    loss_a.backward();
    loss_b.backward();
    CHECK(bit_identical(em_a.grad(), em_b.grad()));
    for (std::int64_t t = batch.word_lengths[1]; t < batch.max_len; ++t) {
      for (int l = 0; l < 3; ++l) {
        CHECK(em_a.grad()[static_cast<std::size_t>((batch.max_len + t) * 3 + l)] == 0.0);
      }
    }
  }
  CHECK(softmax_decode(em_a, batch) == softmax_decode(em_b, batch));
  CHECK(crf_decode(em_a, crf, batch) == crf_decode(em_b, crf, batch));
}

TEST_CASE("inference mode parsing round-trips") {
  CHECK(parse_inference_mode("softmax") == InferenceMode::softmax);
  CHECK(parse_inference_mode("crf") == InferenceMode::crf);
  CHECK_THROWS_AS(parse_inference_mode("mrf"), std::invalid_argument);
  CHECK(std::string(to_string(InferenceMode::crf)) == "crf");
  CHECK(std::string(to_string(InferenceMode::softmax)) == "softmax");
}
