#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "seqlab/eval.hpp"
#include "seqlab/model.hpp"

namespace seqlab {

// Decayed schedule eta_t = lr0 / (1 + decay * t), t starting at 0.
double lr_at_epoch(double lr0, double decay, int epoch);

// Published constants of the alternative optimizers (the comparison exposes
// them through the run config rather than hard-coding tuned values).
struct OptimizerHyper {
  double adagrad_lr = 0.015;
  double adagrad_eps = 1e-10;
  double adadelta_rho = 0.9;
  double adadelta_eps = 1e-6;
  double rmsprop_lr = 0.001;
  double rmsprop_rho = 0.9;
  double rmsprop_eps = 1e-8;
  double adam_lr = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// In-place parameter updates over a fixed tensor list. L2 enters every rule
// as coupled gradient augmentation (g + l2 * theta); gradient buffers are
// zeroed after each step. Any non-finite gradient or parameter aborts the
// step with the offending tensor's name.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<std::pair<std::string, Tensor>> params, double l2,
            double momentum = 0.0, OptimizerHyper hyper = {});

  // `lr` drives SGD (the caller applies the decay schedule); the alternative
  // optimizers run on their own constants from OptimizerHyper.
  void step(double lr);
  void zero_grad();
  // Euclidean norm over all gradient buffers together.
  double gradient_norm() const;
  // Scales all gradients down to `max_norm` when they exceed it; <= 0 is off.
  void clip_gradients(double max_norm);

  OptimizerKind kind() const { return kind_; }

 private:
  OptimizerKind kind_;
  std::vector<std::pair<std::string, Tensor>> params_;
  double l2_;
  double momentum_;
  OptimizerHyper hyper_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<double>> slot_a_;  // velocity / accumulator / first moment
  std::vector<std::vector<double>> slot_b_;  // delta accumulator / second moment
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double dev_score = 0.0;
};

struct FitReport {
  std::string config_id;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_dev = 0.0;
  double test_score = 0.0;
};

// One pass over `batches` in the given order: forward in train mode,
// backward, global-norm clip, optimizer step, constraint re-stamp. Returns
// the summed loss; throws on a non-finite loss, naming the batch.
double train_epoch(Tagger& tagger, const std::vector<Batch>& batches, Optimizer& optimizer,
                   double lr, double clip_norm, Rng& dropout_rng);

// Full protocol: per-epoch reshuffled batches, dev scoring after every epoch,
// best-dev checkpointing (earliest epoch on ties), final restore of the best
// state, and the test score of that state. `log` receives one stable-format
// line per epoch when given.
FitReport fit(Tagger& tagger, const std::vector<Sentence>& train,
              const std::vector<Sentence>& dev, const std::vector<Sentence>& test,
              std::ostream* log = nullptr);

// Max / mean / sample standard deviation over per-seed test scores.
struct SeedSummary {
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> scores;
};

SeedSummary summarize_scores(const std::vector<double>& scores);

}  // namespace seqlab
