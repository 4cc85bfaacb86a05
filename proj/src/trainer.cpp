#include "seqlab/trainer.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace seqlab {

double lr_at_epoch(double lr0, double decay, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
  return lr0 / (1.0 + decay * static_cast<double>(epoch));
}

Optimizer::Optimizer(OptimizerKind kind, std::vector<std::pair<std::string, Tensor>> params,
                     double l2, double momentum, OptimizerHyper hyper)
    : kind_(kind), params_(std::move(params)), l2_(l2), momentum_(momentum), hyper_(hyper) {
  const bool needs_a = kind_ != OptimizerKind::sgd || momentum_ > 0.0;
  const bool needs_b = kind_ == OptimizerKind::adadelta || kind_ == OptimizerKind::adam;
  for (const auto& [name, tensor] : params_) {
    slot_a_.emplace_back(needs_a ? tensor.values().size() : 0, 0.0);
    slot_b_.emplace_back(needs_b ? tensor.values().size() : 0, 0.0);
  }
}

void Optimizer::step(double lr) {
  ++steps_;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const std::string& name = params_[p].first;
    Tensor& tensor = params_[p].second;
    std::vector<double>& theta = tensor.mutable_values();
    const std::vector<double>& grad = tensor.mutable_grad();  // zeros when untouched
    std::vector<double>& a = slot_a_[p];
    std::vector<double>& b = slot_b_[p];

    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(grad[i])) {
        throw std::runtime_error("optimizer: non-finite gradient in '" + name + "'");
      }
      const double g = grad[i] + l2_ * theta[i];
      double update = 0.0;
      switch (kind_) {
        case OptimizerKind::sgd:
          if (momentum_ > 0.0) {
            a[i] = momentum_ * a[i] + g;
            update = -lr * a[i];
          } else {
            update = -lr * g;
          }
          break;
        case OptimizerKind::adagrad:
          a[i] += g * g;
          update = -hyper_.adagrad_lr * g / (std::sqrt(a[i]) + hyper_.adagrad_eps);
          break;
        case OptimizerKind::adadelta: {
          a[i] = hyper_.adadelta_rho * a[i] + (1.0 - hyper_.adadelta_rho) * g * g;
          const double delta = -std::sqrt(b[i] + hyper_.adadelta_eps) /
                               std::sqrt(a[i] + hyper_.adadelta_eps) * g;
          b[i] = hyper_.adadelta_rho * b[i] + (1.0 - hyper_.adadelta_rho) * delta * delta;
          update = delta;
          break;
        }
        case OptimizerKind::rmsprop:
          a[i] = hyper_.rmsprop_rho * a[i] + (1.0 - hyper_.rmsprop_rho) * g * g;
          update = -hyper_.rmsprop_lr * g / (std::sqrt(a[i]) + hyper_.rmsprop_eps);
          break;
        case OptimizerKind::adam: {
          a[i] = hyper_.adam_beta1 * a[i] + (1.0 - hyper_.adam_beta1) * g;
          b[i] = hyper_.adam_beta2 * b[i] + (1.0 - hyper_.adam_beta2) * g * g;
          const double m_hat =
              a[i] / (1.0 - std::pow(hyper_.adam_beta1, static_cast<double>(steps_)));
          const double v_hat =
              b[i] / (1.0 - std::pow(hyper_.adam_beta2, static_cast<double>(steps_)));
          update = -hyper_.adam_lr * m_hat / (std::sqrt(v_hat) + hyper_.adam_eps);
          break;
        }
      }
      theta[i] += update;
      if (!std::isfinite(theta[i])) {
        throw std::runtime_error("optimizer: parameter '" + name + "' left the finite range");
      }
    }
  }
  zero_grad();
}

void Optimizer::zero_grad() {
  for (auto& [name, tensor] : params_) tensor.zero_grad();
}

double Optimizer::gradient_norm() const {
  double total = 0.0;
  for (const auto& [name, tensor] : params_) {
    if (!tensor.has_grad()) continue;
    for (double g : tensor.grad()) total += g * g;
  }
  return std::sqrt(total);
}

void Optimizer::clip_gradients(double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = gradient_norm();
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& [name, tensor] : params_) {
    for (double& g : tensor.mutable_grad()) g *= scale;
  }
}

double train_epoch(Tagger& tagger, const std::vector<Batch>& batches, Optimizer& optimizer,
                   double lr, double clip_norm, Rng& dropout_rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    Tensor loss = tagger.loss(batches[i], /*train_mode=*/true, dropout_rng);
    loss.check_finite("training loss of batch " + std::to_string(i));
    loss.backward();
    optimizer.clip_gradients(clip_norm);
    optimizer.step(lr);
    tagger.apply_constraints();
    total += loss.item();
  }
  return total;
}

namespace {

std::vector<std::vector<double>> snapshot(std::vector<std::pair<std::string, Tensor>> tensors) {
  std::vector<std::vector<double>> values;
  values.reserve(tensors.size());
  for (auto& [name, tensor] : tensors) values.push_back(tensor.values());
  return values;
}

void restore(std::vector<std::pair<std::string, Tensor>> tensors,
             const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    tensors[i].second.mutable_values() = values[i];
  }
}

}  // namespace

FitReport fit(Tagger& tagger, const std::vector<Sentence>& train,
              const std::vector<Sentence>& dev, const std::vector<Sentence>& test,
              std::ostream* log) {
  if (train.empty()) throw std::invalid_argument("fit: empty training corpus");
  if (dev.empty()) throw std::invalid_argument("fit: empty development corpus");
  const ModelConfig& config = tagger.config();

  FitReport report;
  report.config_id = config.id();
  Optimizer optimizer(config.optimizer, tagger.named_parameters(), config.l2, config.momentum);
  Rng base(config.seed);
  Rng shuffle_rng = base.stream(Rng::StreamKind::shuffle);
  Rng dropout_rng = base.stream(Rng::StreamKind::dropout);

  std::vector<std::vector<double>> best_params;
  std::vector<std::vector<double>> best_buffers;
  const int epochs = config.effective_epochs();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr_at_epoch(config.effective_lr(), config.lr_decay, epoch);
    const std::vector<Batch> batches =
        make_batches(train, tagger.alphabets(), config.batch_size, /*shuffle=*/true, shuffle_rng);
    const double loss = train_epoch(tagger, batches, optimizer, lr, config.clip_norm,
                                    dropout_rng);
    const double dev_score = corpus_score(tagger, dev, config.batch_size);
    report.history.push_back({epoch, lr, loss, dev_score});
    if (log != nullptr) {
      (*log) << "epoch=" << epoch << " lr=" << lr << " loss=" << loss << " dev=" << dev_score
             << '\n';
    }
    if (report.best_epoch < 0 || dev_score > report.best_dev) {  // first best wins ties
      report.best_epoch = epoch;
      report.best_dev = dev_score;
      best_params = snapshot(tagger.named_parameters());
      best_buffers = snapshot(tagger.named_buffers());
    }
  }

  restore(tagger.named_parameters(), best_params);
  restore(tagger.named_buffers(), best_buffers);
  report.test_score = test.empty() ? 0.0 : corpus_score(tagger, test, config.batch_size);
  if (log != nullptr) {
    (*log) << "best_epoch=" << report.best_epoch << " best_dev=" << report.best_dev
           << " test=" << report.test_score << '\n';
  }
  return report;
}

SeedSummary summarize_scores(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("summarize_scores: no scores");
  SeedSummary summary;
  summary.scores = scores;
  summary.max = scores[0];
  double total = 0.0;
  for (double s : scores) {
    summary.max = std::max(summary.max, s);
    total += s;
  }
  summary.mean = total / static_cast<double>(scores.size());
  if (scores.size() > 1) {
    double squares = 0.0;
    for (double s : scores) squares += (s - summary.mean) * (s - summary.mean);
    summary.stddev = std::sqrt(squares / static_cast<double>(scores.size() - 1));
  }
  return summary;
}

}  // namespace seqlab
