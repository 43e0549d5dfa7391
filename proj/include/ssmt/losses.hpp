#pragma once

// WGAN-GP critic loss, the per-task semi-supervised (K+1)-class loss, the
// importance-weighted multitask sums and the alpha-scaled totals.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssmt/models.hpp"

namespace ssmt::nn {

/// Per-example log probabilities are floored at log(kProbFloor).
inline constexpr double kProbFloor = 1e-12;

struct LossBreakdown {
  double wgan = 0.0;
  std::map<std::string, double> per_task;
  double multitask = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
};

struct LossTerms {
  torch::Tensor total;  // differentiable scalar
  LossBreakdown breakdown;
};

/// x_i = eps_i * real_i + (1 - eps_i) * fake_i with one eps per example.
torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& eps);

using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// lambda * mean_i (|grad_x D(x_i)|_2 - 1)^2, kept differentiable with
/// respect to the critic's parameters.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& interp, double lambda);

/// mean D(fake) - mean D(real) + gradient_penalty(interp).
torch::Tensor critic_loss(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                          const torch::Tensor& interp, double lambda);

struct TaskLoss {
  torch::Tensor labeled;    // weighted mean of -log p(y | x, y < K+1)
  torch::Tensor unlabeled;  // mean of -log(1 - p(K+1 | x))
  torch::Tensor fake;       // mean of -log p(K+1 | G(z))
  torch::Tensor total;
};

/// Logit rows have K+1 entries; the last is the generated-image class.
/// Undefined (or empty) unlabeled / fake tensors drop those terms.
TaskLoss semisup_task_loss(const torch::Tensor& labeled_logits, const torch::Tensor& labels,
                           const torch::Tensor& weights, const torch::Tensor& unlabeled_logits,
                           const torch::Tensor& fake_logits);

/// Conditional log p(y | x, y < K+1) via log-sum-exp over the first K logits.
torch::Tensor conditional_log_prob(const torch::Tensor& logits);
/// log p(K+1 | x) and log(1 - p(K+1 | x)), each floored.
torch::Tensor log_prob_fake(const torch::Tensor& logits);
torch::Tensor log_prob_real(const torch::Tensor& logits);

struct TaskWeight {
  std::string task;
  double importance = 1.0;
};

struct LabeledBatch {
  torch::Tensor images;   // NCHW
  torch::Tensor labels;   // int64
  torch::Tensor weights;  // per-example class weights, importance not folded in
};

struct BatchBundle {
  std::map<std::string, LabeledBatch> labeled;
  torch::Tensor unlabeled;  // real images, NCHW
  torch::Tensor fake;       // generated images, NCHW
  torch::Tensor eps;        // (N) in [0, 1], pairs unlabeled[i] with fake[i]
};

struct LossSwitches {
  bool use_unlabeled = true;
  bool use_fake = true;
};

/// Assembles per-task terms into the exact decomposition
/// multitask = sum_t w_t * per_task[t], total = alpha * wgan + multitask.
LossTerms combine(const torch::Tensor& wgan, const std::map<std::string, torch::Tensor>& per_task,
                  const std::vector<TaskWeight>& tasks, double alpha, double lambda);

/// Discriminator objective on one bundle. With alpha = 0 the WGAN term is
/// not computed. `outputs` receives the head logits on the labeled images
/// for accuracy bookkeeping when non-null.
LossTerms discriminator_loss(Discriminator& d, const BatchBundle& bundle, double alpha, double lambda,
                             const std::vector<TaskWeight>& tasks, const LossSwitches& switches = {},
                             std::map<std::string, torch::Tensor>* labeled_logits = nullptr);

/// alpha * (-mean critic) + sum_t w_t * mean log p_t(K+1 | G(z)).
LossTerms generator_loss(const DiscriminatorOutput& fake_outputs, double alpha, const std::vector<TaskWeight>& tasks);

}  // namespace ssmt::nn
