#include "ssmt/losses.hpp"

#include <cmath>

#include "ssmt/error.hpp"

namespace ssmt::nn {

namespace {

const double kLogFloor = std::log(kProbFloor);

void check_logits(const torch::Tensor& logits, const char* what) {
  if (logits.dim() != 2 || logits.size(1) < 2) {
    throw Error(Errc::ShapeMismatch, std::string(what) + " logits must be (N, K+1) with K >= 1");
  }
  if (!torch::isfinite(logits).all().item<bool>()) throw Error(Errc::NonFiniteLogit, std::string(what) + " logits");
}

bool present(const torch::Tensor& t) { return t.defined() && t.numel() > 0; }

torch::Tensor zero_like_scalar(const torch::Tensor& ref) { return torch::zeros({}, ref.options()); }

}  // namespace

torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& eps) {
  if (!real.sizes().equals(fake.sizes())) throw Error(Errc::ShapeMismatch, "real and fake batches differ in shape");
  if (eps.dim() != 1 || eps.size(0) != real.size(0)) throw Error(Errc::ShapeMismatch, "need one eps per example pair");
  if (eps.numel() > 0 && (eps.min().item<double>() < 0.0 || eps.max().item<double>() > 1.0)) {
    throw Error(Errc::InvalidArgument, "eps must lie in [0, 1]");
  }
  std::vector<std::int64_t> shape(static_cast<std::size_t>(real.dim()), 1);
  shape[0] = real.size(0);
  const auto e = eps.to(real.scalar_type()).view(shape);
  return e * real + (1 - e) * fake;
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& interp, double lambda) {
  auto x = interp.detach().requires_grad_(true);
  const auto out = critic(x);
  torch::Tensor grad;
  if (out.requires_grad()) {
    grad = torch::autograd::grad({out.sum()}, {x}, {}, /*retain_graph=*/true, /*create_graph=*/true,
                                 /*allow_unused=*/true)[0];
  }
  if (!grad.defined()) grad = torch::zeros_like(x);
  if (!torch::isfinite(grad).all().item<bool>()) throw Error(Errc::NonFiniteGradient, "critic input gradient");
  const auto sq = grad.flatten(1).pow(2).sum(1);
  // sqrt has no derivative at 0; a zero gradient contributes a constant.
  const auto positive = sq > 0;
  const auto norm = torch::where(positive, torch::sqrt(torch::where(positive, sq, torch::ones_like(sq))),
                                 torch::zeros_like(sq));
  return lambda * (norm - 1).pow(2).mean();
}

torch::Tensor critic_loss(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                          const torch::Tensor& interp, double lambda) {
  if (!present(real) || !present(fake)) throw Error(Errc::EmptyInput, "critic loss needs real and fake batches");
  return critic(fake).mean() - critic(real).mean() + gradient_penalty(critic, interp, lambda);
}

torch::Tensor conditional_log_prob(const torch::Tensor& logits) {
  const auto k = logits.size(1) - 1;
  const auto real = logits.slice(1, 0, k);
  return real - torch::logsumexp(real, 1, /*keepdim=*/true);
}

torch::Tensor log_prob_fake(const torch::Tensor& logits) {
  const auto k = logits.size(1) - 1;
  return torch::clamp_min(logits.select(1, k) - torch::logsumexp(logits, 1), kLogFloor);
}

torch::Tensor log_prob_real(const torch::Tensor& logits) {
  const auto k = logits.size(1) - 1;
  return torch::clamp_min(torch::logsumexp(logits.slice(1, 0, k), 1) - torch::logsumexp(logits, 1), kLogFloor);
}

TaskLoss semisup_task_loss(const torch::Tensor& labeled_logits, const torch::Tensor& labels,
                           const torch::Tensor& weights, const torch::Tensor& unlabeled_logits,
                           const torch::Tensor& fake_logits) {
  TaskLoss out;
  const torch::Tensor& ref = present(labeled_logits) ? labeled_logits
                             : present(unlabeled_logits) ? unlabeled_logits
                                                         : fake_logits;
  if (!ref.defined()) throw Error(Errc::EmptyInput, "task loss needs at least one batch");

  if (present(labeled_logits)) {
    check_logits(labeled_logits, "labeled");
    const auto k = labeled_logits.size(1) - 1;
    if (labels.dim() != 1 || labels.size(0) != labeled_logits.size(0) || weights.dim() != 1 ||
        weights.size(0) != labeled_logits.size(0)) {
      throw Error(Errc::ShapeMismatch, "labels and weights need one entry per labeled example");
    }
    if (labels.min().item<std::int64_t>() < 0 || labels.max().item<std::int64_t>() >= k) {
      throw Error(Errc::LabelOutOfRange, "labels must lie in [0, " + std::to_string(k) + ")");
    }
    const auto picked = conditional_log_prob(labeled_logits).gather(1, labels.to(torch::kInt64).unsqueeze(1)).squeeze(1);
    out.labeled = (weights.to(picked.scalar_type()) * -torch::clamp_min(picked, kLogFloor)).mean();
  } else {
    out.labeled = zero_like_scalar(ref);
  }
  if (present(unlabeled_logits)) {
    check_logits(unlabeled_logits, "unlabeled");
    out.unlabeled = -log_prob_real(unlabeled_logits).mean();
  } else {
    out.unlabeled = zero_like_scalar(ref);
  }
  if (present(fake_logits)) {
    check_logits(fake_logits, "fake");
    out.fake = -log_prob_fake(fake_logits).mean();
  } else {
    out.fake = zero_like_scalar(ref);
  }
  out.total = out.labeled + out.unlabeled + out.fake;
  return out;
}

LossTerms combine(const torch::Tensor& wgan, const std::map<std::string, torch::Tensor>& per_task,
                  const std::vector<TaskWeight>& tasks, double alpha, double lambda) {
  LossTerms out;
  auto& b = out.breakdown;
  b.alpha = alpha;
  b.lambda = lambda;
  torch::Tensor multitask;
  for (const auto& t : tasks) {
    const auto it = per_task.find(t.task);
    if (it == per_task.end()) throw Error(Errc::InvalidArgument, "no loss for task '" + t.task + "'");
    const double value = it->second.item<double>();
    b.per_task[t.task] = value;
    b.multitask += t.importance * value;
    const auto term = t.importance * it->second;
    multitask = multitask.defined() ? multitask + term : term;
  }
  if (wgan.defined()) b.wgan = wgan.item<double>();
  b.total = alpha * b.wgan + b.multitask;
  if (!multitask.defined()) multitask = wgan.defined() ? torch::zeros_like(wgan) : torch::zeros({});
  out.total = (wgan.defined() && alpha != 0.0) ? alpha * wgan + multitask : multitask;
  return out;
}

LossTerms discriminator_loss(Discriminator& d, const BatchBundle& bundle, double alpha, double lambda,
                             const std::vector<TaskWeight>& tasks, const LossSwitches& switches,
                             std::map<std::string, torch::Tensor>* labeled_logits) {
  const bool need_real = alpha != 0.0 || switches.use_unlabeled;
  const bool need_fake = alpha != 0.0 || switches.use_fake;
  if (need_real && !present(bundle.unlabeled)) throw Error(Errc::EmptyInput, "bundle has no real images");
  if (need_fake && !present(bundle.fake)) throw Error(Errc::EmptyInput, "bundle has no generated images");

  // One forward pass over real, fake and every task's labeled images.
  std::vector<torch::Tensor> parts;
  std::int64_t offset = 0;
  std::int64_t real_at = -1, fake_at = -1;
  std::map<std::string, std::int64_t> labeled_at;
  if (need_real) {
    parts.push_back(bundle.unlabeled);
    real_at = offset;
    offset += bundle.unlabeled.size(0);
  }
  if (need_fake) {
    parts.push_back(bundle.fake);
    fake_at = offset;
    offset += bundle.fake.size(0);
  }
  for (const auto& t : tasks) {
    const auto it = bundle.labeled.find(t.task);
    if (it == bundle.labeled.end() || !present(it->second.images)) continue;
    parts.push_back(it->second.images);
    labeled_at[t.task] = offset;
    offset += it->second.images.size(0);
  }
  if (parts.empty()) throw Error(Errc::EmptyInput, "empty bundle");
  const auto out = d->forward(torch::cat(parts, 0));

  torch::Tensor wgan;
  if (alpha != 0.0) {
    const auto nr = bundle.unlabeled.size(0), nf = bundle.fake.size(0);
    const auto interp = interpolate(bundle.unlabeled, bundle.fake, bundle.eps);
    CriticFn critic = [&d](const torch::Tensor& x) { return d->critic(x); };
    wgan = out.critic.slice(0, fake_at, fake_at + nf).mean() - out.critic.slice(0, real_at, real_at + nr).mean() +
           gradient_penalty(critic, interp, lambda);
  }

  std::map<std::string, torch::Tensor> per_task;
  for (const auto& t : tasks) {
    const auto& logits = out.logits.at(t.task);
    torch::Tensor lab, labels, weights, unl, fak;
    if (const auto it = labeled_at.find(t.task); it != labeled_at.end()) {
      const auto& batch = bundle.labeled.at(t.task);
      lab = logits.slice(0, it->second, it->second + batch.images.size(0));
      labels = batch.labels;
      weights = batch.weights;
      if (labeled_logits) (*labeled_logits)[t.task] = lab.detach();
    }
    if (switches.use_unlabeled) unl = logits.slice(0, real_at, real_at + bundle.unlabeled.size(0));
    if (switches.use_fake) fak = logits.slice(0, fake_at, fake_at + bundle.fake.size(0));
    if (!lab.defined() && !unl.defined() && !fak.defined()) {
      per_task[t.task] = torch::zeros({}, out.critic.options());
      continue;
    }
    per_task[t.task] = semisup_task_loss(lab, labels, weights, unl, fak).total;
  }
  return combine(wgan, per_task, tasks, alpha, lambda);
}

LossTerms generator_loss(const DiscriminatorOutput& fake_outputs, double alpha, const std::vector<TaskWeight>& tasks) {
  torch::Tensor wgan;
  if (alpha != 0.0) wgan = -fake_outputs.critic.mean();
  std::map<std::string, torch::Tensor> per_task;
  for (const auto& t : tasks) {
    const auto& logits = fake_outputs.logits.at(t.task);
    check_logits(logits, "fake");
    per_task[t.task] = log_prob_fake(logits).mean();
  }
  return combine(wgan, per_task, tasks, alpha, 0.0);
}

}  // namespace ssmt::nn
