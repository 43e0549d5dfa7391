#include "ssmt/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ssmt/error.hpp"

namespace ssmt::train {

namespace {

using config::format_real;

nn::LossBreakdown& accumulate(nn::LossBreakdown& into, const nn::LossBreakdown& b) {
  into.wgan += b.wgan;
  into.multitask += b.multitask;
  into.total += b.total;
  for (const auto& [k, v] : b.per_task) into.per_task[k] += v;
  into.alpha = b.alpha;
  into.lambda = b.lambda;
  return into;
}

nn::LossBreakdown averaged(nn::LossBreakdown b, std::int64_t n) {
  if (n == 0) return b;
  const double d = static_cast<double>(n);
  b.wgan /= d;
  b.multitask /= d;
  b.total /= d;
  for (auto& [k, v] : b.per_task) v /= d;
  return b;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(Errc::Io, "cannot write '" + p.string() + "'");
}

/// Keeps the header and the rows whose leading epoch field is below `epochs`.
std::string keep_epochs(const std::vector<std::string>& lines, int epochs) {
  std::string out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto comma = lines[i].find(',');
    if (comma == std::string::npos) continue;
    if (std::stoi(lines[i].substr(0, comma)) < epochs) out += lines[i] + "\n";
  }
  return out;
}

std::filesystem::path epoch_checkpoint(const std::filesystem::path& out_dir, int epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
  return out_dir / "checkpoints" / name;
}

}  // namespace

Mode parse_mode(const std::string& text) {
  if (text == "semisupervised") return Mode::SemiSupervised;
  if (text == "supervised") return Mode::Supervised;
  throw Error(Errc::BadConfigValue, "unknown training mode '" + text + "'");
}

TrainingConfig TrainingConfig::from(const config::RunConfig& cfg) {
  TrainingConfig t;
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  t.lr0 = cfg.get_real("train.lr0");
  t.lr_decay = cfg.get_real("train.lr_decay");
  t.lr_drop_epoch = static_cast<int>(cfg.get_int("train.lr_drop_epoch"));
  t.lr_drop_factor = cfg.get_real("train.lr_drop_factor");
  t.weight_decay = cfg.get_real("train.weight_decay");
  t.critic_steps = static_cast<int>(cfg.get_int("train.critic_steps"));
  t.alpha = cfg.get_real("train.alpha");
  t.lambda = cfg.get_real("train.lambda");
  t.epochs = static_cast<int>(cfg.get_int("train.epochs"));
  t.steps_per_epoch = static_cast<int>(cfg.get_int("train.steps_per_epoch"));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed"));
  t.beta1 = cfg.get_real("train.adam_beta1");
  t.beta2 = cfg.get_real("train.adam_beta2");
  t.adam_eps = cfg.get_real("train.adam_eps");
  t.mode = parse_mode(cfg.get_string("train.mode"));
  t.use_unlabeled = cfg.get_bool("train.use_unlabeled");
  t.use_fake = cfg.get_bool("train.use_fake");
  t.val_examples = static_cast<int>(cfg.get_int("train.val_examples"));
  t.keep_checkpoints = static_cast<int>(cfg.get_int("train.keep_checkpoints"));
  t.validate();
  return t;
}

void TrainingConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(Errc::BadConfigValue, what); };
  if (batch_size < 1) bad("train.batch_size must be >= 1");
  if (!(lr0 > 0) || !(lr_decay > 0) || !(lr_drop_factor > 0)) bad("learning-rate settings must be positive");
  if (lr_drop_epoch < 0) bad("train.lr_drop_epoch must be >= 0");
  if (weight_decay < 0) bad("train.weight_decay must be >= 0");
  if (critic_steps < 1) bad("train.critic_steps must be >= 1");
  if (alpha < 0 || lambda < 0) bad("train.alpha and train.lambda must be >= 0");
  if (epochs < 0 || steps_per_epoch < 0 || val_examples < 0 || keep_checkpoints < 0) bad("counts must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || !(adam_eps > 0)) bad("Adam settings out of range");
}

double lr_at(int epoch, const TrainingConfig& config) {
  if (epoch < 0) throw Error(Errc::InvalidArgument, "epoch must be >= 0");
  double lr = config.lr0 * std::pow(config.lr_decay, epoch);
  if (epoch > config.lr_drop_epoch) lr /= config.lr_drop_factor;
  return lr;
}

// ---------------------------------------------------------------------------
// AdamW

AdamW::AdamW(std::vector<std::pair<std::string, torch::Tensor>> params, double beta1, double beta2, double eps,
             double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  for (const auto& [name, p] : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad().defined()) {
      p.grad().detach_();
      p.grad().zero_();
    }
  }
}

void AdamW::step(double lr) {
  torch::NoGradGuard guard;
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    const auto g = p.grad().defined() ? p.grad() : torch::zeros_like(p);
    if (weight_decay_ > 0) p.mul_(1.0 - lr * weight_decay_);
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    const auto denom = (v_[i] / bc2).sqrt_().add_(eps_);
    p.addcdiv_(m_[i], denom, -lr / bc1);
  }
}

void AdamW::save(const std::string& prefix, io::Container& out) const {
  out.meta[prefix + "steps"] = std::to_string(steps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (const auto& [kind, t] : {std::pair{"m/", m_[i]}, std::pair{"v/", v_[i]}}) {
      const auto c = t.contiguous().to(torch::kFloat64);
      out.tensors.push_back(io::TensorEntry::make<double>(
          prefix + kind + params_[i].first, io::DType::F64, std::vector<std::int64_t>(c.sizes().begin(), c.sizes().end()),
          {c.data_ptr<double>(), static_cast<std::size_t>(c.numel())}));
    }
  }
}

void AdamW::load(const std::string& prefix, const io::Container& in) {
  torch::NoGradGuard guard;
  steps_ = std::stoll(in.meta_at(prefix + "steps"));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (auto* pair : {&m_, &v_}) {
      const auto& e = in.at(prefix + (pair == &m_ ? "m/" : "v/") + params_[i].first);
      auto& target = (*pair)[i];
      if (std::vector<std::int64_t>(target.sizes().begin(), target.sizes().end()) != e.shape ||
          e.dtype != io::DType::F64) {
        throw Error(Errc::ShapeMismatch, "optimizer state for '" + params_[i].first + "' does not match");
      }
      target.copy_(torch::from_blob(const_cast<std::byte*>(e.data.data()), e.shape, torch::kFloat64));
    }
  }
}

// ---------------------------------------------------------------------------
// Metrics

std::string format_metrics(const MetricsRow& row, const std::vector<std::string>& tasks) {
  std::string prefix = std::to_string(row.epoch) + "," + std::to_string(row.step) + "," + format_real(row.lr) + "," +
                       format_real(row.ld.total) + "," + format_real(row.ld.wgan) + "," +
                       format_real(row.ld.multitask) + "," + format_real(row.lg.total) + "," +
                       format_real(row.lg.wgan) + "," + format_real(row.lg.multitask) + ",";
  std::string out;
  for (const auto& t : tasks) {
    out += prefix + t + ",train," + format_real(row.train_accuracy.at(t)) + "\n";
    out += prefix + t + ",val," + format_real(row.val_accuracy.at(t)) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(synth::Dataset dataset, const config::RunConfig& cfg) : cfg_(cfg) {
  cfg_.set("data.tile_size", std::to_string(dataset.info.tile_size));
  cfg_.set("data.bands", std::to_string(dataset.info.bands));
  tc_ = TrainingConfig::from(cfg_);
  primary_ = dataset.info.primary_task;

  const auto n = static_cast<std::int64_t>(dataset.examples.size());
  if (n == 0) throw Error(Errc::EmptyInput, "dataset has no examples");
  tiles_ = torch::from_blob(dataset.tiles.data(), {n, dataset.info.tile_size, dataset.info.tile_size, dataset.info.bands},
                            torch::kFloat32)
               .permute({0, 3, 1, 2})
               .contiguous();
  dataset.tiles.clear();
  dataset.tiles.shrink_to_fit();
  meta_ = std::move(dataset);

  std::vector<nn::HeadSpec> heads;
  for (const auto& t : meta_.tasks) {
    heads.push_back({t.name, t.num_classes()});
    task_weights_.push_back({t.name, t.importance});
  }
  gspec_ = nn::generator_spec(cfg_);
  dspec_ = nn::discriminator_spec(cfg_, heads);
  models_.generator = nn::build_generator(gspec_, tc_.seed);
  models_.discriminator = nn::build_discriminator(dspec_, tc_.seed);
  const auto filters = cfg_.get_string("init.filters");
  nn::apply_first_layer_init(models_.discriminator, nn::parse_init_scheme(cfg_.get_string("init.scheme")),
                             filters.empty() ? std::nullopt : std::optional<std::filesystem::path>(filters), tc_.seed);

  auto named = [](torch::nn::Module& m) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value());
    return out;
  };
  opt_d_.emplace(named(*models_.discriminator), tc_.beta1, tc_.beta2, tc_.adam_eps, tc_.weight_decay);
  opt_g_.emplace(named(*models_.generator), tc_.beta1, tc_.beta2, tc_.adam_eps, 0.0);

  for (const auto& t : meta_.tasks) {
    auto labels = torch::full({n}, -1, torch::kInt64);
    auto weights = torch::zeros({n}, torch::kFloat32);
    auto* lp = labels.data_ptr<std::int64_t>();
    auto* wp = weights.data_ptr<float>();
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& e = meta_.examples[static_cast<std::size_t>(i)];
      if (const auto& label = e.labels.at(t.name)) {
        lp[i] = *label;
        // Class-balance factor only; the task importance enters the multitask sum.
        wp[i] = t.importance > 0 ? static_cast<float>(e.weight.at(t.name) / t.importance) : 0.0f;
      }
    }
    labels_[t.name] = labels;
    weights_[t.name] = weights;
  }

  for (std::int64_t i = 0; i < n; ++i) {
    const auto& e = meta_.examples[static_cast<std::size_t>(i)];
    if (e.split != synth::Split::Train) continue;
    train_rows_.push_back(i);
    const bool in_subset = tc_.mode == Mode::SemiSupervised || e.labeled(primary_);
    for (const auto& t : meta_.tasks) {
      if (in_subset && e.labeled(t.name)) labeled_rows_[t.name].push_back(i);
    }
  }
  if (train_rows_.empty()) throw Error(Errc::EmptyInput, "dataset has no training examples");
  if (labeled_rows_[primary_].empty()) throw Error(Errc::MissingLabels, "no labeled training examples for " + primary_);
}

std::vector<std::string> Trainer::task_names() const {
  std::vector<std::string> out;
  for (const auto& t : task_weights_) out.push_back(t.task);
  return out;
}

bool Trainer::generator_active() const noexcept {
  return tc_.mode == Mode::SemiSupervised && (tc_.use_fake || tc_.alpha > 0);
}

torch::Tensor Trainer::images(const std::vector<std::int64_t>& rows) const {
  return tiles_.index_select(0, torch::tensor(rows, torch::kInt64));
}

void Trainer::begin_epoch(int epoch) {
  epoch_ = epoch;
  rng_.emplace(derive_seed(tc_.seed, {0xE90C, static_cast<std::uint64_t>(epoch)}));
  real_pool_ = train_rows_;
  rng_->shuffle(real_pool_.begin(), real_pool_.end());
  real_cursor_ = 0;
  labeled_pool_ = labeled_rows_;
  labeled_cursor_.clear();
  for (auto& [task, pool] : labeled_pool_) {
    rng_->shuffle(pool.begin(), pool.end());
    labeled_cursor_[task] = 0;
  }
  correct_.clear();
  seen_.clear();
}

std::vector<std::int64_t> Trainer::draw(std::vector<std::int64_t>& pool, std::size_t& cursor, std::size_t n) {
  std::vector<std::int64_t> out;
  if (pool.empty()) return out;
  out.reserve(n);
  while (out.size() < n) {
    if (cursor == pool.size()) {
      rng_->shuffle(pool.begin(), pool.end());
      cursor = 0;
    }
    out.push_back(pool[cursor++]);
  }
  return out;
}

torch::Tensor Trainer::noise(std::int64_t n) {
  auto z = torch::empty({n, gspec_.noise_dim}, torch::kFloat32);
  auto* p = z.data_ptr<float>();
  for (std::int64_t i = 0; i < z.numel(); ++i) p[i] = static_cast<float>(rng_->normal());
  return z;
}

nn::BatchBundle Trainer::make_bundle() {
  if (!rng_) begin_epoch(epoch_);
  const bool semi = tc_.mode == Mode::SemiSupervised;
  const double alpha = semi ? tc_.alpha : 0.0;
  const bool need_real = alpha > 0 || (semi && tc_.use_unlabeled);
  const bool need_fake = alpha > 0 || (semi && tc_.use_fake);
  const auto b = static_cast<std::size_t>(tc_.batch_size);

  nn::BatchBundle bundle;
  if (need_real) bundle.unlabeled = images(draw(real_pool_, real_cursor_, b));
  if (need_fake) {
    const auto z = noise(tc_.batch_size);
    torch::NoGradGuard guard;
    bundle.fake = models_.generator->forward(z).detach();
  }
  if (need_real && need_fake) {
    bundle.eps = torch::empty({tc_.batch_size}, torch::kFloat32);
    auto* p = bundle.eps.data_ptr<float>();
    for (int i = 0; i < tc_.batch_size; ++i) p[i] = static_cast<float>(rng_->uniform());
  }
  const auto per_task = (b + task_weights_.size() - 1) / task_weights_.size();
  for (const auto& t : task_weights_) {
    auto rows = draw(labeled_pool_[t.task], labeled_cursor_[t.task], per_task);
    if (rows.empty()) continue;
    const auto idx = torch::tensor(rows, torch::kInt64);
    bundle.labeled[t.task] = {tiles_.index_select(0, idx), labels_.at(t.task).index_select(0, idx),
                              weights_.at(t.task).index_select(0, idx)};
  }
  return bundle;
}

nn::LossBreakdown Trainer::d_step() {
  const bool semi = tc_.mode == Mode::SemiSupervised;
  const double alpha = semi ? tc_.alpha : 0.0;
  const nn::LossSwitches switches{semi && tc_.use_unlabeled, semi && tc_.use_fake};
  const auto bundle = make_bundle();
  opt_d_->zero_grad();
  std::map<std::string, torch::Tensor> logits;
  auto loss = nn::discriminator_loss(models_.discriminator, bundle, alpha, tc_.lambda, task_weights_, switches, &logits);
  if (!std::isfinite(loss.breakdown.total)) {
    throw Error(Errc::NonFiniteLoss, "discriminator loss at update " + std::to_string(d_updates_ + 1));
  }
  loss.total.backward();
  opt_d_->step(lr_at(epoch_, tc_));
  ++d_updates_;
  for (const auto& [task, l] : logits) {
    const auto k = l.size(1) - 1;
    const auto pred = l.slice(1, 0, k).argmax(1);
    correct_[task] += pred.eq(bundle.labeled.at(task).labels).sum().item<std::int64_t>();
    seen_[task] += l.size(0);
  }
  return loss.breakdown;
}

nn::LossBreakdown Trainer::g_step() {
  if (!rng_) begin_epoch(epoch_);
  const double alpha = tc_.mode == Mode::SemiSupervised ? tc_.alpha : 0.0;
  const auto z = noise(tc_.batch_size);
  opt_g_->zero_grad();
  const auto out = models_.discriminator->forward(models_.generator->forward(z));
  auto loss = nn::generator_loss(out, alpha, task_weights_);
  if (!std::isfinite(loss.breakdown.total)) {
    throw Error(Errc::NonFiniteLoss, "generator loss at update " + std::to_string(g_updates_ + 1));
  }
  loss.total.backward();
  opt_g_->step(lr_at(epoch_, tc_));
  opt_d_->zero_grad();
  ++g_updates_;
  return loss.breakdown;
}

Trainer::StepRecord Trainer::train_step() {
  StepRecord r;
  for (int i = 0; i < tc_.critic_steps; ++i) r.ld.push_back(d_step());
  if (generator_active()) r.lg = g_step();
  return r;
}

std::map<std::string, double> Trainer::accuracy(synth::Split split, std::size_t limit) {
  auto rows = meta_.split_indices(split);
  if (rows.size() > limit) rows.resize(limit);
  std::map<std::string, std::int64_t> correct, seen;
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < rows.size(); i += 256) {
    const std::vector<std::int64_t> chunk(rows.begin() + static_cast<std::ptrdiff_t>(i),
                                          rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), i + 256)));
    const auto idx = torch::tensor(chunk, torch::kInt64);
    const auto out = models_.discriminator->forward(tiles_.index_select(0, idx));
    for (const auto& t : task_weights_) {
      const auto labels = labels_.at(t.task).index_select(0, idx);
      const auto mask = labels.ge(0);
      const auto& l = out.logits.at(t.task);
      const auto pred = l.slice(1, 0, l.size(1) - 1).argmax(1);
      correct[t.task] += (pred.eq(labels) & mask).sum().item<std::int64_t>();
      seen[t.task] += mask.sum().item<std::int64_t>();
    }
  }
  std::map<std::string, double> acc;
  for (const auto& t : task_weights_) {
    acc[t.task] = seen[t.task] ? static_cast<double>(correct[t.task]) / static_cast<double>(seen[t.task]) : 0.0;
  }
  return acc;
}

MetricsRow Trainer::run_epoch(int epoch) {
  const auto start = std::chrono::steady_clock::now();
  begin_epoch(epoch);
  const auto steps = tc_.steps_per_epoch > 0
                         ? static_cast<std::int64_t>(tc_.steps_per_epoch)
                         : static_cast<std::int64_t>((train_rows_.size() + static_cast<std::size_t>(tc_.batch_size) - 1) /
                                                     static_cast<std::size_t>(tc_.batch_size));
  MetricsRow row;
  row.epoch = epoch;
  row.lr = lr_at(epoch, tc_);
  std::int64_t g_count = 0;
  for (std::int64_t s = 0; s < steps; ++s) {
    accumulate(row.ld, d_step());
    if (generator_active() && d_updates_ % tc_.critic_steps == 0) {
      accumulate(row.lg, g_step());
      ++g_count;
    }
  }
  row.ld = averaged(row.ld, steps);
  row.lg = averaged(row.lg, g_count);
  row.step = d_updates_;
  for (const auto& t : task_weights_) {
    row.train_accuracy[t.task] =
        seen_[t.task] ? static_cast<double>(correct_[t.task]) / static_cast<double>(seen_[t.task]) : 0.0;
  }
  row.val_accuracy = accuracy(synth::Split::Val, static_cast<std::size_t>(tc_.val_examples));
  epochs_done_ = epoch + 1;
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

io::Container Trainer::checkpoint() const {
  io::Container c;
  c.meta["kind"] = "checkpoint";
  c.meta["config"] = cfg_.snapshot();
  c.meta["epochs_done"] = std::to_string(epochs_done_);
  c.meta["d_updates"] = std::to_string(d_updates_);
  c.meta["g_updates"] = std::to_string(g_updates_);
  c.meta["primary_task"] = primary_;
  nn::describe_models(gspec_, dspec_, c);
  nn::append_state(*models_.generator, "G/", c);
  nn::append_state(*models_.discriminator, "D/", c);
  opt_d_->save("optD/", c);
  opt_g_->save("optG/", c);
  return c;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_container(checkpoint(), path);
}

void Trainer::restore(const io::Container& c) {
  if (c.meta.count("kind") == 0 || c.meta_at("kind") != "checkpoint") {
    throw Error(Errc::CorruptHeader, "not a training checkpoint");
  }
  auto saved = config::RunConfig::from_snapshot(c.meta_at("config")).values();
  auto current = cfg_.values();
  std::string differing;
  for (const auto& [key, value] : current) {
    if (key == "train.epochs" || key == "train.keep_checkpoints" || key == "train.threads") continue;
    const auto it = saved.find(key);
    if (it == saved.end() || it->second != value) differing += (differing.empty() ? "" : ", ") + key;
  }
  if (!differing.empty()) throw Error(Errc::ResumeMismatch, "checkpoint configuration differs in " + differing);
  nn::load_state(*models_.generator, "G/", c);
  nn::load_state(*models_.discriminator, "D/", c);
  opt_d_->load("optD/", c);
  opt_g_->load("optG/", c);
  epochs_done_ = std::stoi(c.meta_at("epochs_done"));
  d_updates_ = std::stoll(c.meta_at("d_updates"));
  g_updates_ = std::stoll(c.meta_at("g_updates"));
  epoch_ = epochs_done_;
  rng_.reset();
}

// ---------------------------------------------------------------------------

TrainResult train(const config::RunConfig& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir, const std::optional<std::filesystem::path>& resume) {
  Trainer trainer(synth::read_dataset(data_dir), cfg);
  const auto& tc = trainer.config();
  std::filesystem::create_directories(out_dir / "checkpoints");
  write_text(out_dir / "config.snapshot", cfg.snapshot());

  TrainResult result;
  result.metrics = out_dir / "metrics.csv";
  result.final_checkpoint = out_dir / "final.ckpt";
  std::string metrics = std::string(kMetricsHeader) + "\n";
  std::string timing = "epoch,wall_seconds\n";
  if (resume) {
    trainer.restore(io::read_container(*resume));
    metrics += keep_epochs(read_lines(result.metrics), trainer.epochs_done());
    timing += keep_epochs(read_lines(out_dir / "timing.csv"), trainer.epochs_done());
  } else {
    trainer.save_checkpoint(epoch_checkpoint(out_dir, 0));
  }
  write_text(result.metrics, metrics);
  write_text(out_dir / "timing.csv", timing);

  const auto tasks = trainer.task_names();
  for (int epoch = trainer.epochs_done(); epoch < tc.epochs; ++epoch) {
    MetricsRow row;
    try {
      row = trainer.run_epoch(epoch);
    } catch (const Error& e) {
      if (e.code() != Errc::NonFiniteLoss && e.code() != Errc::NonFiniteGradient && e.code() != Errc::NonFiniteLogit) {
        throw;
      }
      const auto diag = out_dir / "diagnostic.ckpt";
      trainer.save_checkpoint(diag);
      throw Error(Errc::NonFiniteLoss, std::string(e.what()) + "; diagnostic checkpoint: " + diag.string());
    }
    metrics += format_metrics(row, tasks);
    timing += std::to_string(row.epoch) + "," + format_real(row.wall_seconds) + "\n";
    write_text(result.metrics, metrics);
    write_text(out_dir / "timing.csv", timing);
    trainer.save_checkpoint(epoch_checkpoint(out_dir, epoch + 1));
    if (tc.keep_checkpoints > 0 && epoch + 1 - tc.keep_checkpoints >= 1) {
      std::filesystem::remove(epoch_checkpoint(out_dir, epoch + 1 - tc.keep_checkpoints));
    }
    result.rows.push_back(std::move(row));
  }
  trainer.save_checkpoint(result.final_checkpoint);
  return result;
}

}  // namespace ssmt::train
