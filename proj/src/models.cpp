#include "ssmt/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ssmt/error.hpp"
#include "ssmt/random.hpp"

namespace ssmt::nn {

namespace {

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in, int out, int stride, double slope) : slope_(slope) {
    namespace F = torch::nn;
    conv1_ = register_module("conv1", F::Conv2d(F::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
    conv2_ = register_module("conv2", F::Conv2d(F::Conv2dOptions(out, out, 3).padding(1)));
    if (stride != 1 || in != out) {
      shortcut_ = register_module("shortcut", F::Conv2d(F::Conv2dOptions(in, out, 1).stride(stride)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = conv1_(torch::leaky_relu(x, slope_));
    h = conv2_(torch::leaky_relu(h, slope_));
    return (shortcut_ ? shortcut_(x) : x) + h;
  }

 private:
  double slope_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(ResBlock);

class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(int in, int mid, int stride, double slope) : slope_(slope) {
    namespace F = torch::nn;
    const int out = mid * 4;
    conv1_ = register_module("conv1", F::Conv2d(F::Conv2dOptions(in, mid, 1)));
    conv2_ = register_module("conv2", F::Conv2d(F::Conv2dOptions(mid, mid, 3).stride(stride).padding(1)));
    conv3_ = register_module("conv3", F::Conv2d(F::Conv2dOptions(mid, out, 1)));
    if (stride != 1 || in != out) {
      shortcut_ = register_module("shortcut", F::Conv2d(F::Conv2dOptions(in, out, 1).stride(stride)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = conv1_(torch::leaky_relu(x, slope_));
    h = conv2_(torch::leaky_relu(h, slope_));
    h = conv3_(torch::leaky_relu(h, slope_));
    return (shortcut_ ? shortcut_(x) : x) + h;
  }

 private:
  double slope_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(Bottleneck);

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int to_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::CorruptHeader, "bad integer '" + s + "' in checkpoint");
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

torch::Tensor to_nchw(const torch::Tensor& nhwc) {
  if (nhwc.dim() != 4) throw Error(Errc::ShapeMismatch, "expected a 4-d NHWC tensor");
  return nhwc.permute({0, 3, 1, 2}).contiguous();
}

torch::Tensor to_nhwc(const torch::Tensor& nchw) {
  if (nchw.dim() != 4) throw Error(Errc::ShapeMismatch, "expected a 4-d NCHW tensor");
  return nchw.permute({0, 2, 3, 1}).contiguous();
}

// ---------------------------------------------------------------------------
// Generator

std::vector<int> generator_stages(const GeneratorSpec& spec) {
  if (spec.noise_dim < 1 || spec.base_channels < 1 || spec.bands < 1) {
    throw Error(Errc::InvalidArgument, "generator dimensions must be positive");
  }
  int size = 4, k = 0;
  while (size < spec.tile_size) {
    size *= 2;
    ++k;
  }
  if (size != spec.tile_size || k < 1) {
    throw Error(Errc::ShapeInfeasible, "tile size " + std::to_string(spec.tile_size) +
                                           " is not reachable by doubling from 4x4");
  }
  std::vector<int> out;
  for (int i = 1; i < k; ++i) out.push_back(std::max(spec.base_channels >> i, 8));
  out.push_back(spec.bands);
  return out;
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  namespace F = torch::nn;
  const auto stages = generator_stages(spec);
  project_ = register_module("project", F::Linear(spec.noise_dim, 16 * spec.base_channels));
  project_bn_ = register_module("project_bn", F::BatchNorm2d(spec.base_channels));
  int in = spec.base_channels;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    ups_.push_back(register_module("up" + std::to_string(i),
                                   F::ConvTranspose2d(F::ConvTranspose2dOptions(in, stages[i], 4).stride(2).padding(1))));
    if (i + 1 < stages.size()) norms_.push_back(register_module("bn" + std::to_string(i), F::BatchNorm2d(stages[i])));
    in = stages[i];
  }
  torch::NoGradGuard guard;
  for (auto& p : named_parameters()) {
    if (p.key().find("weight") != std::string::npos && p.value().dim() > 1) p.value().normal_(0.0, 0.02);
    if (p.key().find("bias") != std::string::npos) p.value().zero_();
  }
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(1) != spec_.noise_dim) throw Error(Errc::ShapeMismatch, "noise must be (N, noise_dim)");
  auto h = project_(z).view({z.size(0), spec_.base_channels, 4, 4});
  h = torch::relu(project_bn_(h));
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    h = ups_[i](h);
    h = i < norms_.size() ? torch::relu(norms_[i](h)) : torch::tanh(h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Discriminator

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  namespace F = torch::nn;
  if (spec.in_channels < 1) throw Error(Errc::BadChannelCount, "discriminator needs at least one input channel");
  body_ = F::Sequential();
  if (spec.arch == "resnet") {
    if (spec.widths.empty()) throw Error(Errc::InvalidArgument, "disc.widths is empty");
    stem_ = F::Conv2d(F::Conv2dOptions(spec.in_channels, spec.widths[0], 4).stride(2).padding(1));
    int in = spec.widths[0];
    for (int w : spec.widths) {
      if (w < 1) throw Error(Errc::InvalidArgument, "block widths must be positive");
      body_->push_back(ResBlock(in, w, w > in ? 2 : 1, spec.leaky_slope));
      in = w;
    }
    feature_dim_ = in;
  } else if (spec.arch == "resnet50") {
    stem_ = F::Conv2d(F::Conv2dOptions(spec.in_channels, 64, 7).stride(2).padding(3));
    body_->push_back(F::MaxPool2d(F::MaxPool2dOptions(3).stride(2).padding(1)));
    int in = 64;
    const std::array<int, 4> depth{3, 4, 6, 3};
    const std::array<int, 4> mid{64, 128, 256, 512};
    for (std::size_t s = 0; s < depth.size(); ++s) {
      for (int b = 0; b < depth[s]; ++b) {
        body_->push_back(Bottleneck(in, mid[s], (b == 0 && s > 0) ? 2 : 1, spec.leaky_slope));
        in = mid[s] * 4;
      }
    }
    feature_dim_ = in;
  } else {
    throw Error(Errc::BadConfigValue, "unknown discriminator arch '" + spec.arch + "'");
  }
  register_module("stem", stem_);
  register_module("body", body_);
  for (const auto& h : spec.heads) {
    if (h.classes < 1) throw Error(Errc::InvalidArgument, "head " + h.task + " needs at least one class");
    heads_.emplace_back(h.task, register_module("head_" + h.task, F::Linear(feature_dim_, h.classes + 1)));
  }
  critic_head_ = register_module("critic", F::Linear(feature_dim_, 1));
}

torch::Tensor DiscriminatorImpl::features(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels) {
    throw Error(Errc::ShapeMismatch, "discriminator expects (N, " + std::to_string(spec_.in_channels) + ", H, W)");
  }
  auto h = body_->forward(stem_(x));
  return torch::leaky_relu(h, spec_.leaky_slope).mean({2, 3});
}

DiscriminatorOutput DiscriminatorImpl::heads(const torch::Tensor& f) {
  DiscriminatorOutput out;
  out.features = f;
  out.critic = critic_head_(f).squeeze(1);
  for (auto& [task, head] : heads_) out.logits[task] = head(f);
  return out;
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x) { return heads(features(x)); }

torch::Tensor DiscriminatorImpl::critic(const torch::Tensor& x) { return critic_head_(features(x)).squeeze(1); }

torch::nn::Linear& DiscriminatorImpl::head(const std::string& task) {
  for (auto& [name, h] : heads_) {
    if (name == task) return h;
  }
  throw Error(Errc::InvalidArgument, "no head for task '" + task + "'");
}

Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  torch::manual_seed(derive_seed(seed, {0x6E4}) >> 1);
  return Generator(spec);
}

Discriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  torch::manual_seed(derive_seed(seed, {0xD15}) >> 1);
  return Discriminator(spec);
}

GeneratorSpec generator_spec(const config::RunConfig& cfg) {
  return {static_cast<int>(cfg.get_int("gen.noise_dim")), static_cast<int>(cfg.get_int("gen.base_channels")),
          static_cast<int>(cfg.get_int("data.tile_size")), static_cast<int>(cfg.get_int("data.bands"))};
}

DiscriminatorSpec discriminator_spec(const config::RunConfig& cfg, const std::vector<HeadSpec>& heads) {
  DiscriminatorSpec d;
  d.arch = cfg.get_string("disc.arch");
  d.widths.clear();
  for (auto w : cfg.get_ints("disc.widths")) d.widths.push_back(static_cast<int>(w));
  d.in_channels = static_cast<int>(cfg.get_int("data.bands"));
  d.leaky_slope = cfg.get_real("disc.leaky_slope");
  d.heads = heads;
  return d;
}

// ---------------------------------------------------------------------------
// First-layer expansion

InitScheme parse_init_scheme(const std::string& text) {
  if (text == "none") return InitScheme::None;
  if (text == "same-init") return InitScheme::SameInit;
  if (text == "random-init") return InitScheme::RandomInit;
  throw Error(Errc::BadConfigValue, "unknown init scheme '" + text + "'");
}

std::string to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::None: return "none";
    case InitScheme::SameInit: return "same-init";
    case InitScheme::RandomInit: return "random-init";
  }
  return "?";
}

torch::Tensor expand_first_layer(const torch::Tensor& rgb_filters, int target_channels, InitScheme scheme,
                                 std::uint64_t seed) {
  if (rgb_filters.dim() != 4 || rgb_filters.size(1) != 3) {
    throw Error(Errc::BadChannelCount, "filter bank must have exactly 3 input channels");
  }
  if (target_channels < 3) throw Error(Errc::BadChannelCount, "target channels must be >= 3");
  if (scheme == InitScheme::None) throw Error(Errc::InvalidArgument, "expansion needs same-init or random-init");
  if (target_channels == 3) return rgb_filters.clone();

  const auto extra = target_channels - 3;
  torch::Tensor added;
  if (scheme == InitScheme::SameInit) {
    added = rgb_filters.mean(1, /*keepdim=*/true).expand({-1, extra, -1, -1}).clone();
  } else {
    const auto bank = rgb_filters.to(torch::kDouble);
    const double mean = bank.mean().item<double>();
    const double sd = bank.numel() > 1 ? bank.std(/*unbiased=*/false).item<double>() : 0.0;
    // Truncating a normal at +-2 sigma shrinks its spread; widen the
    // underlying scale so the draws keep the bank's standard deviation.
    constexpr double a = 2.0;
    const double shrink = 1.0 - 2.0 * a * normal_pdf(a) / (2.0 * normal_cdf(a) - 1.0);
    const double scale = sd / std::sqrt(shrink);
    auto out = torch::empty({rgb_filters.size(0), extra, rgb_filters.size(2), rgb_filters.size(3)}, torch::kDouble);
    auto* p = out.data_ptr<double>();
    Rng rng(derive_seed(seed, {0x1A1}));
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      double z = rng.normal();
      while (std::abs(z) > a) z = rng.normal();
      p[i] = mean + scale * z;
    }
    added = out.to(rgb_filters.scalar_type());
  }
  return torch::cat({rgb_filters, added}, 1);
}

void apply_first_layer_init(Discriminator& d, InitScheme scheme, const std::optional<std::filesystem::path>& filters,
                            std::uint64_t seed) {
  if (scheme == InitScheme::None) return;
  auto& weight = d->stem()->weight;
  torch::Tensor bank;
  if (filters && !filters->empty()) {
    const auto c = io::read_container(*filters);
    const auto& t = c.at("filters");
    torch::Tensor raw;
    if (t.dtype == io::DType::F32) {
      raw = torch::from_blob(const_cast<std::byte*>(t.data.data()), t.shape, torch::kFloat32).clone();
    } else if (t.dtype == io::DType::F64) {
      raw = torch::from_blob(const_cast<std::byte*>(t.data.data()), t.shape, torch::kFloat64).clone();
    } else {
      throw Error(Errc::ShapeMismatch, "filter bank must be f32 or f64");
    }
    bank = raw.to(weight.scalar_type());
    if (bank.dim() != 4 || bank.size(1) != 3) throw Error(Errc::BadChannelCount, "filter bank must have 3 input channels");
    if (bank.size(0) != weight.size(0) || bank.size(2) != weight.size(2) || bank.size(3) != weight.size(3)) {
      throw Error(Errc::ShapeMismatch, "filter bank shape does not match the first layer");
    }
  } else {
    if (weight.size(1) < 3) throw Error(Errc::BadChannelCount, "first layer has fewer than 3 input channels");
    bank = weight.detach().slice(1, 0, 3).clone();
  }
  const auto expanded = expand_first_layer(bank, static_cast<int>(weight.size(1)), scheme, seed);
  torch::NoGradGuard guard;
  weight.copy_(expanded);
}

torch::Tensor extract_features(Discriminator& d, const torch::Tensor& images, std::int64_t batch) {
  if (images.dim() != 4 || images.size(1) != d->spec().in_channels) {
    throw Error(Errc::ShapeMismatch, "images must be (N, " + std::to_string(d->spec().in_channels) + ", H, W)");
  }
  torch::NoGradGuard guard;
  const bool was_training = d->is_training();
  d->eval();
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < images.size(0); i += batch) {
    parts.push_back(d->features(images.slice(0, i, std::min(i + batch, images.size(0)))));
  }
  d->train(was_training);
  if (parts.empty()) return torch::empty({0, d->feature_dim()}, images.options());
  return torch::cat(parts, 0);
}

// ---------------------------------------------------------------------------
// State I/O

void append_state(const torch::nn::Module& module, const std::string& prefix, io::Container& out) {
  auto add = [&](const std::string& name, const torch::Tensor& value) {
    auto t = value.detach().contiguous().cpu();
    std::vector<std::int64_t> shape(t.sizes().begin(), t.sizes().end());
    if (t.scalar_type() == torch::kFloat64) {
      out.tensors.push_back(io::TensorEntry::make<double>(prefix + name, io::DType::F64, shape,
                                                          {t.data_ptr<double>(), static_cast<std::size_t>(t.numel())}));
    } else if (t.scalar_type() == torch::kInt64) {
      out.tensors.push_back(io::TensorEntry::make<std::int64_t>(
          prefix + name, io::DType::I64, shape, {t.data_ptr<std::int64_t>(), static_cast<std::size_t>(t.numel())}));
    } else {
      t = t.to(torch::kFloat32);
      out.tensors.push_back(io::TensorEntry::make<float>(prefix + name, io::DType::F32, shape,
                                                         {t.data_ptr<float>(), static_cast<std::size_t>(t.numel())}));
    }
  };
  for (const auto& p : module.named_parameters()) add(p.key(), p.value());
  for (const auto& b : module.named_buffers()) add(b.key(), b.value());
}

void load_state(torch::nn::Module& module, const std::string& prefix, const io::Container& in) {
  torch::NoGradGuard guard;
  auto load = [&](const std::string& name, torch::Tensor& target) {
    const auto& e = in.at(prefix + name);
    if (std::vector<std::int64_t>(target.sizes().begin(), target.sizes().end()) != e.shape) {
      throw Error(Errc::ShapeMismatch, "tensor '" + prefix + name + "' has a different shape");
    }
    torch::Tensor src;
    switch (e.dtype) {
      case io::DType::F32:
        src = torch::from_blob(const_cast<std::byte*>(e.data.data()), e.shape, torch::kFloat32);
        break;
      case io::DType::F64:
        src = torch::from_blob(const_cast<std::byte*>(e.data.data()), e.shape, torch::kFloat64);
        break;
      case io::DType::I64:
        src = torch::from_blob(const_cast<std::byte*>(e.data.data()), e.shape, torch::kInt64);
        break;
      default:
        throw Error(Errc::ShapeMismatch, "unsupported dtype for '" + prefix + name + "'");
    }
    target.copy_(src);
  };
  for (auto& p : module.named_parameters()) load(p.key(), p.value());
  for (auto& b : module.named_buffers()) load(b.key(), b.value());
}

void describe_models(const GeneratorSpec& g, const DiscriminatorSpec& d, io::Container& out) {
  out.meta["gen.noise_dim"] = std::to_string(g.noise_dim);
  out.meta["gen.base_channels"] = std::to_string(g.base_channels);
  out.meta["gen.tile_size"] = std::to_string(g.tile_size);
  out.meta["gen.bands"] = std::to_string(g.bands);
  out.meta["disc.arch"] = d.arch;
  out.meta["disc.widths"] = join_ints(d.widths);
  out.meta["disc.in_channels"] = std::to_string(d.in_channels);
  out.meta["disc.leaky_slope"] = config::format_real(d.leaky_slope);
  std::string heads;
  for (const auto& h : d.heads) heads += (heads.empty() ? "" : ",") + h.task + ":" + std::to_string(h.classes);
  out.meta["disc.heads"] = heads;
}

ModelPair restore_models(const io::Container& checkpoint) {
  GeneratorSpec g;
  g.noise_dim = to_int(checkpoint.meta_at("gen.noise_dim"));
  g.base_channels = to_int(checkpoint.meta_at("gen.base_channels"));
  g.tile_size = to_int(checkpoint.meta_at("gen.tile_size"));
  g.bands = to_int(checkpoint.meta_at("gen.bands"));
  DiscriminatorSpec d;
  d.arch = checkpoint.meta_at("disc.arch");
  d.widths.clear();
  for (const auto& w : split(checkpoint.meta_at("disc.widths"), ',')) d.widths.push_back(to_int(w));
  d.in_channels = to_int(checkpoint.meta_at("disc.in_channels"));
  d.leaky_slope = std::stod(checkpoint.meta_at("disc.leaky_slope"));
  for (const auto& h : split(checkpoint.meta_at("disc.heads"), ',')) {
    const auto colon = h.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::CorruptHeader, "bad head entry '" + h + "'");
    d.heads.push_back({h.substr(0, colon), to_int(h.substr(colon + 1))});
  }
  ModelPair m{Generator(g), Discriminator(d)};
  load_state(*m.generator, "G/", checkpoint);
  load_state(*m.discriminator, "D/", checkpoint);
  return m;
}

}  // namespace ssmt::nn
