#pragma once

// Generator and shared-body discriminator networks, first-layer channel
// expansion, feature extraction and checkpoint I/O.
//
// Image tensors are NCHW inside the networks; tiles on disk are NHWC and are
// converted with to_nchw / to_nhwc.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "ssmt/config.hpp"
#include "ssmt/container.hpp"

namespace ssmt::nn {

torch::Tensor to_nchw(const torch::Tensor& nhwc);
torch::Tensor to_nhwc(const torch::Tensor& nchw);

struct GeneratorSpec {
  int noise_dim = 128;
  int base_channels = 256;
  int tile_size = 64;
  int bands = 9;
};

/// Output channels of each upsampling stage; the last equals `bands`.
/// Throws ShapeInfeasible unless tile_size = 4 * 2^k with k >= 1.
std::vector<int> generator_stages(const GeneratorSpec& spec);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);

  /// z: (N, noise_dim) -> images (N, bands, tile, tile) in (-1, 1).
  torch::Tensor forward(const torch::Tensor& z);
  const GeneratorSpec& spec() const noexcept { return spec_; }

 private:
  GeneratorSpec spec_;
  torch::nn::Linear project_{nullptr};
  torch::nn::BatchNorm2d project_bn_{nullptr};
  std::vector<torch::nn::ConvTranspose2d> ups_;
  std::vector<torch::nn::BatchNorm2d> norms_;
};
TORCH_MODULE(Generator);

struct HeadSpec {
  std::string task;
  int classes = 2;  // K real classes; the head emits K + 1 logits
};

struct DiscriminatorSpec {
  std::string arch = "resnet";  // resnet | resnet50
  std::vector<int> widths{32, 32, 64, 64, 128, 128, 256, 256};
  int in_channels = 9;
  double leaky_slope = 0.2;
  std::vector<HeadSpec> heads;
};

struct DiscriminatorOutput {
  torch::Tensor critic;                         // (N)
  std::map<std::string, torch::Tensor> logits;  // task -> (N, K + 1)
  torch::Tensor features;                       // (N, feature_dim)
};

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorSpec& spec);

  DiscriminatorOutput forward(const torch::Tensor& x);
  torch::Tensor features(const torch::Tensor& x);
  torch::Tensor critic(const torch::Tensor& x);
  DiscriminatorOutput heads(const torch::Tensor& features);

  int feature_dim() const noexcept { return feature_dim_; }
  const DiscriminatorSpec& spec() const noexcept { return spec_; }
  torch::nn::Conv2d& stem() { return stem_; }
  torch::nn::Linear& head(const std::string& task);
  torch::nn::Linear& critic_head() { return critic_head_; }

 private:
  DiscriminatorSpec spec_;
  int feature_dim_ = 0;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::Sequential body_{nullptr};
  std::vector<std::pair<std::string, torch::nn::Linear>> heads_;
  torch::nn::Linear critic_head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Seeds torch's generator, then constructs.
Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed);
Discriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

GeneratorSpec generator_spec(const config::RunConfig& cfg);
DiscriminatorSpec discriminator_spec(const config::RunConfig& cfg, const std::vector<HeadSpec>& heads);

enum class InitScheme { None, SameInit, RandomInit };
InitScheme parse_init_scheme(const std::string& text);
std::string to_string(InitScheme scheme);

/// rgb_filters: (out, 3, kh, kw). Channels 0-2 are copied; extra channels are
/// the per-position RGB mean (same-init) or truncated-normal draws matching
/// the bank's mean and standard deviation (random-init).
torch::Tensor expand_first_layer(const torch::Tensor& rgb_filters, int target_channels, InitScheme scheme,
                                 std::uint64_t seed);

/// Rewrites the discriminator's first convolution. `filters` is a container
/// holding a (out, 3, kh, kw) tensor named "filters"; without one, the
/// bank is the first three input channels of the current weights.
void apply_first_layer_init(Discriminator& d, InitScheme scheme, const std::optional<std::filesystem::path>& filters,
                            std::uint64_t seed);

/// Pooled body features in inference mode, batched. images are NCHW.
torch::Tensor extract_features(Discriminator& d, const torch::Tensor& images, std::int64_t batch = 256);

/// Named parameter and buffer tensors of a module, prefixed.
void append_state(const torch::nn::Module& module, const std::string& prefix, io::Container& out);
void load_state(torch::nn::Module& module, const std::string& prefix, const io::Container& in);

struct ModelPair {
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
};

/// Writes both networks' architecture into `meta` so they can be rebuilt.
void describe_models(const GeneratorSpec& g, const DiscriminatorSpec& d, io::Container& out);
/// Rebuilds the networks described in a checkpoint and loads their weights.
ModelPair restore_models(const io::Container& checkpoint);

}  // namespace ssmt::nn
