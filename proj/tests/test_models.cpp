#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <torch/torch.h>

#include "ssmt/error.hpp"
#include "ssmt/models.hpp"

using namespace ssmt;
using namespace ssmt::nn;
namespace fs = std::filesystem;

namespace {

template <class F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::InvalidArgument;
}

GeneratorSpec small_gen() { return {16, 32, 16, 9}; }

DiscriminatorSpec small_disc() {
  DiscriminatorSpec s;
  s.widths = {8, 16};
  s.in_channels = 9;
  s.heads = {{"a", 3}, {"awi", 30}};
  return s;
}

bool same_parameters(const torch::nn::Module& a, const torch::nn::Module& b) {
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (const auto& item : pa) {
    if (!torch::equal(item.value(), pb[item.key()])) return false;
  }
  return true;
}

}  // namespace

TEST(Generator, StagesReachTileSize) {
  EXPECT_EQ(generator_stages({128, 256, 64, 9}), (std::vector<int>{128, 64, 32, 9}));
  EXPECT_EQ(generator_stages({16, 32, 16, 3}).back(), 3);
  EXPECT_EQ(error_of([] { generator_stages({16, 32, 48, 9}); }), Errc::ShapeInfeasible);
  EXPECT_EQ(error_of([] { generator_stages({16, 32, 4, 9}); }), Errc::ShapeInfeasible);
}

TEST(Generator, ShapeRangeAndSeededInit) {
  auto g = build_generator(small_gen(), 3);
  const auto out = g->forward(torch::randn({2, 16}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 9, 16, 16}));
  EXPECT_EQ(to_nhwc(out).sizes(), (std::vector<std::int64_t>{2, 16, 16, 9}));
  EXPECT_TRUE(torch::equal(to_nchw(to_nhwc(out)), out));
  EXPECT_LT(out.abs().max().item<double>(), 1.0);

  auto g2 = build_generator(small_gen(), 3);
  auto g3 = build_generator(small_gen(), 4);
  EXPECT_TRUE(same_parameters(*g, *g2));
  EXPECT_FALSE(same_parameters(*g, *g3));
}

TEST(Generator, InitialOutputIsNotSaturated) {
  torch::manual_seed(5);
  auto g = build_generator(small_gen(), 5);
  torch::NoGradGuard guard;
  const auto out = g->forward(torch::randn({1024, 16}));
  const auto band_means = out.mean({0, 2, 3});
  for (int b = 0; b < 9; ++b) {
    EXPECT_GE(band_means[b].item<double>(), -0.5);
    EXPECT_LE(band_means[b].item<double>(), 0.5);
  }
}

TEST(Discriminator, HeadSizesAndSoftmax) {
  auto d = build_discriminator(small_disc(), 1);
  const auto x = torch::rand({4, 9, 16, 16}) * 2 - 1;
  const auto out = d->forward(x);
  EXPECT_EQ(out.critic.sizes(), (std::vector<std::int64_t>{4}));
  EXPECT_EQ(out.logits.at("awi").size(1), 31);
  EXPECT_EQ(out.logits.at("a").size(1), 4);
  EXPECT_EQ(out.features.size(1), d->feature_dim());
  const auto sums = torch::softmax(out.logits.at("awi").to(torch::kDouble), 1).sum(1);
  EXPECT_LT((sums - 1).abs().max().item<double>(), 1e-6);

  const auto zeros = d->forward(torch::zeros({3, 9, 16, 16}));
  EXPECT_EQ(zeros.features.size(1), d->feature_dim());
}

TEST(Discriminator, DeterministicInference) {
  auto d = build_discriminator(small_disc(), 2);
  d->eval();
  const auto x = torch::rand({5, 9, 16, 16});
  torch::NoGradGuard guard;
  const auto a = d->forward(x), b = d->forward(x);
  EXPECT_TRUE(torch::equal(a.critic, b.critic));
  EXPECT_TRUE(torch::equal(a.features, b.features));
  EXPECT_TRUE(torch::equal(a.logits.at("awi"), b.logits.at("awi")));
}

TEST(Discriminator, HeadIndependenceAndCriticBiasShift) {
  auto d = build_discriminator(small_disc(), 3);
  const auto x = torch::rand({6, 9, 16, 16});
  torch::NoGradGuard guard;
  const auto before = d->forward(x);
  d->head("a")->weight.add_(0.5);
  const auto after = d->forward(x);
  EXPECT_TRUE(torch::equal(before.logits.at("awi"), after.logits.at("awi")));
  EXPECT_TRUE(torch::equal(before.critic, after.critic));
  EXPECT_FALSE(torch::equal(before.logits.at("a"), after.logits.at("a")));

  auto dd = build_discriminator(small_disc(), 3);
  dd->to(torch::kDouble);
  const auto xd = x.to(torch::kDouble);
  const auto c0 = dd->critic(xd);
  dd->critic_head()->bias.add_(2.5);
  const auto c1 = dd->critic(xd);
  EXPECT_LT(((c1 - c0) - 2.5).abs().max().item<double>(), 1e-12);
}

TEST(Discriminator, ResNet50GeometryBuilds) {
  DiscriminatorSpec s;
  s.arch = "resnet50";
  s.in_channels = 3;
  s.heads = {{"awi", 30}};
  auto d = build_discriminator(s, 1);
  const auto out = d->forward(torch::rand({1, 3, 32, 32}));
  EXPECT_EQ(out.features.size(1), 2048);
  EXPECT_EQ(out.logits.at("awi").size(1), 31);
}

TEST(ExpandFirstLayer, SameInitIsRgbMean) {
  auto bank = torch::zeros({2, 3, 3, 3}, torch::kDouble);
  bank.index_put_({0, 0, 1, 1}, 3.0);
  const auto out = expand_first_layer(bank, 9, InitScheme::SameInit, 1);
  ASSERT_EQ(out.size(1), 9);
  for (int c = 3; c < 9; ++c) EXPECT_EQ(out.index({0, c, 1, 1}).item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(out.slice(1, 0, 3), bank));

  torch::manual_seed(1);
  const auto random_bank = torch::randn({4, 3, 5, 5}, torch::kDouble);
  const auto same = expand_first_layer(random_bank, 9, InitScheme::SameInit, 1);
  const auto mean = (random_bank.select(1, 0) + random_bank.select(1, 1) + random_bank.select(1, 2)) / 3.0;
  for (int c = 3; c < 9; ++c) EXPECT_LT((same.select(1, c) - mean).abs().max().item<double>(), 1e-15);

  const auto equal_rgb = random_bank.slice(1, 0, 1).expand({-1, 3, -1, -1}).contiguous();
  const auto expanded = expand_first_layer(equal_rgb, 9, InitScheme::SameInit, 1);
  // (a + a + a) / 3 can land one rounding step away from a.
  const auto a = equal_rgb.select(1, 0);
  for (int c = 0; c < 3; ++c) EXPECT_TRUE(torch::equal(expanded.select(1, c), a));
  for (int c = 3; c < 9; ++c) {
    const auto ulp = a.abs() * std::numeric_limits<double>::epsilon();
    EXPECT_TRUE(((expanded.select(1, c) - a).abs() <= ulp).all().item<bool>());
  }
}

TEST(ExpandFirstLayer, NoOpAndErrors) {
  const auto bank = torch::randn({2, 3, 3, 3});
  EXPECT_TRUE(torch::equal(expand_first_layer(bank, 3, InitScheme::RandomInit, 1), bank));
  EXPECT_EQ(error_of([] { expand_first_layer(torch::randn({2, 4, 3, 3}), 9, InitScheme::SameInit, 1); }),
            Errc::BadChannelCount);
  EXPECT_EQ(error_of([&] { expand_first_layer(bank, 2, InitScheme::SameInit, 1); }), Errc::BadChannelCount);
}

TEST(ExpandFirstLayer, RandomInitMatchesBankStatistics) {
  torch::manual_seed(2);
  const auto bank = torch::randn({64, 3, 7, 7}, torch::kDouble) * 0.3 + 0.1;
  const auto out = expand_first_layer(bank, 9, InitScheme::RandomInit, 7);
  EXPECT_TRUE(torch::equal(out.slice(1, 0, 3), bank));
  const auto extra = out.slice(1, 3, 9);
  const double n = static_cast<double>(extra.numel());
  const double m = bank.mean().item<double>(), s = bank.std(false).item<double>();
  EXPECT_LE(std::abs(extra.mean().item<double>() - m), 4 * s / std::sqrt(n));
  EXPECT_LE(std::abs(extra.std(false).item<double>() - s), 4 * s / std::sqrt(n));
  // Truncation at two standard deviations of the widened normal.
  EXPECT_LE((extra - m).abs().max().item<double>(), 2.0 * s / std::sqrt(0.7737413) + 1e-12);
  EXPECT_FALSE(torch::equal(out, expand_first_layer(bank, 9, InitScheme::RandomInit, 8)));
  EXPECT_TRUE(torch::equal(out, expand_first_layer(bank, 9, InitScheme::RandomInit, 7)));
}

TEST(ExpandFirstLayer, AppliedFromFilterFile) {
  auto d = build_discriminator(small_disc(), 4);
  const auto w = d->stem()->weight.detach();
  torch::manual_seed(3);
  const auto bank = torch::randn({w.size(0), 3, w.size(2), w.size(3)});
  io::Container c;
  const auto contiguous = bank.contiguous();
  c.tensors.push_back(io::TensorEntry::make<float>(
      "filters", io::DType::F32, {bank.size(0), 3, bank.size(2), bank.size(3)},
      std::span<const float>(contiguous.data_ptr<float>(), static_cast<std::size_t>(bank.numel()))));
  const auto path = fs::temp_directory_path() / "ssmt_test_filters.bin";
  io::write_container(c, path);
  apply_first_layer_init(d, InitScheme::SameInit, path, 1);
  const auto now = d->stem()->weight.detach();
  EXPECT_TRUE(torch::equal(now.slice(1, 0, 3), bank));
  EXPECT_TRUE(torch::allclose(now.select(1, 8), bank.mean(1)));
}

TEST(ExtractFeatures, MatchesForwardAndIsDeterministic) {
  auto d = build_discriminator(small_disc(), 5);
  const auto x = torch::rand({7, 9, 16, 16});
  const auto f = extract_features(d, x, 3);
  EXPECT_EQ(f.size(0), 7);
  d->eval();
  torch::NoGradGuard guard;
  EXPECT_TRUE(torch::allclose(f, d->forward(x).features, 1e-6, 1e-6));
  EXPECT_TRUE(torch::equal(f, extract_features(d, x, 3)));
  EXPECT_EQ(error_of([&] { extract_features(d, torch::rand({2, 3, 16, 16})); }), Errc::ShapeMismatch);
}

TEST(Checkpoint, StateRoundTripThroughContainer) {
  auto g = build_generator(small_gen(), 6);
  auto d = build_discriminator(small_disc(), 6);
  io::Container c;
  describe_models(g->spec(), d->spec(), c);
  append_state(*g, "G/", c);
  append_state(*d, "D/", c);
  const auto path = fs::temp_directory_path() / "ssmt_test_models.ckpt";
  io::write_container(c, path);
  const auto restored = restore_models(io::read_container(path));
  EXPECT_TRUE(same_parameters(*restored.generator, *g));
  EXPECT_TRUE(same_parameters(*restored.discriminator, *d));
  EXPECT_EQ(restored.discriminator->spec().heads.size(), 2u);
  EXPECT_EQ(restored.discriminator->spec().heads[1].classes, 30);
}

TEST(InitScheme, Parse) {
  EXPECT_EQ(parse_init_scheme("same-init"), InitScheme::SameInit);
  EXPECT_EQ(parse_init_scheme(to_string(InitScheme::RandomInit)), InitScheme::RandomInit);
  EXPECT_THROW(parse_init_scheme("imagenet"), Error);
}
