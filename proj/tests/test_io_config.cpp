#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "ssmt/config.hpp"
#include "ssmt/container.hpp"
#include "ssmt/error.hpp"

using namespace ssmt;
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

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ssmt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

io::Container sample_container() {
  io::Container c;
  c.meta["kind"] = "test";
  c.meta["note"] = "a = b, c";
  const std::vector<float> f{1.5f, -2.0f, 0.0f, 3.25f, 1e-7f, -0.0f};
  const std::vector<double> d{1.0 / 3.0, -1e300};
  const std::vector<std::int64_t> i{-1, 0, 1LL << 40};
  const std::vector<std::uint8_t> u{0, 255, 7};
  c.tensors.push_back(io::TensorEntry::make<float>("f", io::DType::F32, {2, 3}, f));
  c.tensors.push_back(io::TensorEntry::make<double>("d", io::DType::F64, {2}, d));
  c.tensors.push_back(io::TensorEntry::make<std::int64_t>("i", io::DType::I64, {3}, i));
  c.tensors.push_back(io::TensorEntry::make<std::uint8_t>("u", io::DType::U8, {3, 1}, u));
  return c;
}

}  // namespace

TEST(Container, RoundTripIsBitExact) {
  const auto dir = temp_dir("container");
  const auto c = sample_container();
  io::write_container(c, dir / "c.bin");
  const auto r = io::read_container(dir / "c.bin");
  EXPECT_EQ(r.meta, c.meta);
  ASSERT_EQ(r.tensors.size(), c.tensors.size());
  for (std::size_t k = 0; k < c.tensors.size(); ++k) {
    EXPECT_EQ(r.tensors[k].name, c.tensors[k].name);
    EXPECT_EQ(r.tensors[k].dtype, c.tensors[k].dtype);
    EXPECT_EQ(r.tensors[k].shape, c.tensors[k].shape);
    EXPECT_EQ(r.tensors[k].data, c.tensors[k].data);
  }
  EXPECT_EQ(r.at("f").numel(), 6);
  EXPECT_EQ(error_of([&] { r.at("missing"); }), Errc::ShapeMismatch);
  EXPECT_EQ(error_of([&] { r.meta_at("missing"); }), Errc::CorruptHeader);
}

TEST(Container, TruncationAndBadHeaders) {
  const auto dir = temp_dir("container_bad");
  io::write_container(sample_container(), dir / "c.bin");
  const auto size = fs::file_size(dir / "c.bin");
  for (const auto cut : {std::uintmax_t{3}, std::uintmax_t{12}, size / 2, size - 1}) {
    fs::copy_file(dir / "c.bin", dir / "t.bin", fs::copy_options::overwrite_existing);
    fs::resize_file(dir / "t.bin", cut);
    EXPECT_EQ(error_of([&] { io::read_container(dir / "t.bin"); }), Errc::CorruptHeader) << "cut " << cut;
  }

  std::vector<char> bytes(size);
  std::ifstream(dir / "c.bin", std::ios::binary).read(bytes.data(), static_cast<std::streamsize>(size));

  auto with = [&](std::size_t offset, char value) {
    auto copy = bytes;
    copy[offset] = value;
    std::ofstream(dir / "m.bin", std::ios::binary).write(copy.data(), static_cast<std::streamsize>(copy.size()));
    return dir / "m.bin";
  };
  EXPECT_EQ(error_of([&] { io::read_container(with(0, 'X')); }), Errc::CorruptHeader);
  EXPECT_EQ(error_of([&] { io::read_container(with(8, 9)); }), Errc::VersionMismatch);
  EXPECT_EQ(error_of([&] { io::read_container(dir / "absent.bin"); }), Errc::Io);
}

TEST(Container, RejectsPayloadShapeDisagreement) {
  io::Container c;
  const std::vector<float> f{1, 2, 3};
  c.tensors.push_back(io::TensorEntry::make<float>("f", io::DType::F32, {2, 2}, f));
  const auto dir = temp_dir("container_shape");
  EXPECT_EQ(error_of([&] { io::write_container(c, dir / "c.bin"); }), Errc::ShapeMismatch);
}

TEST(Config, DefaultsAndTypedAccess) {
  config::RunConfig cfg;
  EXPECT_EQ(cfg.get_int("train.batch_size"), 115);
  EXPECT_DOUBLE_EQ(cfg.get_real("train.lr0"), 0.01);
  EXPECT_DOUBLE_EQ(cfg.get_real("train.weight_decay"), 0.00004);
  EXPECT_EQ(cfg.get_int("task.awi.bins"), 30);
  EXPECT_EQ(cfg.get_int("gen.noise_dim"), 128);
  EXPECT_EQ(cfg.get_reals("data.split_fractions"), (std::vector<double>{0.7, 0.2, 0.1}));
  EXPECT_EQ(cfg.get_strings("tasks.enabled").size(), 5u);
  EXPECT_TRUE(cfg.get_bool("train.use_fake"));
  EXPECT_EQ(error_of([&] { cfg.get_real("train.batch_size"); }), Errc::InvalidArgument);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  config::RunConfig cfg;
  EXPECT_EQ(error_of([&] { cfg.set("train.batchsize", "3"); }), Errc::UnknownConfigKey);
  EXPECT_EQ(error_of([&] { cfg.set("train.batch_size", "3.5"); }), Errc::BadConfigValue);
  EXPECT_EQ(error_of([&] { cfg.set("train.lr0", "nan"); }), Errc::BadConfigValue);
  EXPECT_EQ(error_of([&] { cfg.set("train.use_fake", "maybe"); }), Errc::BadConfigValue);
  EXPECT_EQ(error_of([&] { cfg.merge_text("train.epochs 3\n"); }), Errc::BadConfigValue);
  EXPECT_EQ(error_of([&] { cfg.merge_text("no.such = 1\n"); }), Errc::UnknownConfigKey);
}

TEST(Config, FileThenOverridePrecedence) {
  const auto dir = temp_dir("config");
  std::ofstream(dir / "run.cfg") << "# comment\ntrain.epochs = 7\ntrain.alpha = 0.5  # trailing\n";
  config::RunConfig cfg;
  cfg.merge_file(dir / "run.cfg");
  EXPECT_EQ(cfg.get_int("train.epochs"), 7);
  EXPECT_DOUBLE_EQ(cfg.get_real("train.alpha"), 0.5);
  cfg.set("train.epochs", "9");
  EXPECT_EQ(cfg.get_int("train.epochs"), 9);
}

TEST(Config, SnapshotRoundTripAndHash) {
  config::RunConfig a;
  a.set("train.lr0", "1e-2");
  config::RunConfig b;
  b.set("train.lr0", "0.010");
  EXPECT_EQ(a.snapshot(), b.snapshot());
  EXPECT_EQ(a.hash(), b.hash());

  a.set("train.seed", "42");
  a.set("disc.widths", "8, 16");
  const auto back = config::RunConfig::from_snapshot(a.snapshot());
  EXPECT_EQ(back, a);
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
}

TEST(Config, HelpEnumeratesEveryKeyWithDefault) {
  const auto help = config::help_text();
  for (const auto& def : config::registry()) {
    EXPECT_NE(help.find(def.name), std::string::npos) << def.name;
    config::RunConfig cfg;
    EXPECT_NE(help.find(cfg.values().at(def.name)), std::string::npos) << def.name;
  }
}
