#include <gtest/gtest.h>

#include <filesystem>

#include "vaelab/checkpoint.hpp"
#include "vaelab/data.hpp"
#include "vaelab/errors.hpp"

using namespace vaelab;

namespace {

MlpConfig config(std::size_t dx, std::vector<std::size_t> hidden, std::size_t dz, Activation a = Activation::tanh) {
  MlpConfig c;
  c.input_dim = dx;
  c.hidden_dims = std::move(hidden);
  c.latent_dim = dz;
  c.activation = a;
  return c;
}

}  // namespace

TEST(Checkpoint, ModelRoundTripIsExact) {
  SeededRng rng(1);
  for (Likelihood lik : {Likelihood::bernoulli, Likelihood::gaussian}) {
    for (Activation act : {Activation::tanh, Activation::sigmoid, Activation::relu}) {
      const VaeModel m = init_model(config(5, {4, 3}, 2, act), lik, rng);
      const auto bytes = encode_checkpoint(m);
      const Checkpoint back = decode_checkpoint(bytes);
      ASSERT_TRUE(std::holds_alternative<VaeModel>(back));
      EXPECT_EQ(std::get<VaeModel>(back), m);
      EXPECT_EQ(encode_checkpoint(std::get<VaeModel>(back)), bytes);
    }
  }
}

TEST(Checkpoint, PosteriorRoundTripIsExact) {
  SeededRng rng(2);
  WeightPosterior post = seed_from_map(init_model(config(4, {3}, 2), Likelihood::gaussian, rng), 1e-3);
  for (auto& p : post.rhos) {
    for (double& v : p.value.data()) v = rng.normal();
  }
  const auto bytes = encode_checkpoint(post);
  const Checkpoint back = decode_checkpoint(bytes);
  ASSERT_TRUE(std::holds_alternative<WeightPosterior>(back));
  EXPECT_EQ(std::get<WeightPosterior>(back), post);
  EXPECT_EQ(checkpoint_model(back), post.mean_model());
}

TEST(Checkpoint, GlorotModelAtFullScaleKeepsEveryId) {
  SeededRng rng(3);
  const VaeModel m = init_model(config(784, {500}, 10), Likelihood::bernoulli, rng);
  const VaeModel back = std::get<VaeModel>(decode_checkpoint(encode_checkpoint(m)));
  std::vector<std::string> ids, back_ids;
  for (const auto& p : m.params) ids.push_back(p.id);
  for (const auto& p : back.params) back_ids.push_back(p.id);
  EXPECT_EQ(back_ids, ids);
  for (const auto& p : m.params) EXPECT_EQ(back.params.value(p.id), p.value) << p.id;
}

TEST(Checkpoint, EveryTruncationIsFormatError) {
  SeededRng rng(4);
  const auto bytes = encode_checkpoint(init_model(config(3, {2}, 1), Likelihood::bernoulli, rng));
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    EXPECT_THROW(decode_checkpoint(std::span<const std::uint8_t>(bytes.data(), len)), FormatError) << len;
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), FormatError);
}

TEST(Checkpoint, CorruptHeaderFieldsAreFormatErrors) {
  SeededRng rng(5);
  const auto good = encode_checkpoint(init_model(config(3, {2}, 1), Likelihood::bernoulli, rng));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
  auto bad_version = good;
  bad_version[8] = 99;
  EXPECT_THROW(decode_checkpoint(bad_version), FormatError);
  auto bad_kind = good;
  bad_kind[12] = 7;
  EXPECT_THROW(decode_checkpoint(bad_kind), FormatError);
}

TEST(Checkpoint, RandomByteCorruptionNeverCrashes) {
  SeededRng rng(6);
  const auto good = encode_checkpoint(init_model(config(3, {2}, 1), Likelihood::gaussian, rng));
  for (int trial = 0; trial < 2000; ++trial) {
    auto bytes = good;
    bytes[rng.uniform_index(bytes.size())] = static_cast<std::uint8_t>(rng.uniform_index(256));
    try {
      decode_checkpoint(bytes);
    } catch (const FormatError&) {
    } catch (const std::exception& e) {
      FAIL() << "unstructured error: " << e.what();
    }
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "vaelab_test_model.ckpt";
  SeededRng rng(7);
  const VaeModel m = init_model(config(6, {5}, 2), Likelihood::bernoulli, rng);
  save_checkpoint(m, path.string());
  EXPECT_EQ(read_file(path.string()), encode_checkpoint(m));
  EXPECT_EQ(checkpoint_model(load_checkpoint(path.string())), m);
  std::filesystem::remove(path);
}
