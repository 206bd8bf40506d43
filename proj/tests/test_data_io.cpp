#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vlmpar/container.hpp"
#include "vlmpar/dataset.hpp"
#include "vlmpar/error.hpp"
#include "vlmpar/training.hpp"

namespace vlmpar {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SyntheticSpec two_region_spec(std::size_t n, std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.num_samples = n;
  s.image_hw = 16;
  s.patch_size = 8;
  s.seed = seed;
  s.attributes = {{{"top", "a bright top", 2}, {0, 0, 8, 16}, {0.5}},
                  {{"bottom", "how bright is the bottom", 3}, {8, 0, 8, 8}, {1.0 / 3, 2.0 / 3}}};
  return s;
}

ModelConfig model_for(const SyntheticSpec& s, std::size_t d = 8) {
  ModelConfig cfg;
  cfg.encoder.d_model = d;
  cfg.encoder.num_layers = 1;
  cfg.encoder.num_heads = 2;
  cfg.encoder.mlp_hidden = 2 * d;
  cfg.encoder.patch_size = s.patch_size;
  cfg.encoder.image_hw = s.image_hw;
  cfg.encoder.max_tokens = 8;
  cfg.encoder.vocab_size = 32;
  cfg.fusion_heads = 2;
  for (const auto& a : s.attributes) cfg.attributes.push_back(a.spec);
  return cfg;
}

TEST(Container, EmptyRoundTrip) {
  const TensorContainer c(ContainerKind::kEmbeddings);
  const TensorContainer back = deserialize_container(serialize_container(c));
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.kind(), ContainerKind::kEmbeddings);
}

TEST(Container, BitwiseRoundTripThroughFile) {
  const auto dir = testing::scratch_dir();
  TensorContainer c;
  c.add("m", Tensor::matrix({{1.5, -0.25}, {3.0, 0.0078125}}));
  Tensor v = seeded_normal({3, 1, 4}, 9, 1.0);
  round_to_float32(v);
  c.add("deep.name", v);
  save_container(c, dir / "w.vlmw");
  const TensorContainer back = load_container(dir / "w.vlmw");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.entries()[0].name, "m");
  EXPECT_EQ(back.get("m"), c.get("m"));
  EXPECT_EQ(back.get("deep.name"), v);
  EXPECT_EQ(serialize_container(back), serialize_container(c));
}

TEST(Container, TruncationNamesTheEntry) {
  TensorContainer c;
  c.add("first", Tensor({2}, 1.0));
  c.add("second", Tensor({2, 2}, 2.0));
  auto bytes = serialize_container(c);
  bytes.resize(bytes.size() - 3);
  try {
    deserialize_container(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("second"), std::string::npos) << msg;
    EXPECT_NE(msg.find("offset"), std::string::npos) << msg;
  }
}

TEST(Container, BadMagicVersionAndTrailingBytes) {
  TensorContainer c;
  c.add("x", Tensor({1}, 1.0));
  auto bytes = serialize_container(c);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_container(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(deserialize_container(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(deserialize_container(bad), FormatError);
  EXPECT_THROW(c.add("x", Tensor({1})), FormatError);
}

TEST(Container, HeaderLayout) {
  TensorContainer c;
  c.add("ab", Tensor({1}, 1.0));
  const auto b = serialize_container(c);
  // magic, version 1, count 1, name length 2, "ab", ndim 1, dim 1, one float32
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 2 + 2 + 1 + 4 + 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "VLMW");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[12], 2);
  EXPECT_EQ(b[b.size() - 1], 0x3f);  // 1.0f little-endian high byte
}

TEST(Synthetic, ZeroSamplesStillWritesPrompts) {
  const auto dir = testing::scratch_dir();
  generate_synthetic(two_region_spec(0), dir / "d");
  EXPECT_EQ(slurp(dir / "d" / "annotations.jsonl"), "");
  const auto prompts = load_prompts(dir / "d" / "prompts.json");
  ASSERT_EQ(prompts.size(), 2u);
  EXPECT_EQ(prompts[1].num_classes, 3u);
}

TEST(Synthetic, ThresholdBelowAllIntensitiesMakesEveryLabelPositive) {
  const auto dir = testing::scratch_dir();
  SyntheticSpec s = two_region_spec(12);
  s.attributes[0].thresholds = {-1.0};
  generate_synthetic(s, dir / "d");
  const Dataset d = load_dataset(dir / "d");
  for (const auto& r : d.records) EXPECT_EQ(r.labels[0], 1u);
}

TEST(Synthetic, LabelsAreRecoverableFromPixels) {
  const auto dir = testing::scratch_dir();
  const SyntheticSpec s = two_region_spec(40);
  generate_synthetic(s, dir / "d");
  const Dataset d = load_dataset(dir / "d");
  ASSERT_EQ(d.records.size(), 40u);
  std::vector<std::size_t> seen(3, 0);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const Tensor img = d.load_image(i);
    for (std::size_t a = 0; a < s.attributes.size(); ++a) {
      // Region mean recomputed here, thresholds applied by hand.
      const Region& r = s.attributes[a].region;
      double sum = 0.0;
      for (std::size_t y = r.row; y < r.row + r.height; ++y)
        for (std::size_t x = r.col; x < r.col + r.width; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) sum += img[(y * s.image_hw + x) * 3 + ch];
      const double mean = sum / static_cast<double>(r.height * r.width * 3);
      std::size_t label = 0;
      for (double t : s.attributes[a].thresholds) label += mean > t;
      EXPECT_EQ(d.records[i].labels[a], label);
      EXPECT_EQ(label_from_image(img, s.attributes[a]), label);
      if (a == 1) ++seen[label];
    }
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_GT(seen[k], 0u);
}

TEST(Synthetic, SameSeedGivesIdenticalFiles) {
  const auto dir = testing::scratch_dir();
  generate_synthetic(two_region_spec(5), dir / "a");
  generate_synthetic(two_region_spec(5), dir / "b");
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
  }
  generate_synthetic(two_region_spec(5, 4), dir / "c");
  EXPECT_NE(slurp(dir / "a" / "images" / "s000000.vlme"), slurp(dir / "c" / "images" / "s000000.vlme"));
}

TEST(Synthetic, OverlapAndBoundsRejected) {
  SyntheticSpec s = two_region_spec(1);
  s.attributes[1].region = {0, 8, 8, 8};
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("region overlap"), std::string::npos);
  }
  s = two_region_spec(1);
  s.attributes[1].region = {8, 8, 16, 8};
  EXPECT_THROW(s.validate(), ConfigError);
  s = two_region_spec(1);
  s.attributes[1].region = {4, 0, 8, 8};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Synthetic, SpecJsonIsStrict) {
  auto j = two_region_spec(2).to_json();
  EXPECT_EQ(SyntheticSpec::from_json(j).to_json(), j);
  j["colour"] = 1;
  EXPECT_THROW(SyntheticSpec::from_json(j), ConfigError);
}

TEST(Dataset, MissingDirectoryAndBadLabels) {
  const auto dir = testing::scratch_dir();
  EXPECT_THROW(load_dataset(dir / "nope"), FormatError);
  generate_synthetic(two_region_spec(2), dir / "d");
  std::ofstream(dir / "d" / "annotations.jsonl")
      << R"({"id":"x","image":"images/s000000.vlme","labels":{"top":1,"bottom":7}})" << "\n";
  EXPECT_THROW(load_dataset(dir / "d"), FormatError);
}

class EmbedCacheTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::scratch_dir();
    spec_ = two_region_spec(6);
    generate_synthetic(spec_, dir_ / "d");
    data_ = load_dataset(dir_ / "d");
  }
  Model make_model(std::size_t d = 8) const {
    return Model::create(model_for(spec_, d), Vocab::load(dir_ / "d" / "vocab.txt"), 21);
  }
  fs::path dir_;
  SyntheticSpec spec_;
  Dataset data_;
};

TEST_F(EmbedCacheTest, CachedFeaturesEqualDirectFeatures) {
  const Model m = make_model();
  const EncodedDataset direct = encode_dataset(data_, m);
  save_embed_cache(direct, m, dir_ / "c.vlme");
  const EncodedDataset cached = load_embed_cache(dir_ / "c.vlme", m, data_);
  ASSERT_EQ(cached.samples.size(), direct.samples.size());
  EXPECT_EQ(cached.text, direct.text);
  for (std::size_t i = 0; i < direct.samples.size(); ++i) {
    EXPECT_EQ(cached.samples[i].features.patches, direct.samples[i].features.patches);
    EXPECT_EQ(cached.samples[i].features.cls, direct.samples[i].features.cls);
    EXPECT_EQ(cached.samples[i].labels, direct.samples[i].labels);
  }
}

TEST_F(EmbedCacheTest, TrainingFromCacheMatchesDirectTraining) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-2;
  Model a = make_model(), b = make_model();
  train(a, encode_dataset(data_, a), cfg, LossConfig{});
  embed_cache(data_, b, dir_ / "c.vlme");  // writes
  train(b, embed_cache(data_, b, dir_ / "c.vlme"), cfg, LossConfig{});  // reads
  std::vector<Tensor> pa, pb;
  a.trainable.visit([&](const std::string&, const Tensor& t) { pa.push_back(t); });
  b.trainable.visit([&](const std::string&, const Tensor& t) { pb.push_back(t); });
  EXPECT_EQ(pa, pb);
}

TEST_F(EmbedCacheTest, DifferentWidthIsRejected) {
  const Model m8 = make_model(8);
  save_embed_cache(encode_dataset(data_, m8), m8, dir_ / "c.vlme");
  EXPECT_THROW(load_embed_cache(dir_ / "c.vlme", make_model(4), data_), CacheInvalidError);
}

TEST_F(EmbedCacheTest, OneSampleCacheLayout) {
  const Model m = make_model();
  Dataset one = data_;
  one.records.resize(1);
  save_embed_cache(encode_dataset(one, m), m, dir_ / "c.vlme");
  const TensorContainer c = load_container(dir_ / "c.vlme");
  std::size_t f_img = 0, text = 0;
  for (const auto& e : c.entries()) {
    f_img += e.name.ends_with(".f_img");
    text += e.name.starts_with("text.");
  }
  EXPECT_EQ(f_img, 1u);
  EXPECT_EQ(text, 2u);
}

TEST_F(EmbedCacheTest, EncodingIsThreadCountInvariant) {
  const Model m = make_model();
  const auto a = encode_dataset(data_, m, 1), b = encode_dataset(data_, m, 3);
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    EXPECT_EQ(a.samples[i].features.patches, b.samples[i].features.patches);
}

}  // namespace
}  // namespace vlmpar
