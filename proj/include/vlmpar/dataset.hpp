#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmpar/heads.hpp"
#include "vlmpar/model.hpp"
#include "vlmpar/tensor.hpp"

namespace vlmpar {

/// One annotations.jsonl line. Labels are stored in attribute order.
struct AnnotationRecord {
  std::string id;
  std::string image;  // path relative to the dataset root
  std::vector<std::size_t> labels;
};

/// A dataset directory: prompts.json, annotations.jsonl, images/*.vlme.
/// prompts.json fixes the attribute order for everything downstream.
struct Dataset {
  std::filesystem::path root;
  std::vector<AttributeSpec> attributes;
  std::vector<AnnotationRecord> records;

  Tensor load_image(std::size_t index) const;
};

std::vector<AttributeSpec> load_prompts(const std::filesystem::path& path);
std::string prompts_json(const std::vector<AttributeSpec>& specs);

Dataset load_dataset(const std::filesystem::path& dir);

/// Image files are VLME containers holding one H x W x 3 tensor "image".
Tensor load_image_file(const std::filesystem::path& path);
void save_image_file(const std::filesystem::path& path, const Tensor& image);

// ---- synthetic data ----------------------------------------------------------

struct Region {
  std::size_t row = 0, col = 0, height = 0, width = 0;
};

struct SyntheticAttribute {
  AttributeSpec spec;
  Region region;
  /// num_classes - 1 ascending cut points on the region mean intensity.
  std::vector<double> thresholds;
};

struct SyntheticSpec {
  std::size_t num_samples = 0;
  std::size_t image_hw = 32;
  std::size_t patch_size = 8;
  std::uint64_t seed = 0;
  double background = 0.5;
  double noise = 0.1;
  std::vector<SyntheticAttribute> attributes;

  /// Throws ConfigError for misaligned, out-of-bounds or overlapping regions.
  void validate() const;

  static SyntheticSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// The labelling rule: the number of thresholds the region mean exceeds.
std::size_t label_from_image(const Tensor& image, const SyntheticAttribute& attribute);

/// Writes images/, annotations.jsonl, prompts.json and vocab.txt under `out`.
void generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out);

// ---- encoded features --------------------------------------------------------

struct EncodedSample {
  std::string id;
  ImageFeatures features;
  std::vector<std::size_t> labels;
};

/// Frozen-encoder outputs: per-attribute prompt features plus per-sample
/// image features.
struct EncodedDataset {
  std::vector<Tensor> text;
  std::vector<EncodedSample> samples;
};

/// Runs the encoders over every image. Work is split over `threads` but each
/// sample's result lands in its own slot, so output is thread-count invariant.
EncodedDataset encode_dataset(const Dataset& data, const Model& model, std::size_t threads = 1);

/// Cache layout (VLME): "meta" [d_model, N, A, samples, checksum as 4 x u16],
/// "text.<i>", "sample.<k>.cls", "sample.<k>.f_img".
void save_embed_cache(const EncodedDataset& encoded, const Model& model,
                      const std::filesystem::path& path);

/// Loads a cache and checks it against the model and dataset; mismatches
/// raise CacheInvalidError.
EncodedDataset load_embed_cache(const std::filesystem::path& path, const Model& model,
                                const Dataset& data);

/// Loads `path` when it exists, otherwise encodes and writes it.
EncodedDataset embed_cache(const Dataset& data, const Model& model,
                           const std::filesystem::path& path, std::size_t threads = 1);

}  // namespace vlmpar
