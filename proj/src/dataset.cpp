#include "vlmpar/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "vlmpar/container.hpp"
#include "vlmpar/error.hpp"
#include "vlmpar/json_util.hpp"
#include "vlmpar/parallel.hpp"

namespace vlmpar {

using nlohmann::json;
using nlohmann::ordered_json;

// ---- prompts / annotations ---------------------------------------------------

std::vector<AttributeSpec> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError(path.string() + " must hold a JSON array");
  std::vector<AttributeSpec> specs;
  for (const auto& item : j) {
    check_keys(item, {"name", "prompt", "num_classes"}, "prompts.json entry");
    specs.push_back(AttributeSpec{required<std::string>(item, "name", "prompts.json entry"),
                                  required<std::string>(item, "prompt", "prompts.json entry"),
                                  required<std::size_t>(item, "num_classes", "prompts.json entry")});
  }
  validate_attributes(specs);
  return specs;
}

std::string prompts_json(const std::vector<AttributeSpec>& specs) {
  ordered_json j = ordered_json::array();
  for (const auto& s : specs)
    j.push_back(ordered_json{{"name", s.name}, {"prompt", s.prompt}, {"num_classes", s.num_classes}});
  return j.dump(2) + "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw FormatError("dataset directory not found: " + dir.string());
  }
  Dataset d;
  d.root = dir;
  d.attributes = load_prompts(dir / "prompts.json");
  std::ifstream in(dir / "annotations.jsonl");
  if (!in) throw FormatError("cannot open " + (dir / "annotations.jsonl").string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string ctx = fmt::format("annotations.jsonl line {}", line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(ctx + ": " + e.what());
    }
    try {
      check_keys(j, {"id", "image", "labels"}, ctx);
      AnnotationRecord r;
      r.id = required<std::string>(j, "id", ctx);
      r.image = required<std::string>(j, "image", ctx);
      const json& labels = j.at("labels");
      if (!labels.is_object()) throw FormatError(ctx + ": labels must be an object");
      for (const auto& a : d.attributes) {
        if (!labels.contains(a.name)) {
          throw FormatError(fmt::format("{}: missing label for '{}'", ctx, a.name));
        }
        const auto& v = labels.at(a.name);
        if (!v.is_number_unsigned() || v.get<std::size_t>() >= a.num_classes) {
          throw FormatError(fmt::format("{}: label for '{}' must be in [0, {})", ctx, a.name,
                                        a.num_classes));
        }
        r.labels.push_back(v.get<std::size_t>());
      }
      if (labels.size() != d.attributes.size()) {
        throw FormatError(ctx + ": labels name an attribute missing from prompts.json");
      }
      d.records.push_back(std::move(r));
    } catch (const ConfigError& e) {
      throw FormatError(e.what());
    }
  }
  return d;
}

Tensor Dataset::load_image(std::size_t index) const {
  return load_image_file(root / records.at(index).image);
}

Tensor load_image_file(const std::filesystem::path& path) {
  const auto c = load_container(path);
  if (c.kind() != ContainerKind::kEmbeddings) {
    throw FormatError(path.string() + " is not a VLME image container");
  }
  const Tensor& image = c.get("image");
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw FormatError(path.string() + ": image must be H x W x 3, got " +
                      shape_string(image.shape()));
  }
  return image;
}

void save_image_file(const std::filesystem::path& path, const Tensor& image) {
  TensorContainer c(ContainerKind::kEmbeddings);
  c.add("image", image);
  save_container(c, path);
}

// ---- synthetic data ----------------------------------------------------------

void SyntheticSpec::validate() const {
  if (patch_size == 0 || image_hw == 0 || image_hw % patch_size != 0) {
    throw ConfigError("image_hw must be a positive multiple of patch_size");
  }
  if (noise < 0.0) throw ConfigError("noise must be nonnegative");
  std::vector<AttributeSpec> specs;
  for (const auto& a : attributes) specs.push_back(a.spec);
  validate_attributes(specs);
  for (const auto& a : attributes) {
    const Region& r = a.region;
    if (r.height == 0 || r.width == 0) {
      throw ConfigError(fmt::format("region of '{}' is empty", a.spec.name));
    }
    if (r.row % patch_size || r.col % patch_size || r.height % patch_size ||
        r.width % patch_size) {
      throw ConfigError(fmt::format("region of '{}' is not patch-aligned", a.spec.name));
    }
    if (r.row + r.height > image_hw || r.col + r.width > image_hw) {
      throw ConfigError(fmt::format("region of '{}' is out of bounds", a.spec.name));
    }
    if (a.thresholds.size() + 1 != a.spec.num_classes) {
      throw ConfigError(fmt::format("'{}' needs {} thresholds", a.spec.name,
                                    a.spec.num_classes - 1));
    }
    if (!std::is_sorted(a.thresholds.begin(), a.thresholds.end())) {
      throw ConfigError(fmt::format("thresholds of '{}' must ascend", a.spec.name));
    }
  }
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    for (std::size_t j = i + 1; j < attributes.size(); ++j) {
      const Region& a = attributes[i].region;
      const Region& b = attributes[j].region;
      const bool disjoint = a.row + a.height <= b.row || b.row + b.height <= a.row ||
                            a.col + a.width <= b.col || b.col + b.width <= a.col;
      if (!disjoint) {
        throw ConfigError(fmt::format("region overlap between '{}' and '{}'",
                                      attributes[i].spec.name, attributes[j].spec.name));
      }
    }
  }
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  const std::string ctx = "synthetic spec";
  check_keys(j, {"num_samples", "image_hw", "patch_size", "seed", "background", "noise",
                 "attributes"},
             ctx);
  SyntheticSpec s;
  s.num_samples = required<std::size_t>(j, "num_samples", ctx);
  s.image_hw = value_or<std::size_t>(j, "image_hw", s.image_hw, ctx);
  s.patch_size = value_or<std::size_t>(j, "patch_size", s.patch_size, ctx);
  s.seed = value_or<std::size_t>(j, "seed", s.seed, ctx);
  s.background = value_or<double>(j, "background", s.background, ctx);
  s.noise = value_or<double>(j, "noise", s.noise, ctx);
  if (!j.contains("attributes") || !j.at("attributes").is_array()) {
    throw ConfigError("synthetic spec needs an 'attributes' array");
  }
  for (const auto& a : j.at("attributes")) {
    const std::string actx = "synthetic attribute";
    check_keys(a, {"name", "prompt", "num_classes", "region", "thresholds"}, actx);
    SyntheticAttribute sa;
    sa.spec.name = required<std::string>(a, "name", actx);
    sa.spec.prompt = required<std::string>(a, "prompt", actx);
    sa.spec.num_classes = value_or<std::size_t>(a, "num_classes", 2, actx);
    const json& r = a.contains("region") ? a.at("region") : json();
    check_keys(r, {"row", "col", "height", "width"}, "region of " + sa.spec.name);
    sa.region = Region{required<std::size_t>(r, "row", actx), required<std::size_t>(r, "col", actx),
                       required<std::size_t>(r, "height", actx),
                       required<std::size_t>(r, "width", actx)};
    if (a.contains("thresholds")) {
      sa.thresholds = required<std::vector<double>>(a, "thresholds", actx);
    } else {
      for (std::size_t k = 1; k < sa.spec.num_classes; ++k)
        sa.thresholds.push_back(static_cast<double>(k) / static_cast<double>(sa.spec.num_classes));
    }
    s.attributes.push_back(std::move(sa));
  }
  s.validate();
  return s;
}

json SyntheticSpec::to_json() const {
  json attrs = json::array();
  for (const auto& a : attributes) {
    attrs.push_back({{"name", a.spec.name},
                     {"prompt", a.spec.prompt},
                     {"num_classes", a.spec.num_classes},
                     {"region",
                      {{"row", a.region.row},
                       {"col", a.region.col},
                       {"height", a.region.height},
                       {"width", a.region.width}}},
                     {"thresholds", a.thresholds}});
  }
  return json{{"num_samples", num_samples}, {"image_hw", image_hw},     {"patch_size", patch_size},
              {"seed", seed},               {"background", background}, {"noise", noise},
              {"attributes", attrs}};
}

namespace {

double region_mean(const Tensor& image, const Region& r) {
  const std::size_t width = image.dim(1);
  double sum = 0.0;
  for (std::size_t y = r.row; y < r.row + r.height; ++y)
    for (std::size_t x = r.col; x < r.col + r.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) sum += image[(y * width + x) * 3 + c];
  return sum / static_cast<double>(r.height * r.width * 3);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::size_t label_from_image(const Tensor& image, const SyntheticAttribute& attribute) {
  const double mean = region_mean(image, attribute.region);
  std::size_t label = 0;
  for (double t : attribute.thresholds)
    if (mean > t) ++label;
  return label;
}

void generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out / "images");

  std::vector<AttributeSpec> specs;
  std::vector<std::string> prompts;
  for (const auto& a : spec.attributes) {
    specs.push_back(a.spec);
    prompts.push_back(a.spec.prompt);
  }
  write_text_file(out / "prompts.json", prompts_json(specs));
  Vocab::from_texts(prompts).save(out / "vocab.txt");

  const std::size_t hw = spec.image_hw;
  std::ostringstream annotations;
  for (std::size_t s = 0; s < spec.num_samples; ++s) {
    Prng rng(derive_seed(spec.seed, fmt::format("sample{}", s)));
    Tensor image({hw, hw, 3});
    for (auto& v : image.data()) v = clamp01(spec.background + spec.noise * (rng.uniform() - 0.5));
    for (const auto& a : spec.attributes) {
      // Aim for the middle half of a uniformly drawn class band; the label is
      // then read back from the pixels by the rule, never from the draw.
      const std::size_t k = a.spec.num_classes;
      const std::size_t target = rng.below(k);
      const double lo = clamp01(target == 0 ? 0.0 : a.thresholds[target - 1]);
      const double hi = std::max(lo, clamp01(target == k - 1 ? 1.0 : a.thresholds[target]));
      const double level = lo + (hi - lo) * (0.25 + 0.5 * rng.uniform());
      const Region& r = a.region;
      for (std::size_t y = r.row; y < r.row + r.height; ++y)
        for (std::size_t x = r.col; x < r.col + r.width; ++x)
          for (std::size_t c = 0; c < 3; ++c)
            image[(y * hw + x) * 3 + c] = clamp01(level + spec.noise * (rng.uniform() - 0.5));
    }
    round_to_float32(image);

    const std::string id = fmt::format("s{:06d}", s);
    const std::string rel = "images/" + id + ".vlme";
    save_image_file(out / rel, image);
    ordered_json labels = ordered_json::object();
    for (const auto& a : spec.attributes) labels[a.spec.name] = label_from_image(image, a);
    annotations << ordered_json{{"id", id}, {"image", rel}, {"labels", labels}}.dump() << '\n';
  }
  write_text_file(out / "annotations.jsonl", annotations.str());
}

// ---- encoded features --------------------------------------------------------

EncodedDataset encode_dataset(const Dataset& data, const Model& model, std::size_t threads) {
  if (data.attributes.size() != model.config.attributes.size()) {
    throw ConfigError("dataset and model disagree on the attribute count");
  }
  EncodedDataset enc;
  enc.text = encode_prompts(model);
  enc.samples.resize(data.records.size());
  parallel_for(data.records.size(), threads, [&](std::size_t i) {
    const auto& r = data.records[i];
    enc.samples[i] = EncodedSample{r.id, encode_image(model, data.load_image(i)), r.labels};
  });
  return enc;
}

namespace {

Tensor cache_meta(const Model& model, std::size_t num_samples) {
  const std::uint64_t sum = model.encoders.checksum();
  Tensor meta({8});
  meta[0] = static_cast<double>(model.config.encoder.d_model);
  meta[1] = static_cast<double>(model.config.encoder.num_patches());
  meta[2] = static_cast<double>(model.config.attributes.size());
  meta[3] = static_cast<double>(num_samples);
  for (int i = 0; i < 4; ++i) meta[4 + i] = static_cast<double>((sum >> (16 * i)) & 0xFFFF);
  return meta;
}

}  // namespace

void save_embed_cache(const EncodedDataset& encoded, const Model& model,
                      const std::filesystem::path& path) {
  TensorContainer c(ContainerKind::kEmbeddings);
  c.add("meta", cache_meta(model, encoded.samples.size()));
  for (std::size_t i = 0; i < encoded.text.size(); ++i)
    c.add(fmt::format("text.{}", i), encoded.text[i]);
  for (std::size_t k = 0; k < encoded.samples.size(); ++k) {
    c.add(fmt::format("sample.{}.cls", k), encoded.samples[k].features.cls);
    c.add(fmt::format("sample.{}.f_img", k), encoded.samples[k].features.patches);
  }
  save_container(c, path);
}

EncodedDataset load_embed_cache(const std::filesystem::path& path, const Model& model,
                                const Dataset& data) {
  const TensorContainer c = load_container(path);
  const Tensor* meta = c.find("meta");
  if (c.kind() != ContainerKind::kEmbeddings || !meta || meta->size() != 8) {
    throw CacheInvalidError(path.string() + " is not an embedding cache");
  }
  const Tensor expected = cache_meta(model, data.records.size());
  const char* fields[] = {"d_model", "patch count", "attribute count", "sample count",
                          "encoder checksum", "encoder checksum", "encoder checksum",
                          "encoder checksum"};
  for (std::size_t i = 0; i < 8; ++i) {
    if ((*meta)[i] != expected[i]) {
      throw CacheInvalidError(fmt::format("{}: {} is {} but the configuration needs {}",
                                          path.string(), fields[i], (*meta)[i], expected[i]));
    }
  }
  const std::size_t d = model.config.encoder.d_model;
  const std::size_t n = model.config.encoder.num_patches();
  EncodedDataset enc;
  try {
    for (std::size_t i = 0; i < model.config.attributes.size(); ++i) {
      const Tensor& t = c.get(fmt::format("text.{}", i));
      if (t.rank() != 2 || t.cols() != d || t.rows() != model.prompt_ids[i].size()) {
        throw CacheInvalidError(fmt::format("text.{} has shape {}", i, shape_string(t.shape())));
      }
      enc.text.push_back(t);
    }
    for (std::size_t k = 0; k < data.records.size(); ++k) {
      EncodedSample s;
      s.id = data.records[k].id;
      s.labels = data.records[k].labels;
      s.features.cls = c.get(fmt::format("sample.{}.cls", k));
      s.features.patches = c.get(fmt::format("sample.{}.f_img", k));
      if (s.features.cls.shape() != Shape{d} || s.features.patches.shape() != Shape{n, d}) {
        throw CacheInvalidError(fmt::format("sample {} has mismatched feature shapes", k));
      }
      enc.samples.push_back(std::move(s));
    }
  } catch (const FormatError& e) {
    throw CacheInvalidError(e.what());
  }
  if (c.size() != 1 + enc.text.size() + 2 * enc.samples.size()) {
    throw CacheInvalidError(path.string() + " holds unexpected extra entries");
  }
  return enc;
}

EncodedDataset embed_cache(const Dataset& data, const Model& model,
                           const std::filesystem::path& path, std::size_t threads) {
  if (std::filesystem::exists(path)) return load_embed_cache(path, model, data);
  EncodedDataset enc = encode_dataset(data, model, threads);
  save_embed_cache(enc, model, path);
  return enc;
}

}  // namespace vlmpar
