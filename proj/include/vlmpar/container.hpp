#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vlmpar/tensor.hpp"

namespace vlmpar {

/// Binary layout (all integers little-endian):
///
///   magic[4] "VLMW" | "VLME", version u32, entry count u32, then per entry
///   name length u16, name bytes, ndim u8, dims u32 x ndim,
///   payload float32 x product(dims), row-major.
enum class ContainerKind { kWeights, kEmbeddings };

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered, uniquely named collection of tensors.
class TensorContainer {
 public:
  explicit TensorContainer(ContainerKind kind = ContainerKind::kWeights) : kind_(kind) {}

  ContainerKind kind() const { return kind_; }

  /// Throws FormatError if `name` is already present.
  void add(std::string name, Tensor tensor);

  const Tensor* find(const std::string& name) const;
  /// Throws FormatError when absent.
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  ContainerKind kind_;
  std::vector<NamedTensor> entries_;
};

std::vector<std::uint8_t> serialize_container(const TensorContainer& c);
/// Parses bytes; errors carry the byte offset and, past the header, the entry name.
TensorContainer deserialize_container(std::span<const std::uint8_t> bytes);

void save_container(const TensorContainer& c, const std::filesystem::path& path);
TensorContainer load_container(const std::filesystem::path& path);

/// Whole-file helpers shared by the writers in this project.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vlmpar
