#include "vlmpar/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "vlmpar/error.hpp"

namespace vlmpar {

void TensorContainer::add(std::string name, Tensor tensor) {
  if (contains(name)) throw FormatError("duplicate container entry '" + name + "'");
  if (name.size() > UINT16_MAX) throw FormatError("entry name too long: " + name);
  entries_.push_back(NamedTensor{std::move(name), std::move(tensor)});
}

const Tensor* TensorContainer::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e.tensor;
  return nullptr;
}

const Tensor& TensorContainer::get(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw FormatError("container has no entry '" + name + "'");
  return *t;
}

namespace {

constexpr char kMagicWeights[4] = {'V', 'L', 'M', 'W'};
constexpr char kMagicEmbeddings[4] = {'V', 'L', 'M', 'E'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void set_context(std::string ctx) { context_ = std::move(ctx); }
  std::size_t offset() const { return pos_; }

  std::uint8_t u8() { return need(1), in_[pos_++]; }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(fmt::format("truncated container at byte offset {}{}", pos_, context_));
    }
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace

std::vector<std::uint8_t> serialize_container(const TensorContainer& c) {
  Writer w;
  w.bytes(c.kind() == ContainerKind::kWeights ? kMagicWeights : kMagicEmbeddings, 4);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(c.size()));
  for (const auto& e : c.entries()) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    const auto& shape = e.tensor.shape();
    if (shape.size() > UINT8_MAX) throw FormatError("too many axes in entry '" + e.name + "'");
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) {
      if (d > UINT32_MAX) throw FormatError("axis too large in entry '" + e.name + "'");
      w.u32(static_cast<std::uint32_t>(d));
    }
    for (double v : e.tensor.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

TensorContainer deserialize_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::string magic = r.str(4);
  ContainerKind kind;
  if (std::memcmp(magic.data(), kMagicWeights, 4) == 0) {
    kind = ContainerKind::kWeights;
  } else if (std::memcmp(magic.data(), kMagicEmbeddings, 4) == 0) {
    kind = ContainerKind::kEmbeddings;
  } else {
    throw FormatError("bad magic at byte offset 0");
  }
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw FormatError(fmt::format("unsupported version {} at byte offset 4", version));
  }
  const std::uint32_t count = r.u32();
  TensorContainer c(kind);
  for (std::uint32_t i = 0; i < count; ++i) {
    r.set_context(fmt::format(" (entry #{} header)", i));
    const std::size_t entry_offset = r.offset();
    const std::string name = r.str(r.u16());
    r.set_context(fmt::format(" (entry '{}')", name));
    const std::uint8_t ndim = r.u8();
    if (ndim == 0) {
      throw FormatError(fmt::format("entry '{}' at byte offset {} has no axes", name, entry_offset));
    }
    Shape shape(ndim);
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) {
        throw FormatError(
            fmt::format("entry '{}' at byte offset {} has a zero axis", name, entry_offset));
      }
    }
    const std::size_t n = shape_product(shape);
    r.need(4 * n);
    std::vector<double> data(n);
    for (auto& v : data) v = static_cast<double>(r.f32());
    if (c.contains(name)) {
      throw FormatError(
          fmt::format("duplicate entry '{}' at byte offset {}", name, entry_offset));
    }
    c.add(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) {
    throw FormatError(fmt::format("trailing bytes after last entry at byte offset {}", r.offset()));
  }
  return c;
}

void save_container(const TensorContainer& c, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_container(c));
}

TensorContainer load_container(const std::filesystem::path& path) {
  return deserialize_container(read_file_bytes(path));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace vlmpar
