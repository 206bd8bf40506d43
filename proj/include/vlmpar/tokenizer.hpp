#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace vlmpar {

/// Token -> id table. Id 0 is reserved for out-of-vocabulary tokens.
class Vocab {
 public:
  /// tokens[0] is the OOV token; ids are list positions.
  explicit Vocab(std::vector<std::string> tokens);

  /// One token per line, line number = id.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// "<unk>" followed by the sorted distinct tokens of `texts`.
  static Vocab from_texts(const std::vector<std::string>& texts);

  std::uint32_t id(const std::string& token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Lowercases and splits on whitespace; every punctuation character becomes
/// a token of its own. Throws InputError when no token results.
std::vector<std::string> split_tokens(const std::string& text);

/// split_tokens mapped through `vocab`, truncated to `max_tokens`.
std::vector<std::uint32_t> tokenize(const std::string& text, const Vocab& vocab,
                                    std::size_t max_tokens);

}  // namespace vlmpar
