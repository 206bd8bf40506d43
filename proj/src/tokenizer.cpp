#include "vlmpar/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "vlmpar/error.hpp"

namespace vlmpar {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw InputError("vocabulary needs at least the OOV token");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::uint32_t>(i)).second) {
      throw InputError(fmt::format("duplicate vocabulary token '{}' at line {}", tokens_[i], i));
    }
  }
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::from_texts(const std::vector<std::string>& texts) {
  std::set<std::string> distinct;
  for (const auto& t : texts) {
    auto toks = split_tokens(t);
    distinct.insert(toks.begin(), toks.end());
  }
  std::vector<std::string> tokens{"<unk>"};
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocab(std::move(tokens));
}

std::uint32_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 0u : it->second;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  if (out.empty()) throw InputError("cannot tokenize empty text");
  return out;
}

std::vector<std::uint32_t> tokenize(const std::string& text, const Vocab& vocab,
                                    std::size_t max_tokens) {
  const auto toks = split_tokens(text);
  std::vector<std::uint32_t> ids;
  ids.reserve(std::min(toks.size(), max_tokens));
  for (std::size_t i = 0; i < toks.size() && i < max_tokens; ++i) ids.push_back(vocab.id(toks[i]));
  return ids;
}

}  // namespace vlmpar
