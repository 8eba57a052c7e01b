#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsflow/io/binary.hpp"

namespace zsflow::textenc {

class TextError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline const std::string kPad = "<pad>";
inline const std::string kBlank = "<blank>";

/// Ordered symbol list: padding and blank first, then the characters in byte order.
class Vocabulary {
 public:
  Vocabulary() : symbols_{kPad, kBlank} { reindex(); }
  explicit Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.size() < 2 || symbols_[0] != kPad || symbols_[1] != kBlank)
      throw TextError("vocabulary must start with " + kPad + " and " + kBlank);
    reindex();
  }

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  bool operator==(const Vocabulary& o) const { return symbols_ == o.symbols_; }

  bool contains(char c) const { return index_.count(std::string(1, c)) > 0; }

  /// Lowercases, then maps characters to ids; unknown characters are an error.
  std::vector<std::size_t> encode(const std::string& text) const {
    if (text.empty()) throw TextError("empty text");
    std::vector<std::size_t> ids;
    for (char raw : text) {
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
      auto it = index_.find(std::string(1, c));
      if (it == index_.end()) throw TextError(std::string("unknown character '") + raw + "' not in vocabulary");
      ids.push_back(it->second);
    }
    return ids;
  }

  /// One symbol per line.
  void save(const std::filesystem::path& path) const {
    io::write_atomic(path, [&](std::ostream& os) {
      for (const auto& s : symbols_) os << s << '\n';
    });
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw TextError("cannot open vocabulary " + path.string());
    std::vector<std::string> syms;
    std::string line;
    while (std::getline(is, line)) syms.push_back(line);
    return Vocabulary(std::move(syms));
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < symbols_.size(); ++i)
      if (!index_.emplace(symbols_[i], i).second) throw TextError("duplicate vocabulary symbol '" + symbols_[i] + "'");
  }

  std::vector<std::string> symbols_;
  std::map<std::string, std::size_t> index_;
};

/// Union of the per-language alphabets (lowercased) plus padding/blank symbols.
inline Vocabulary char_vocab(const std::vector<std::string>& alphabets) {
  std::set<char> chars;
  for (const auto& a : alphabets)
    for (char c : a) {
      if (c == '\n' || c == '\r') continue;
      chars.insert(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  std::vector<std::string> syms{kPad, kBlank};
  for (char c : chars) syms.emplace_back(1, c);
  return Vocabulary(std::move(syms));
}

}  // namespace zsflow::textenc
