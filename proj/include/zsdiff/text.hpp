#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace zsdiff {

/// Symbol inventory. Id 0 is padding, ids 1..k are the sorted symbols, k+1 is unknown.
/// Symbols are UTF-8 code points (characters) by default; a phoneme inventory can be
/// loaded the same way since a symbol is any string.
class Vocabulary {
 public:
  static constexpr int64_t kPadId = 0;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> symbols);

  /// Lowercase a-z, space and basic punctuation.
  static Vocabulary default_characters();

  int64_t unknown_id() const { return static_cast<int64_t>(symbols_.size()) + 1; }
  /// Including pad and unknown.
  int64_t size() const { return static_cast<int64_t>(symbols_.size()) + 2; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  int64_t id(const std::string& symbol) const;
  const std::string& symbol(int64_t id) const;

  /// One symbol per line, line number = id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int64_t> index_;
};

/// Collapses whitespace runs to one space, trims, lowercases ASCII.
std::string normalize_text(const std::string& text);

/// Splits UTF-8 text into code points.
std::vector<std::string> split_utf8(const std::string& text);

std::vector<int64_t> tokenize(const std::string& text, const Vocabulary& vocab);
std::string detokenize(const std::vector<int64_t>& ids, const Vocabulary& vocab);

}  // namespace zsdiff
