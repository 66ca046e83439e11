#include "zsdiff/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "zsdiff/error.hpp"

namespace zsdiff {
namespace {

const std::string kPadSymbol = "<pad>";
const std::string kUnknownSymbol = "<unk>";

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  std::sort(symbols_.begin(), symbols_.end());
  symbols_.erase(std::unique(symbols_.begin(), symbols_.end()), symbols_.end());
  for (size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty() || symbols_[i] == kPadSymbol || symbols_[i] == kUnknownSymbol) {
      throw InputError("reserved or empty vocabulary symbol");
    }
    index_.emplace(symbols_[i], static_cast<int64_t>(i) + 1);
  }
}

Vocabulary Vocabulary::default_characters() {
  std::vector<std::string> symbols;
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  for (char c : std::string(" ',.?!-")) symbols.emplace_back(1, c);
  return Vocabulary(std::move(symbols));
}

int64_t Vocabulary::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? unknown_id() : it->second;
}

const std::string& Vocabulary::symbol(int64_t id) const {
  if (id == kPadId) return kPadSymbol;
  if (id == unknown_id()) return kUnknownSymbol;
  if (id < 0 || id > unknown_id()) throw InputError("token id out of range: " + std::to_string(id));
  return symbols_[static_cast<size_t>(id - 1)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write vocabulary " + path.string());
  out << kPadSymbol << '\n';
  for (const auto& s : symbols_) out << (s == "\n" ? "\\n" : s) << '\n';
  out << kUnknownSymbol << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line == "\\n" ? "\n" : line);
  if (lines.size() < 2 || lines.front() != kPadSymbol || lines.back() != kUnknownSymbol) {
    throw RuntimeError("malformed vocabulary file " + path.string());
  }
  Vocabulary vocab(std::vector<std::string>(lines.begin() + 1, lines.end() - 1));
  if (static_cast<size_t>(vocab.size()) != lines.size()) {
    throw RuntimeError("vocabulary file is not a sorted unique list: " + path.string());
  }
  return vocab;
}

std::string normalize_text(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
  }
  return out;
}

std::vector<std::string> split_utf8(const std::string& text) {
  std::vector<std::string> out;
  for (size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    size_t len = 1;
    if ((lead & 0xE0) == 0xC0) len = 2;
    else if ((lead & 0xF0) == 0xE0) len = 3;
    else if ((lead & 0xF8) == 0xF0) len = 4;
    len = std::min(len, text.size() - i);
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<int64_t> tokenize(const std::string& text, const Vocabulary& vocab) {
  const auto normalized = normalize_text(text);
  if (normalized.empty()) throw InputError("tokenize: empty text");
  std::vector<int64_t> ids;
  for (const auto& symbol : split_utf8(normalized)) ids.push_back(vocab.id(symbol));
  return ids;
}

std::string detokenize(const std::vector<int64_t>& ids, const Vocabulary& vocab) {
  if (ids.empty()) throw InputError("detokenize: empty id sequence");
  std::string out;
  for (auto id : ids) {
    if (id == Vocabulary::kPadId) throw InputError("detokenize: padding id inside sequence");
    out += vocab.symbol(id);
  }
  return out;
}

}  // namespace zsdiff
