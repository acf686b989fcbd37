#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sar {

// Symbol inventory plus the control tokens around it. Symbols take ids
// 0..n-1. The decoder's output distribution has one extra class, END = n;
// the input embedding has one extra row, START = n. PAD sits past both and
// only ever appears as an ignore marker, never as data.
class CharSet {
 public:
  static CharSet from_symbols(std::vector<std::string> symbols) {
    CharSet cs;
    cs.symbols_ = std::move(symbols);
    for (size_t i = 0; i < cs.symbols_.size(); ++i) {
      if (cs.symbols_[i].empty())
        throw std::runtime_error("charset: empty symbol at position " + std::to_string(i));
      auto [it, fresh] = cs.index_.emplace(cs.symbols_[i], int(i));
      if (!fresh)
        throw std::runtime_error("charset: duplicate symbol '" + cs.symbols_[i] + "'");
    }
    return cs;
  }

  // Digits, upper and lower case letters, then the printable ASCII
  // punctuation in code order, minus space and backquote: 93 symbols.
  static CharSet standard() {
    std::vector<std::string> syms;
    for (char c = '0'; c <= '9'; ++c) syms.emplace_back(1, c);
    for (char c = 'A'; c <= 'Z'; ++c) syms.emplace_back(1, c);
    for (char c = 'a'; c <= 'z'; ++c) syms.emplace_back(1, c);
    auto alnum = [](int c) {
      return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
    };
    for (int c = 33; c <= 126; ++c) {
      if (alnum(c) || c == '`') continue;
      syms.emplace_back(1, char(c));
    }
    return from_symbols(std::move(syms));
  }

  // One symbol per line, UTF-8, newline-terminated lines.
  static CharSet load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open charset file: " + path);
    std::vector<std::string> syms;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) {
        if (in.peek() == EOF) break;
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty symbol line");
      }
      syms.push_back(line);
    }
    if (syms.empty()) throw std::runtime_error(path + ": no symbols");
    return from_symbols(std::move(syms));
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write charset file: " + path);
    for (const auto& s : symbols_) out << s << '\n';
  }

  int size() const { return int(symbols_.size()); }
  int end_token() const { return size(); }
  int start_token() const { return size(); }
  int pad_token() const { return size() + 1; }
  int num_classes() const { return size() + 1; }     // symbols + END
  int embed_vocab() const { return size() + 1; }     // symbols + START

  const std::string& symbol(int id) const {
    if (id < 0 || id >= size())
      throw std::runtime_error("charset: symbol id " + std::to_string(id) + " out of range");
    return symbols_[size_t(id)];
  }
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool contains(const std::string& s) const { return index_.count(s) != 0; }

  int id_of(const std::string& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) throw std::runtime_error("charset: unknown symbol '" + s + "'");
    return it->second;
  }

  // Splits a UTF-8 string into code points and maps each to its id.
  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    size_t i = 0;
    while (i < text.size()) {
      const size_t n = utf8_len(uint8_t(text[i]));
      if (n == 0 || i + n > text.size())
        throw std::runtime_error("charset: invalid UTF-8 in label at byte " +
                                 std::to_string(i));
      const std::string sym = text.substr(i, n);
      auto it = index_.find(sym);
      if (it == index_.end())
        throw std::runtime_error("charset: label contains unsupported symbol '" + sym + "'");
      ids.push_back(it->second);
      i += n;
    }
    return ids;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) out += symbol(id);
    return out;
  }

  // Splits a UTF-8 string into one symbol per code point.
  static std::vector<std::string> split_utf8(const std::string& text) {
    std::vector<std::string> syms;
    size_t i = 0;
    while (i < text.size()) {
      const size_t n = utf8_len(uint8_t(text[i]));
      if (n == 0 || i + n > text.size())
        throw std::runtime_error("charset: invalid UTF-8 at byte " + std::to_string(i));
      syms.push_back(text.substr(i, n));
      i += n;
    }
    return syms;
  }

 private:
  static size_t utf8_len(uint8_t b) {
    if (b < 0x80) return 1;
    if ((b & 0xE0) == 0xC0) return 2;
    if ((b & 0xF0) == 0xE0) return 3;
    if ((b & 0xF8) == 0xF0) return 4;
    return 0;
  }

  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

inline std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  return out;
}

// Token form used by the decoder: symbol ids terminated by END.
inline std::vector<int> encode_label(const CharSet& cs, const std::string& text) {
  auto ids = cs.encode(text);
  ids.push_back(cs.end_token());
  return ids;
}

// Inverse of encode_label; END stops decoding, PAD entries are skipped.
inline std::string decode_tokens(const CharSet& cs, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id == cs.end_token()) break;
    if (id == cs.pad_token()) continue;
    out += cs.symbol(id);
  }
  return out;
}

}  // namespace sar
