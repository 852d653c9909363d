#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ragfair::text {

namespace detail {

inline bool is_token_byte(unsigned char c) noexcept {
  // Bytes >= 0x80 belong to UTF-8 sequences and are kept inside words.
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline bool is_space(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace detail

/// Shared tokenizer for retrieval and scoring: ASCII-lowercased, split on
/// every non-alphanumeric byte. No stemming, no stopwords.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : s) {
    if (detail::is_token_byte(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Whitespace-delimited tokens, as views into `s`.
inline std::vector<std::string_view> whitespace_tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && detail::is_space(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !detail::is_space(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::size_t word_count(std::string_view s) { return whitespace_tokens(s).size(); }

/// First `n` whitespace tokens of `s`, joined by single spaces.
inline std::string first_words(std::string_view s, std::size_t n) {
  auto toks = whitespace_tokens(s);
  std::string out;
  for (std::size_t i = 0; i < std::min(n, toks.size()); ++i) {
    if (i) out.push_back(' ');
    out.append(toks[i]);
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && detail::is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && detail::is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

/// Length of the longest common subsequence of two token sequences.
/// O(|a|·|b|) time, O(min) memory.
template <typename T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (const auto& x : a) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = (x == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <typename T>
std::size_t lcs_length(const std::vector<T>& a, const std::vector<T>& b) {
  return lcs_length(std::span<const T>(a), std::span<const T>(b));
}

/// Neumaier-compensated accumulator. Results depend only on the order of
/// `add` calls, so a fixed iteration order gives bit-stable sums.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <typename Range>
double compensated_sum(const Range& r) {
  CompensatedSum s;
  for (double x : r) s.add(x);
  return s.value();
}

}  // namespace ragfair::text
