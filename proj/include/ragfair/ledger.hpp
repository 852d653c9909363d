#pragma once

#include <chrono>
#include <ctime>
#include <mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include "error.hpp"

namespace ragfair {

/// Append-only collection keyed by `KeyFn(item)`. Inserting an existing key
/// is an error; nothing is ever overwritten.
template <typename T, typename KeyFn>
class KeyedLedger {
 public:
  explicit KeyedLedger(KeyFn key_fn = {}) : key_fn_(std::move(key_fn)) {}

  void add(T item) {
    std::lock_guard lock(mu_);
    auto key = key_fn_(item);
    if (!keys_.insert(key).second) throw Error("duplicate ledger key '" + key + "'");
    items_.push_back(std::move(item));
  }

  bool contains(const std::string& key) const {
    std::lock_guard lock(mu_);
    return keys_.contains(key);
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

  std::vector<T> release() && { return std::move(items_); }
  const std::vector<T>& items() const& { return items_; }

 private:
  KeyFn key_fn_;
  mutable std::mutex mu_;
  std::unordered_set<std::string> keys_;
  std::vector<T> items_;
};

/// Per-query failure, recorded instead of aborting the run.
struct Failure {
  std::string query_id;
  std::string stage;
  std::string reason;
};

/// UTC wall-clock time as ISO-8601. Only used in ledgers, never in reports.
inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ragfair
