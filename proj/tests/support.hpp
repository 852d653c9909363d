#pragma once

// Shared fixtures: scratch directories and synthetic-corpus audit configs.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <string>

#include "ragfair/ragfair.hpp"

#ifndef RAGFAIR_SOURCE_DIR
#define RAGFAIR_SOURCE_DIR "."
#endif

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path source_dir() { return RAGFAIR_SOURCE_DIR; }

/// A fresh directory removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("ragfair-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Writes the corpus and category files of a synthetic spec into `dir`.
inline ragfair::synth::CorpusSpec materialize(const ragfair::synth::CorpusSpec& spec, const fs::path& dir) {
  ragfair::io::atomic_write(dir / "corpus.jsonl",
                            ragfair::io::to_jsonl(ragfair::synth::generate_corpus(spec), ragfair::document_to_json));
  ragfair::io::atomic_write(dir / "categories.json",
                            ragfair::categories_to_json(ragfair::synth::spec_categories(spec)).dump(2) + "\n");
  return spec;
}

inline ragfair::synth::CorpusSpec load_spec(const std::string& name) {
  return ragfair::synth::spec_from_json(ragfair::io::read_json(source_dir() / "data" / name));
}

/// Mock-everything config over a materialized synthetic corpus in `dir`.
inline ragfair::RunConfig mock_config(const fs::path& dir, const std::string& topic, const std::string& task = "article") {
  ragfair::json j = {{"corpus", "corpus.jsonl"}, {"categories", "categories.json"}, {"topic", topic},
                     {"task", task},             {"runs_dir", "runs"},              {"cache", "cache/generations.jsonl"}};
  return ragfair::parse_config(j, dir);
}

/// Every file below `root` (relative path -> bytes), optionally skipping one name.
inline std::map<std::string, std::string> snapshot(const fs::path& root, const std::string& skip_name = "") {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == skip_name) continue;
    out[fs::relative(e.path(), root).generic_string()] = ragfair::io::read_file(e.path());
  }
  return out;
}

}  // namespace testsupport
