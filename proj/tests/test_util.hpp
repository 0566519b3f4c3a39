#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "orsearch/core.hpp"

namespace orsearch::testutil {

inline Embedding emb(std::initializer_list<float> values) {
  return Embedding(std::vector<float>(values));
}

inline GalleryItem make_item(std::string item_id, std::string frame_id,
                             Embedding e, double det_score = 1.0,
                             std::optional<std::string> person_id = std::nullopt,
                             BBox box = BBox{0, 0, 10, 20}) {
  GalleryItem it;
  it.item_id = std::move(item_id);
  it.frame_id = std::move(frame_id);
  it.bbox = box;
  it.det_score = det_score;
  it.embedding = std::move(e);
  it.person_id = std::move(person_id);
  return it;
}

/// Runs fn and asserts it throws orsearch::Error with the given code.
template <typename Fn>
::testing::AssertionResult throws_code(Fn&& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == code) {
      return ::testing::AssertionSuccess();
    }
    return ::testing::AssertionFailure()
           << "threw wrong code: " << e.what();
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "threw non-Error: " << e.what();
  }
  return ::testing::AssertionFailure() << "did not throw";
}

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> next{0};
    path_ = std::filesystem::temp_directory_path() /
            ("orsearch_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(next.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace orsearch::testutil
