#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <atomic>
#include <fstream>
#include <optional>
#include <unistd.h>
#include <random>
#include <string>

#include "dishforge/error.hpp"
#include "dishforge/types.hpp"

namespace dishforge::testkit {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dishforge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

/// Runs `fn` and returns the Errc it throws; fails the test if nothing is thrown.
template <typename Fn>
std::optional<Errc> error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline ImageRef fake_ref(char fill, std::uint32_t w = 64, std::uint32_t h = 64) {
  return ImageRef{std::string(64, fill), w, h, MediaType::Png};
}

}  // namespace dishforge::testkit
