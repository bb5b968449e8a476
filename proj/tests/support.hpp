#pragma once

// Helpers shared by the unit and acceptance tests: seeded generators for
// tensors and shapes, scratch directories and synthetic dataset files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "has8/tensor.hpp"

namespace has8::test {

using Gen = std::mt19937_64;

inline std::size_t uniform_size(Gen& g, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
}

inline double uniform(Gen& g, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }

inline Shape random_shape(Gen& g, std::size_t max_rank, std::size_t max_extent) {
  Shape s(uniform_size(g, 1, max_rank));
  for (auto& d : s) d = uniform_size(g, 1, max_extent);
  return s;
}

template <typename T>
Tensor<T> random_tensor(Gen& g, Shape shape, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(uniform(g, lo, hi));
  return Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("has8_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

// IDX image and label files for `n` images of rows x cols. Image i has pixel
// p equal to (i * 31 + p * 7) mod 256 and label i mod 10.
struct SyntheticIdx {
  std::vector<std::uint8_t> images, labels;
};

inline SyntheticIdx synthetic_idx(std::size_t n, std::size_t rows, std::size_t cols) {
  SyntheticIdx out;
  put_be32(out.images, 0x00000803);
  put_be32(out.images, static_cast<std::uint32_t>(n));
  put_be32(out.images, static_cast<std::uint32_t>(rows));
  put_be32(out.images, static_cast<std::uint32_t>(cols));
  put_be32(out.labels, 0x00000801);
  put_be32(out.labels, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < rows * cols; ++p) out.images.push_back(static_cast<std::uint8_t>((i * 31 + p * 7) % 256));
    out.labels.push_back(static_cast<std::uint8_t>(i % 10));
  }
  return out;
}

// Writes train and t10k IDX pairs into `dir` under the standard MNIST names.
// Each image is a class-dependent bar pattern plus noise, so small models can
// learn it.
inline void write_toy_mnist(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test,
                            std::size_t side, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  Gen g(seed);
  auto make = [&](std::size_t n, const std::string& prefix) {
    std::vector<std::uint8_t> img, lab;
    put_be32(img, 0x00000803);
    put_be32(img, static_cast<std::uint32_t>(n));
    put_be32(img, static_cast<std::uint32_t>(side));
    put_be32(img, static_cast<std::uint32_t>(side));
    put_be32(lab, 0x00000801);
    put_be32(lab, static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t label = uniform_size(g, 0, 9);
      lab.push_back(static_cast<std::uint8_t>(label));
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          const bool on = (r * 10 / side) == label || (c * 10 / side) == (9 - label);
          const double v = (on ? 200.0 : 20.0) + uniform(g, -20.0, 20.0);
          img.push_back(static_cast<std::uint8_t>(v));
        }
      }
    }
    write_bytes((dir / (prefix + "-images-idx3-ubyte")).string(), img);
    write_bytes((dir / (prefix + "-labels-idx1-ubyte")).string(), lab);
  };
  make(n_train, "train");
  make(n_test, "t10k");
}

}  // namespace has8::test
