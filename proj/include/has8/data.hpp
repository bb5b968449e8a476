#pragma once

// MNIST (IDX) and CIFAR-10 (binary batch) readers, splits and seeded batching.
// Pixels are kept as bytes and scaled by 1/255 when a batch tensor is built,
// so every image value lies in [0,1].

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "has8/tensor.hpp"

namespace has8 {

struct Dataset {
  std::string name;
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t num_classes = 10;
  std::vector<std::uint8_t> pixels;  // [N, C, H, W]
  std::vector<std::uint8_t> labels;  // [N]
  std::uint64_t checksum = 0;        // FNV-1a over pixels then labels

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }
};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

// Big-endian IDX files; magics 0x00000803 (images) and 0x00000801 (labels).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
// split: "train" | "test"; reads the standard file names from `dir`.
Dataset load_mnist(const std::string& dir, const std::string& split);
// 3073-byte records: label byte then 3072 channel-major pixels.
Dataset load_cifar10_files(const std::vector<std::string>& paths);
// split "train" reads data_batch_1..5.bin, "test" reads test_batch.bin.
Dataset load_cifar10(const std::string& dir, const std::string& split);

// The first `count` samples.
Dataset subset(const Dataset& ds, std::size_t count);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Seeded permutation of 0..n-1; the first 80% (rounded down) is train.
Split split_80_20(std::size_t n, std::uint64_t seed);

// Shuffles `indices` with a generator keyed by (seed, epoch) and cuts it into
// batches; the final partial batch is kept.
std::vector<std::vector<std::size_t>> batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch);

std::vector<std::size_t> all_indices(const Dataset& ds);

// [B, C, H, W] in [0,1]. resize > 0 scales every image to resize x resize
// with nearest-neighbour sampling.
template <typename T>
Tensor<T> batch_images(const Dataset& ds, std::span<const std::size_t> indices, std::size_t resize = 0);
std::vector<std::uint8_t> batch_labels(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace has8
