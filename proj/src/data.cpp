#include "has8/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "has8/errors.hpp"

namespace has8 {
namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t offset, const std::string& path) {
  if (offset + 4 > b.size()) {
    throw DataError("'" + path + "' truncated at offset " + std::to_string(offset) + " (header)");
  }
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void finish(Dataset& ds) {
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] >= ds.num_classes) {
      throw DataError(ds.name + ": label " + std::to_string(ds.labels[i]) + " at record " + std::to_string(i) +
                      " exceeds " + std::to_string(ds.num_classes) + " classes");
    }
  }
  ds.checksum = fnv1a(ds.labels, fnv1a(ds.pixels));
}

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (be32(img, 0, images_path) != kIdxImages) {
    throw DataError("'" + images_path + "': bad IDX image magic at offset 0");
  }
  if (be32(lab, 0, labels_path) != kIdxLabels) {
    throw DataError("'" + labels_path + "': bad IDX label magic at offset 0");
  }
  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t n_labels = be32(lab, 4, labels_path);
  if (n != n_labels) {
    throw DataError("record-count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) +
                    " labels (offset 4)");
  }
  const std::size_t need_img = 16 + n * rows * cols;
  if (img.size() < need_img) {
    throw DataError("'" + images_path + "' truncated at offset " + std::to_string(img.size()) + ", expected " +
                    std::to_string(need_img) + " bytes");
  }
  if (lab.size() < 8 + n) {
    throw DataError("'" + labels_path + "' truncated at offset " + std::to_string(lab.size()) + ", expected " +
                    std::to_string(8 + n) + " bytes");
  }
  Dataset ds;
  ds.name = "mnist";
  ds.channels = 1;
  ds.height = rows;
  ds.width = cols;
  ds.pixels.assign(img.begin() + 16, img.begin() + static_cast<std::ptrdiff_t>(need_img));
  ds.labels.assign(lab.begin() + 8, lab.begin() + static_cast<std::ptrdiff_t>(8 + n));
  finish(ds);
  return ds;
}

Dataset load_mnist(const std::string& dir, const std::string& split) {
  std::string prefix;
  if (split == "train") {
    prefix = "train";
  } else if (split == "test") {
    prefix = "t10k";
  } else {
    throw ValueError("unknown MNIST split '" + split + "' (expected train or test)");
  }
  const std::filesystem::path base(dir);
  return load_idx((base / (prefix + "-images-idx3-ubyte")).string(),
                  (base / (prefix + "-labels-idx1-ubyte")).string());
}

Dataset load_cifar10_files(const std::vector<std::string>& paths) {
  Dataset ds;
  ds.name = "cifar10";
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.size() % kCifarRecord != 0) {
      const std::size_t whole = bytes.size() / kCifarRecord * kCifarRecord;
      throw DataError("'" + path + "' truncated: partial record at offset " + std::to_string(whole));
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    for (std::size_t r = 0; r < n; ++r) {
      const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
      ds.labels.push_back(rec[0]);
      ds.pixels.insert(ds.pixels.end(), rec + 1, rec + kCifarRecord);
    }
  }
  finish(ds);
  return ds;
}

Dataset load_cifar10(const std::string& dir, const std::string& split) {
  const std::filesystem::path base(dir);
  std::vector<std::string> paths;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i) paths.push_back((base / ("data_batch_" + std::to_string(i) + ".bin")).string());
  } else if (split == "test") {
    paths.push_back((base / "test_batch.bin").string());
  } else {
    throw ValueError("unknown CIFAR-10 split '" + split + "' (expected train or test)");
  }
  return load_cifar10_files(paths);
}

Dataset subset(const Dataset& ds, std::size_t count) {
  if (count >= ds.size()) return ds;
  Dataset out = ds;
  out.labels.resize(count);
  out.pixels.resize(count * ds.image_size());
  finish(out);
  return out;
}

Split split_80_20(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_train = n * 8 / 10;
  Split s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return s;
}

std::vector<std::vector<std::size_t>> batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ValueError("batch size must be at least 1");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(indices.begin(), indices.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const std::size_t end = std::min(indices.size(), i + batch_size);
    out.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(i),
                     indices.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

template <typename T>
Tensor<T> batch_images(const Dataset& ds, std::span<const std::size_t> indices, std::size_t resize) {
  const std::size_t h = resize ? resize : ds.height;
  const std::size_t w = resize ? resize : ds.width;
  std::vector<T> values;
  values.reserve(indices.size() * ds.channels * h * w);
  for (const auto idx : indices) {
    if (idx >= ds.size()) throw ValueError("sample index " + std::to_string(idx) + " out of range");
    const std::uint8_t* img = ds.pixels.data() + idx * ds.image_size();
    for (std::size_t c = 0; c < ds.channels; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = resize ? y * ds.height / h : y;
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t sx = resize ? x * ds.width / w : x;
          values.push_back(static_cast<T>(img[(c * ds.height + sy) * ds.width + sx]) / T(255));
        }
      }
    }
  }
  return Tensor<T>({indices.size(), ds.channels, h, w}, std::move(values));
}

std::vector<std::uint8_t> batch_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<std::uint8_t> out;
  out.reserve(indices.size());
  for (const auto idx : indices) out.push_back(ds.labels.at(idx));
  return out;
}

template Tensor<float> batch_images<float>(const Dataset&, std::span<const std::size_t>, std::size_t);
template Tensor<double> batch_images<double>(const Dataset&, std::span<const std::size_t>, std::size_t);

}  // namespace has8
