#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>

#include "doctest.h"
#include "has8/data.hpp"
#include "has8/errors.hpp"
#include "support.hpp"

using namespace has8;

namespace {

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("IDX files parse into bytes and scale to [0,1]") {
  test::ScratchDir dir("idx");
  const auto files = test::synthetic_idx(5, 4, 3);
  test::write_bytes(dir.file("img"), files.images);
  test::write_bytes(dir.file("lab"), files.labels);
  const Dataset ds = load_idx(dir.file("img"), dir.file("lab"));
  CHECK(ds.size() == 5);
  CHECK(ds.channels == 1);
  CHECK(ds.height == 4);
  CHECK(ds.width == 3);
  CHECK(ds.labels[3] == 3);
  CHECK(ds.pixels[2 * 12 + 5] == (2 * 31 + 5 * 7) % 256);
  const std::vector<std::size_t> idx{4, 0};
  const auto x = batch_images<double>(ds, idx);
  CHECK(x.shape() == Shape{2, 1, 4, 3});
  CHECK(x.at(7) == (4 * 31 + 7 * 7) % 256 / 255.0);
  for (const double v : x.data()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(batch_labels(ds, idx) == std::vector<std::uint8_t>{4, 0});
}

TEST_CASE("an all-zero IDX file yields zeros") {
  test::ScratchDir dir("zero");
  auto files = test::synthetic_idx(3, 2, 2);
  std::fill(files.images.begin() + 16, files.images.end(), 0);
  test::write_bytes(dir.file("img"), files.images);
  test::write_bytes(dir.file("lab"), files.labels);
  const auto x = batch_images<float>(load_idx(dir.file("img"), dir.file("lab")), std::vector<std::size_t>{0, 1, 2});
  for (const float v : x.data()) CHECK(v == 0.0f);
}

TEST_CASE("malformed IDX files are rejected with an offset") {
  test::ScratchDir dir("bad");
  const auto files = test::synthetic_idx(4, 3, 3);
  test::write_bytes(dir.file("lab"), files.labels);

  auto truncated = files.images;
  truncated.resize(16 + 3 * 9 + 4);
  test::write_bytes(dir.file("short"), truncated);
  const std::string m1 = message_of([&] { load_idx(dir.file("short"), dir.file("lab")); });
  CHECK(m1.find("offset 47") != std::string::npos);

  auto magic = files.images;
  magic[3] = 0x01;
  test::write_bytes(dir.file("magic"), magic);
  const std::string m2 = message_of([&] { load_idx(dir.file("magic"), dir.file("lab")); });
  CHECK(m2.find("magic") != std::string::npos);
  CHECK(m2.find("offset 0") != std::string::npos);
  CHECK_THROWS_AS(load_idx(dir.file("lab"), dir.file("lab")), DataError);

  const auto other = test::synthetic_idx(5, 3, 3);
  test::write_bytes(dir.file("img"), files.images);
  test::write_bytes(dir.file("lab5"), other.labels);
  const std::string m3 = message_of([&] { load_idx(dir.file("img"), dir.file("lab5")); });
  CHECK(m3.find("mismatch") != std::string::npos);

  test::write_bytes(dir.file("tiny"), {0, 0, 8});
  CHECK(message_of([&] { load_idx(dir.file("tiny"), dir.file("lab")); }).find("offset 0") != std::string::npos);
  CHECK_THROWS_AS(load_idx(dir.file("missing"), dir.file("lab")), DataError);

  auto bad_label = files.labels;
  bad_label[8] = 12;
  test::write_bytes(dir.file("badlab"), bad_label);
  CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("badlab")), DataError);
}

TEST_CASE("CIFAR-10 records are label byte plus channel-major pixels") {
  test::ScratchDir dir("cifar");
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 3; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(9 - r));
    for (int p = 0; p < 3072; ++p) bytes.push_back(static_cast<std::uint8_t>((p / 1024) * 100 + r));
  }
  CHECK(bytes.size() == 3 * 3073);
  test::write_bytes(dir.file("b1.bin"), bytes);
  test::write_bytes(dir.file("b2.bin"), std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 3073));
  const Dataset ds = load_cifar10_files({dir.file("b1.bin"), dir.file("b2.bin")});
  CHECK(ds.size() == 4);
  CHECK(ds.labels == std::vector<std::uint8_t>{9, 8, 7, 9});
  const auto x = batch_images<double>(ds, std::vector<std::size_t>{1});
  CHECK(x.shape() == Shape{1, 3, 32, 32});
  CHECK(x.at(0) == 1 / 255.0);
  CHECK(x.at(1024) == 101 / 255.0);
  CHECK(x.at(2048 + 5) == 201 / 255.0);

  bytes.pop_back();
  test::write_bytes(dir.file("cut.bin"), bytes);
  const std::string m = message_of([&] { load_cifar10_files({dir.file("cut.bin")}); });
  CHECK(m.find("offset 6146") != std::string::npos);
}

TEST_CASE("loading is pure") {
  test::ScratchDir dir("pure");
  test::write_toy_mnist(dir.path(), 30, 10, 8, 1);
  const auto a = load_mnist(dir.path().string(), "train");
  const auto b = load_mnist(dir.path().string(), "train");
  CHECK(a.checksum == b.checksum);
  CHECK(a.pixels == b.pixels);
  CHECK(load_mnist(dir.path().string(), "test").size() == 10);
  CHECK_THROWS_AS(load_mnist(dir.path().string(), "val"), ValueError);
  const auto s = subset(a, 12);
  CHECK(s.size() == 12);
  CHECK(s.pixels.size() == 12 * 64);
  CHECK(s.checksum != a.checksum);
  CHECK(subset(a, 100).size() == 30);
}

TEST_CASE("FNV-1a reference values") {
  const std::string abc = "a";
  const std::vector<std::uint8_t> bytes(abc.begin(), abc.end());
  CHECK(fnv1a(bytes) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a(std::vector<std::uint8_t>{}) == 0xcbf29ce484222325ull);
}

TEST_CASE("80/20 split is seeded, disjoint and exhaustive") {
  const Split a = split_80_20(50000, 1), b = split_80_20(50000, 1), c = split_80_20(50000, 2);
  CHECK(a.train.size() == 40000);
  CHECK(a.val.size() == 10000);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(c.train.size() == 40000);
  CHECK(a.train != c.train);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.val.begin(), a.val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == i);
  CHECK(split_80_20(7, 0).train.size() == 5);
}

TEST_CASE("property: splits partition every size") {
  test::Gen g(51);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = test::uniform_size(g, 0, 500);
    const Split s = split_80_20(n, g());
    CHECK(s.train.size() == n * 8 / 10);
    std::set<std::size_t> seen(s.train.begin(), s.train.end());
    for (const auto v : s.val) CHECK(seen.insert(v).second);
    CHECK(seen.size() == n);
  }
}

TEST_CASE("batching keeps the partial batch and reshuffles per epoch") {
  std::vector<std::size_t> idx(10);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto e0 = batches(idx, 3, 7, 0);
  REQUIRE(e0.size() == 4);
  CHECK(e0[0].size() == 3);
  CHECK(e0[3].size() == 1);
  CHECK(batches(idx, 3, 7, 0) == e0);
  CHECK(batches(idx, 3, 7, 1) != e0);
  CHECK(batches(idx, 3, 8, 0) != e0);
  std::vector<std::size_t> flat;
  for (const auto& b : e0) flat.insert(flat.end(), b.begin(), b.end());
  std::sort(flat.begin(), flat.end());
  CHECK(flat == idx);
  CHECK_THROWS_AS(batches(idx, 0, 7, 0), ValueError);
}

TEST_CASE("nearest-neighbour resize") {
  Dataset ds;
  ds.channels = 1;
  ds.height = 2;
  ds.width = 2;
  ds.pixels = {0, 51, 102, 255};
  ds.labels = {0};
  const auto x = batch_images<double>(ds, std::vector<std::size_t>{0}, 4);
  CHECK(x.shape() == Shape{1, 1, 4, 4});
  CHECK(x.at(0) == 0.0);
  CHECK(x.at(1) == 0.0);
  CHECK(x.at(2) == 51 / 255.0);
  CHECK(x.at(15) == 1.0);
  CHECK_THROWS_AS(batch_images<double>(ds, std::vector<std::size_t>{1}), ValueError);
}

TEST_CASE("first MNIST image matches an independent decode") {
  const char* env = std::getenv("HAS8_MNIST_DIR");
  const std::filesystem::path dir = env ? env : "/root/data/mnist";
  const auto img_path = dir / "train-images-idx3-ubyte";
  if (!std::filesystem::exists(img_path)) {
    MESSAGE("MNIST not found at " << dir << "; skipped");
    return;
  }
  const auto raw = test::read_bytes(img_path.string());
  const auto lab = test::read_bytes((dir / "train-labels-idx1-ubyte").string());
  // Header: magic, count, rows, cols; pixel bytes start at byte 16.
  REQUIRE(raw.size() > 16 + 784);
  const Dataset ds = load_mnist(dir.string(), "train");
  CHECK(ds.size() == 60000);
  const auto x = batch_images<double>(ds, std::vector<std::size_t>{0});
  for (std::size_t p = 0; p < 784; ++p) REQUIRE(x.at(p) == raw[16 + p] / 255.0);
  CHECK(ds.labels[0] == lab[8]);
  CHECK(static_cast<int>(lab[8]) == 5);
}
