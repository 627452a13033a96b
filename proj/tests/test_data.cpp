// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fishmask/data.hpp"
#include "fishmask/errors.hpp"

using namespace fishmask;

namespace {

std::filesystem::path temp_dir() {
  const auto dir =
      std::filesystem::temp_directory_path() / "fishmask_data_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_be32(std::ofstream& os, std::uint32_t v) {
  const unsigned char buf[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

// 3 images of 2x2 pixels plus labels, standard IDX headers.
void write_tiny_idx(const std::string& images, const std::string& labels,
                    std::uint32_t image_magic = 0x00000803u,
                    std::uint32_t label_count = 3) {
  {
    std::ofstream os(images, std::ios::binary);
    write_be32(os, image_magic);
    write_be32(os, 3);
    write_be32(os, 2);
    write_be32(os, 2);
    for (int i = 0; i < 12; ++i) os.put(static_cast<char>(i * 20));
  }
  {
    std::ofstream os(labels, std::ios::binary);
    write_be32(os, 0x00000801u);
    write_be32(os, label_count);
    for (std::uint32_t i = 0; i < label_count; ++i) {
      os.put(static_cast<char>(i % 2));
    }
  }
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("gen_blobs: determinism, sizes, labels") {
  const Dataset a = gen_blobs(4, 10, 20, 3.0, 1.0, 42);
  const Dataset b = gen_blobs(4, 10, 20, 3.0, 1.0, 42);
  const Dataset c = gen_blobs(4, 10, 20, 3.0, 1.0, 43);
  REQUIRE(a.size() == 40);
  CHECK(a.class_count == 4);
  CHECK(a.feature_dim == 20);
  bool identical = true;
  bool differs_from_c = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.examples[i].features != b.examples[i].features) identical = false;
    if (a.examples[i].features != c.examples[i].features)
      differs_from_c = true;
  }
  CHECK(identical);
  CHECK(differs_from_c);

  const Dataset tiny = gen_blobs(2, 1, 3, 1.0, 0.5, 1);
  CHECK(tiny.size() == 2);
  CHECK_THROWS_AS(gen_blobs(1, 10, 2, 1.0, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(gen_blobs(2, 10, 2, 0.0, 1.0, 0), ConfigError);
}

TEST_CASE("gen_moons: two balanced classes in 2D") {
  const Dataset moons = gen_moons(50, 0.1, 3);
  CHECK(moons.size() == 100);
  CHECK(moons.class_count == 2);
  CHECK(moons.feature_dim == 2);
}

TEST_CASE("shard_iid: partition, balance, union") {
  const Dataset ds = gen_blobs(2, 5, 4, 2.0, 1.0, 9);  // 10 examples
  const auto shards = shard_iid(ds, 2, 1);
  REQUIRE(shards.size() == 2);
  CHECK(shards[0].size() == 5);
  CHECK(shards[1].size() == 5);

  const auto thirds = shard_iid(ds, 3, 1);
  std::multiset<std::size_t> sizes = {thirds[0].size(), thirds[1].size(),
                                      thirds[2].size()};
  CHECK(sizes == std::multiset<std::size_t>{3, 3, 4});

  // Union preserves the multiset of examples (compare feature fingerprints).
  auto fingerprint = [](const Dataset& d) {
    std::multiset<double> out;
    for (const auto& e : d.examples) out.insert(e.features[0]);
    return out;
  };
  std::multiset<double> all = fingerprint(ds);
  std::multiset<double> merged;
  for (const auto& shard : thirds) {
    for (const auto& e : shard.examples) merged.insert(e.features[0]);
  }
  CHECK(all == merged);

  CHECK_THROWS_AS(shard_iid(ds, 11, 1), ConfigError);
}

TEST_CASE("split_train_eval: 80/20 split, deterministic") {
  const Dataset ds = gen_blobs(4, 25, 5, 3.0, 1.0, 7);  // 100 examples
  const auto [train, eval] = split_train_eval(ds, 0.2, 7);
  CHECK(train.size() == 80);
  CHECK(eval.size() == 20);
  const auto [train2, eval2] = split_train_eval(ds, 0.2, 7);
  CHECK(train.examples[0].features == train2.examples[0].features);
  CHECK_THROWS_AS(split_train_eval(ds, 1.0, 7), ConfigError);
}

TEST_CASE("load_idx: happy path scales pixels and pairs labels") {
  const auto dir = temp_dir();
  const std::string images = (dir / "img.idx").string();
  const std::string labels = (dir / "lbl.idx").string();
  write_tiny_idx(images, labels);

  const Dataset ds = load_idx(images, labels);
  REQUIRE(ds.size() == 3);
  CHECK(ds.feature_dim == 4);
  CHECK(ds.examples[0].features[0] == 0.0);
  CHECK(ds.examples[0].features[1] == doctest::Approx(20.0 / 255.0));
  CHECK(ds.examples[0].label == 0);
  CHECK(ds.examples[1].label == 1);

  const Dataset limited = load_idx(images, labels, 2);
  CHECK(limited.size() == 2);
}

TEST_CASE("load_idx: structured errors") {
  const auto dir = temp_dir();
  const std::string images = (dir / "bad_img.idx").string();
  const std::string labels = (dir / "bad_lbl.idx").string();

  write_tiny_idx(images, labels, 0x00000700u);
  CHECK_THROWS_WITH_AS(load_idx(images, labels),
                       doctest::Contains("bad image magic"), DataError);

  write_tiny_idx(images, labels, 0x00000803u, 5);  // count mismatch
  CHECK_THROWS_WITH_AS(load_idx(images, labels),
                       doctest::Contains("count mismatch"), DataError);

  CHECK_THROWS_AS(load_idx((dir / "missing.idx").string(), labels), DataError);
}

TEST_CASE("load_csv: header sniffing, labels, malformed cells") {
  const auto dir = temp_dir();
  const std::string path = (dir / "data.csv").string();
  {
    std::ofstream os(path);
    os << "f0,f1,label\n";
    os << "0.5,1.5,0\n";
    os << "-1.0,2.0,1\n";
    os << "3.5,0.25,1\n";
  }
  const Dataset ds = load_csv(path, 2);
  REQUIRE(ds.size() == 3);
  CHECK(ds.feature_dim == 2);
  CHECK(ds.class_count == 2);
  CHECK(ds.examples[1].label == 1);
  CHECK(ds.examples[1].features[0] == -1.0);

  {
    std::ofstream os(path);
    os << "f0,f1,label\n";
    os << "0.5,oops,0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path, 2),
                       doctest::Contains("row 2 column 1"), DataError);

  {
    std::ofstream os(path);
    os << "0.5,1.0,0\n0.5,1\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path, 2), doctest::Contains("row 2"),
                       DataError);

  // A malformed lone first row is not a silent header: no data rows left.
  {
    std::ofstream os(path);
    os << "0.5,oops,0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path, 2), doctest::Contains("no data rows"),
                       DataError);

  {
    std::ofstream os(path);
    os << "0.5,1.0,-2\n";
  }
  CHECK_THROWS_AS(load_csv(path, 2), DataError);
}

}  // TEST_SUITE
