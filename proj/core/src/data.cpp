// SPDX-License-Identifier: Apache-2.0
#include "fishmask/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "fishmask/errors.hpp"
#include "fishmask/rng.hpp"

namespace fishmask {

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

Dataset gen_blobs(std::size_t classes, std::size_t per_class,
                  std::size_t feature_dim, double center_separation,
                  double noise_sigma, std::uint64_t seed) {
  if (classes < 2 || per_class == 0 || feature_dim == 0 ||
      center_separation <= 0.0 || noise_sigma <= 0.0) {
    throw ConfigError("gen_blobs: all arguments must be positive, classes >= 2");
  }

  Dataset ds;
  ds.class_count = classes;
  ds.feature_dim = feature_dim;
  {
    std::ostringstream ss;
    ss << "blobs(classes=" << classes << ",per_class=" << per_class
       << ",dim=" << feature_dim << ",sep=" << center_separation
       << ",sigma=" << noise_sigma << ",seed=" << seed << ")";
    ds.provenance = {Provenance::Kind::kSynthetic, ss.str()};
  }

  auto rng = make_rng(seed, Stream::kBlobs);
  std::normal_distribution<double> noise(0.0, noise_sigma);

  for (std::size_t c = 0; c < classes; ++c) {
    // Center c sits on signed axis (c mod dim), flipping sign each wrap.
    const std::size_t axis = c % feature_dim;
    const double sign = ((c / feature_dim) % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t n = 0; n < per_class; ++n) {
      LabeledExample example;
      example.label = c;
      example.features.resize(feature_dim);
      for (std::size_t d = 0; d < feature_dim; ++d) {
        example.features[d] = noise(rng);
      }
      example.features[axis] += sign * center_separation;
      ds.examples.push_back(std::move(example));
    }
  }
  return ds;
}

Dataset gen_moons(std::size_t per_class, double noise_sigma,
                  std::uint64_t seed) {
  if (per_class == 0 || noise_sigma <= 0.0) {
    throw ConfigError("gen_moons: per_class and noise_sigma must be positive");
  }
  Dataset ds;
  ds.class_count = 2;
  ds.feature_dim = 2;
  {
    std::ostringstream ss;
    ss << "moons(per_class=" << per_class << ",sigma=" << noise_sigma
       << ",seed=" << seed << ")";
    ds.provenance = {Provenance::Kind::kSynthetic, ss.str()};
  }

  auto rng = make_rng(seed, Stream::kMoons);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t n = 0; n < per_class; ++n) {
      const double t = std::numbers::pi * static_cast<double>(n) /
                       static_cast<double>(per_class);
      LabeledExample example;
      example.label = c;
      if (c == 0) {
        example.features = {std::cos(t) + noise(rng), std::sin(t) + noise(rng)};
      } else {
        example.features = {1.0 - std::cos(t) + noise(rng),
                            0.5 - std::sin(t) + noise(rng)};
      }
      ds.examples.push_back(std::move(example));
    }
  }
  return ds;
}

std::vector<Dataset> shard_iid(const Dataset& dataset, std::size_t workers,
                               std::uint64_t seed) {
  if (workers == 0 || workers > dataset.size()) {
    throw ConfigError("shard_iid: need 1 <= workers <= dataset size");
  }
  auto rng = make_rng(seed, Stream::kShard);
  const std::vector<std::size_t> order = shuffled_indices(dataset.size(), rng);

  std::vector<Dataset> shards(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    shards[w].class_count = dataset.class_count;
    shards[w].feature_dim = dataset.feature_dim;
    shards[w].provenance = {dataset.provenance.kind,
                            dataset.provenance.detail + "/shard" +
                                std::to_string(w)};
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    shards[i % workers].examples.push_back(dataset.examples[order[i]]);
  }
  return shards;
}

std::pair<Dataset, Dataset> split_train_eval(const Dataset& dataset,
                                             double eval_fraction,
                                             std::uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction >= 1.0) {
    throw ConfigError("split_train_eval: eval_fraction must be in [0,1)");
  }
  auto rng = make_rng(seed, Stream::kSplit);
  const std::vector<std::size_t> order = shuffled_indices(dataset.size(), rng);
  const std::size_t eval_n = static_cast<std::size_t>(
      std::llround(eval_fraction * static_cast<double>(dataset.size())));

  Dataset train, eval;
  for (Dataset* part : {&train, &eval}) {
    part->class_count = dataset.class_count;
    part->feature_dim = dataset.feature_dim;
  }
  train.provenance = {dataset.provenance.kind,
                      dataset.provenance.detail + "/train"};
  eval.provenance = {dataset.provenance.kind,
                     dataset.provenance.detail + "/eval"};
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < eval_n ? eval : train).examples.push_back(dataset.examples[order[i]]);
  }
  return {std::move(train), std::move(eval)};
}

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& path,
                        std::size_t offset) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (is.gcount() != 4) {
    throw DataError(path + ": truncated header at offset " +
                    std::to_string(offset));
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path, std::size_t limit) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw DataError("cannot open " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw DataError("cannot open " + labels_path);

  const std::uint32_t image_magic = read_be32(images, images_path, 0);
  if (image_magic != 0x00000803u) {
    std::ostringstream ss;
    ss << images_path << ": bad image magic 0x" << std::hex << image_magic
       << " at offset 0 (expected 0x803)";
    throw DataError(ss.str());
  }
  const std::uint32_t label_magic = read_be32(labels, labels_path, 0);
  if (label_magic != 0x00000801u) {
    std::ostringstream ss;
    ss << labels_path << ": bad label magic 0x" << std::hex << label_magic
       << " at offset 0 (expected 0x801)";
    throw DataError(ss.str());
  }

  const std::uint32_t image_count = read_be32(images, images_path, 4);
  const std::uint32_t rows = read_be32(images, images_path, 8);
  const std::uint32_t cols = read_be32(images, images_path, 12);
  const std::uint32_t label_count = read_be32(labels, labels_path, 4);
  if (image_count != label_count) {
    throw DataError("IDX count mismatch: " + std::to_string(image_count) +
                    " images vs " + std::to_string(label_count) + " labels");
  }

  std::size_t take = image_count;
  if (limit > 0) take = std::min<std::size_t>(take, limit);
  const std::size_t dim = std::size_t{rows} * cols;
  if (dim == 0) throw DataError(images_path + ": zero-sized images");

  Dataset ds;
  ds.feature_dim = dim;
  ds.provenance = {Provenance::Kind::kFile, images_path};
  std::vector<unsigned char> pixel_buf(dim);
  std::size_t max_label = 0;

  for (std::size_t n = 0; n < take; ++n) {
    images.read(reinterpret_cast<char*>(pixel_buf.data()),
                static_cast<std::streamsize>(dim));
    if (static_cast<std::size_t>(images.gcount()) != dim) {
      throw DataError(images_path + ": truncated pixel data at offset " +
                      std::to_string(16 + n * dim));
    }
    char label_byte = 0;
    labels.read(&label_byte, 1);
    if (labels.gcount() != 1) {
      throw DataError(labels_path + ": truncated label data at offset " +
                      std::to_string(8 + n));
    }
    LabeledExample example;
    example.label = static_cast<unsigned char>(label_byte);
    max_label = std::max(max_label, example.label);
    example.features.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      example.features[i] = pixel_buf[i] / 255.0;
    }
    ds.examples.push_back(std::move(example));
  }
  ds.class_count = max_label + 1;
  if (ds.class_count < 2) ds.class_count = 2;
  return ds;
}

Dataset load_csv(const std::string& path, std::size_t label_column) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);

  Dataset ds;
  ds.provenance = {Provenance::Kind::kFile, path};
  std::string line;
  std::size_t row = 0;
  std::size_t max_label = 0;

  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");

    if (row == 1) {
      // Header sniffing: any non-numeric cell makes row 1 a header.
      bool numeric = true;
      for (const std::string& c : cells) {
        try {
          std::size_t pos = 0;
          std::stod(c, &pos);
          if (pos != c.size()) numeric = false;
        } catch (...) {
          numeric = false;
        }
        if (!numeric) break;
      }
      if (!numeric) continue;
    }

    if (label_column >= cells.size()) {
      throw DataError(path + ": row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) +
                      " columns, label column " +
                      std::to_string(label_column) + " out of range");
    }
    if (ds.feature_dim != 0 && cells.size() - 1 != ds.feature_dim) {
      throw DataError(path + ": row " + std::to_string(row) +
                      " has inconsistent column count");
    }

    LabeledExample example;
    for (std::size_t col = 0; col < cells.size(); ++col) {
      double value = 0.0;
      try {
        std::size_t pos = 0;
        value = std::stod(cells[col], &pos);
        if (pos != cells[col].size()) throw DataError("trailing junk");
      } catch (...) {
        throw DataError(path + ": non-numeric cell at row " +
                        std::to_string(row) + " column " +
                        std::to_string(col));
      }
      if (col == label_column) {
        const double rounded = std::round(value);
        if (value < 0.0 || std::abs(value - rounded) > 1e-9) {
          throw DataError(path + ": label at row " + std::to_string(row) +
                          " column " + std::to_string(col) +
                          " is not a nonnegative integer");
        }
        example.label = static_cast<std::size_t>(rounded);
      } else {
        example.features.push_back(value);
      }
    }
    if (ds.feature_dim == 0) ds.feature_dim = example.features.size();
    max_label = std::max(max_label, example.label);
    ds.examples.push_back(std::move(example));
  }

  if (ds.examples.empty()) throw DataError(path + ": no data rows");
  ds.class_count = std::max<std::size_t>(max_label + 1, 2);
  return ds;
}

}  // namespace fishmask
