// SPDX-License-Identifier: Apache-2.0
#include "fishmask/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include <json.hpp>

#include "fishmask/errors.hpp"
#include "fishmask/io.hpp"
#include "fishmask/rng.hpp"

namespace fishmask {

RefreshSchedule RefreshSchedule::every(std::size_t epochs) {
  if (epochs == 0) throw ConfigError("refresh period must be >= 1 epoch");
  return RefreshSchedule{epochs, false};
}

RefreshSchedule RefreshSchedule::fixed_forever() {
  return RefreshSchedule{0, true};
}

RefreshSchedule refresh_schedule_from_string(const std::string& name) {
  if (name == "fixed") return RefreshSchedule::fixed_forever();
  try {
    std::size_t pos = 0;
    const unsigned long long period = std::stoull(name, &pos);
    if (pos == name.size() && period >= 1) {
      return RefreshSchedule::every(period);
    }
  } catch (...) {
  }
  throw ConfigError("bad refresh schedule '" + name +
                    "' (expected an epoch count or 'fixed')");
}

std::string to_string(const RefreshSchedule& schedule) {
  return schedule.fixed ? "fixed" : std::to_string(schedule.period_epochs);
}

CheckpointTrainResult train_with_sparse_checkpoints(
    const ModelSpec& spec, const ParamVector& params0,
    const Dataset& train_data, const Dataset& eval_data, double sparsity,
    const RefreshSchedule& schedule, const TrainConfig& config,
    std::size_t fisher_samples, MaskOrigin mask_kind) {
  if (train_data.size() == 0 || eval_data.size() == 0) {
    throw ConfigError("train_with_sparse_checkpoints: datasets must be "
                      "nonempty");
  }
  const std::size_t k = sparsity_to_k(spec.param_count, sparsity);

  CheckpointTrainResult result;
  result.params = params0;

  auto shuffle_rng = make_rng(config.seed, Stream::kTrainShuffle);
  auto fisher_rng = make_rng(config.seed, Stream::kFisherShuffle);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  auto rebuild_mask = [&]() {
    if (mask_kind == MaskOrigin::kRandom) {
      // Fresh random mask per boundary, seeded per refresh.
      result.masks.push_back(build_random_mask(
          spec.param_count, k,
          sub_seed(config.seed, Stream::kRandomMask, result.masks.size())));
      return;
    }
    std::vector<std::size_t> fisher_order(train_data.size());
    std::iota(fisher_order.begin(), fisher_order.end(), 0);
    std::shuffle(fisher_order.begin(), fisher_order.end(), fisher_rng);
    const std::size_t n = std::min(fisher_samples, train_data.size());
    std::vector<LabeledExample> sample;
    sample.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      sample.push_back(train_data.examples[fisher_order[i]]);
    }
    const FisherDiag fisher = empirical_fisher(spec, result.params, sample, n);
    result.masks.push_back(build_fish_mask(fisher, k));
  };

  std::vector<LabeledExample> batch;
  std::size_t step = 0;
  double last_loss = 0.0;
  std::size_t current_mask = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const bool boundary =
        result.masks.empty() ||
        (!schedule.fixed && epoch % schedule.period_epochs == 0);
    if (boundary) {
      rebuild_mask();
      current_mask = result.masks.size() - 1;
    }
    const SparseMask& mask = result.masks[current_mask];

    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t n = start; n < stop; ++n) {
        batch.push_back(train_data.examples[order[n]]);
      }
      const LossGrad lg = loss_and_grad(spec, result.params, batch);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite training loss at step " +
                           std::to_string(step));
      }
      for (std::size_t i : mask.indices) {
        result.params[i] -= config.learning_rate * lg.grad[i];
      }
      last_loss = lg.loss;
      ++step;
    }

    // One checkpoint per epoch: the new values at every mask coordinate.
    SparseCheckpoint ckpt;
    ckpt.id = "ckpt-" + std::to_string(epoch + 1);
    ckpt.base_ref =
        epoch == 0 ? "base" : ("ckpt-" + std::to_string(epoch));
    ckpt.step = step;
    ckpt.mask_id = current_mask;
    ckpt.indices = mask.indices;
    ckpt.values.reserve(mask.indices.size());
    for (std::size_t i : mask.indices) ckpt.values.push_back(result.params[i]);
    result.checkpoints.push_back(std::move(ckpt));

    MetricRecord rec;
    rec.step = step;
    rec.train_loss = last_loss;
    rec.eval_accuracy = evaluate(spec, result.params, eval_data);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < result.params.size(); ++i) {
      if (std::memcmp(&result.params[i], &params0[i], sizeof(double)) != 0) {
        ++changed;
      }
    }
    rec.params_changed_count = changed;
    result.metrics.records.push_back(rec);
  }
  return result;
}

ParamVector reconstruct(const ParamVector& base,
                        std::span<const SparseCheckpoint> chain) {
  ParamVector params = base;
  // The first checkpoint names the base snapshot; each later one must
  // reference its predecessor.
  std::string expected_ref = chain.empty() ? "" : chain.front().base_ref;
  for (const SparseCheckpoint& ckpt : chain) {
    if (ckpt.base_ref != expected_ref) {
      throw DataError("broken checkpoint chain: " + ckpt.id +
                      " expects base '" + ckpt.base_ref + "', have '" +
                      expected_ref + "'");
    }
    if (ckpt.indices.size() != ckpt.values.size()) {
      throw DataError("checkpoint " + ckpt.id + ": index/value size mismatch");
    }
    for (std::size_t n = 0; n < ckpt.indices.size(); ++n) {
      const std::size_t i = ckpt.indices[n];
      if (i >= params.size()) {
        throw DataError("checkpoint " + ckpt.id + ": index " +
                        std::to_string(i) + " out of range");
      }
      params[i] = ckpt.values[n];
    }
    expected_ref = ckpt.id;
  }
  return params;
}

namespace {
constexpr char kCkptMagic[8] = {'F', 'I', 'S', 'H', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptFormatVersion = 1;
// magic + version + theta_len + step + mask_id + base_ref_hash + k
constexpr std::size_t kCkptHeaderBytes = 8 + 4 + 8 + 8 + 8 + 8 + 8;
constexpr std::size_t kCkptChecksumBytes = 8;
}  // namespace

std::size_t checkpoint_overhead_bytes() {
  return kCkptHeaderBytes + kCkptChecksumBytes;
}

std::size_t storage_cost(const SparseCheckpoint& checkpoint,
                         std::size_t unit_bytes_value,
                         std::size_t unit_bytes_index) {
  if (unit_bytes_value == 0 || unit_bytes_index == 0) {
    throw ConfigError("storage units must be positive");
  }
  return checkpoint.indices.size() * (unit_bytes_value + unit_bytes_index) +
         checkpoint_overhead_bytes();
}

std::size_t dense_storage_cost(std::size_t theta_len,
                               std::size_t unit_bytes_value) {
  if (unit_bytes_value == 0) throw ConfigError("storage units must be positive");
  return theta_len * unit_bytes_value + checkpoint_overhead_bytes();
}

void save_checkpoint(const SparseCheckpoint& checkpoint, std::size_t theta_len,
                     const std::string& path) {
  if (checkpoint.indices.size() != checkpoint.values.size()) {
    throw ConfigError("checkpoint index/value size mismatch");
  }
  io::atomic_write(path, [&](std::ostream& os) {
    io::ChecksummedWriter w(os);
    w.write_raw(kCkptMagic, sizeof(kCkptMagic));
    w.write<std::uint32_t>(kCkptFormatVersion);
    w.write<std::uint64_t>(theta_len);
    w.write<std::uint64_t>(checkpoint.step);
    w.write<std::uint64_t>(checkpoint.mask_id);
    w.write<std::uint64_t>(io::fnv1a(checkpoint.base_ref));
    w.write<std::uint64_t>(checkpoint.indices.size());
    for (std::size_t i : checkpoint.indices) w.write<std::uint64_t>(i);
    w.write_span(checkpoint.values.data(), checkpoint.values.size());
    w.write<std::uint64_t>(w.hash());  // checksum of everything before it
  });
}

SparseCheckpoint load_checkpoint(const std::string& path,
                                 std::size_t* theta_len_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  io::ChecksummedReader r(is, path);

  char magic[8];
  r.read_raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
    throw DataError(path + ": bad magic at offset 0");
  }
  const auto version = r.read<std::uint32_t>();
  if (version != kCkptFormatVersion) {
    throw DataError(path + ": unsupported version " + std::to_string(version));
  }
  SparseCheckpoint ckpt;
  const auto theta_len = r.read<std::uint64_t>();
  if (theta_len_out) *theta_len_out = theta_len;
  ckpt.step = r.read<std::uint64_t>();
  ckpt.mask_id = r.read<std::uint64_t>();
  const auto base_ref_hash = r.read<std::uint64_t>();
  const auto k = r.read<std::uint64_t>();
  ckpt.indices.resize(k);
  std::size_t prev = 0;
  for (std::size_t n = 0; n < k; ++n) {
    const auto idx = r.read<std::uint64_t>();
    if (idx >= theta_len || (n > 0 && idx <= prev)) {
      throw DataError(path + ": indices not strictly increasing / in range");
    }
    ckpt.indices[n] = idx;
    prev = idx;
  }
  ckpt.values.resize(k);
  r.read_span(ckpt.values.data(), k);

  const std::uint64_t computed = r.hash();
  const auto stored = r.read<std::uint64_t>();
  if (stored != computed) {
    throw DataError(path + ": checksum mismatch (file corrupted)");
  }
  // ids are not stored in the binary; the manifest carries them. Keep the
  // base_ref hash for chain validation against the manifest.
  ckpt.base_ref = "fnv1a:" + std::to_string(base_ref_hash);
  return ckpt;
}

void save_chain_manifest(std::span<const SparseCheckpoint> chain,
                         std::span<const std::string> files,
                         std::size_t theta_len, const std::string& base_id,
                         const std::string& path) {
  if (chain.size() != files.size()) {
    throw ConfigError("manifest: one file per checkpoint required");
  }
  nlohmann::json j;
  j["theta_len"] = theta_len;
  j["base"] = base_id;
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t n = 0; n < chain.size(); ++n) {
    entries.push_back({
        {"file", files[n]},
        {"id", chain[n].id},
        {"base_ref", chain[n].base_ref},
        {"step", chain[n].step},
        {"mask_id", chain[n].mask_id},
        {"k", chain[n].indices.size()},
    });
  }
  j["checkpoints"] = entries;
  io::write_text_file(path, j.dump(2));
}

ChainManifest load_chain_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad manifest JSON: " + e.what());
  }
  ChainManifest manifest;
  try {
    manifest.theta_len = j.at("theta_len").get<std::size_t>();
    manifest.base_id = j.at("base").get<std::string>();
    for (const auto& entry : j.at("checkpoints")) {
      manifest.entries.push_back({entry.at("file").get<std::string>(),
                                  entry.at("id").get<std::string>(),
                                  entry.at("base_ref").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": manifest missing fields: " + e.what());
  }
  return manifest;
}

std::vector<SparseCheckpoint> load_chain(const std::string& manifest_path) {
  const ChainManifest manifest = load_chain_manifest(manifest_path);
  const std::filesystem::path dir =
      std::filesystem::path(manifest_path).parent_path();

  std::vector<SparseCheckpoint> chain;
  for (const ChainManifest::Entry& entry : manifest.entries) {
    std::filesystem::path file(entry.file);
    if (file.is_relative()) file = dir / file;
    std::size_t theta_len = 0;
    SparseCheckpoint ckpt = load_checkpoint(file.string(), &theta_len);
    if (theta_len != manifest.theta_len) {
      throw DataError(file.string() + ": |theta| " +
                      std::to_string(theta_len) + " != manifest " +
                      std::to_string(manifest.theta_len));
    }
    const std::string expected_hash =
        "fnv1a:" + std::to_string(io::fnv1a(entry.base_ref));
    if (ckpt.base_ref != expected_hash) {
      throw DataError(file.string() +
                      ": base_ref hash does not match manifest entry '" +
                      entry.base_ref + "'");
    }
    ckpt.id = entry.id;
    ckpt.base_ref = entry.base_ref;
    chain.push_back(std::move(ckpt));
  }
  return chain;
}

}  // namespace fishmask
