// SPDX-License-Identifier: Apache-2.0
#include "fishmask/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <json.hpp>

#include "fishmask/errors.hpp"
#include "fishmask/io.hpp"
#include "fishmask/rng.hpp"
#include "fishmask/topk.hpp"

namespace fishmask {

std::string to_string(FisherVariant v) {
  switch (v) {
    case FisherVariant::kEmpirical: return "empirical";
    case FisherVariant::kTrueExact: return "true_exact";
    case FisherVariant::kTrueSampled: return "true_sampled";
  }
  return "unknown";
}

FisherVariant fisher_variant_from_string(const std::string& name) {
  if (name == "empirical") return FisherVariant::kEmpirical;
  if (name == "true_exact") return FisherVariant::kTrueExact;
  if (name == "true_sampled") return FisherVariant::kTrueSampled;
  throw ConfigError("unknown Fisher variant '" + name +
                    "' (expected empirical|true_exact|true_sampled)");
}

namespace {

void check_sample_count(std::size_t n_samples, std::size_t available) {
  if (n_samples == 0) {
    throw ConfigError(
        "Fisher estimation needs n_samples >= 1 (use a random mask for the "
        "N=0 baseline)");
  }
  if (n_samples > available) {
    throw ConfigError("n_samples " + std::to_string(n_samples) +
                      " exceeds dataset size " + std::to_string(available));
  }
}

void add_squared(std::vector<double>& acc, const std::vector<double>& g,
                 double weight) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weight * g[i] * g[i];
}

}  // namespace

FisherDiag empirical_fisher(const ModelSpec& spec, const ParamVector& params,
                            std::span<const LabeledExample> data,
                            std::size_t n_samples) {
  check_sample_count(n_samples, data.size());
  FisherDiag fisher;
  fisher.variant = FisherVariant::kEmpirical;
  fisher.sample_count = n_samples;
  fisher.scores.assign(spec.param_count, 0.0);

  for (std::size_t i = 0; i < n_samples; ++i) {
    const LabeledExample& example = data[i];
    const std::vector<double> g =
        logprob_grad(spec, params, example.features, example.label);
    add_squared(fisher.scores, g, 1.0);
  }
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  for (double& s : fisher.scores) s *= inv_n;
  return fisher;
}

FisherDiag true_fisher_exact(const ModelSpec& spec, const ParamVector& params,
                             std::span<const LabeledExample> data,
                             std::size_t n_samples) {
  check_sample_count(n_samples, data.size());
  if (spec.classes() > 1000) {
    throw ConfigError("true_fisher_exact: class count " +
                      std::to_string(spec.classes()) +
                      " too large to enumerate (max 1000)");
  }
  FisherDiag fisher;
  fisher.variant = FisherVariant::kTrueExact;
  fisher.sample_count = n_samples;
  fisher.scores.assign(spec.param_count, 0.0);

  for (std::size_t i = 0; i < n_samples; ++i) {
    const LabeledExample& example = data[i];
    const OutputDist dist = forward(spec, params, example.features);
    for (std::size_t y = 0; y < spec.classes(); ++y) {
      const double p = std::exp(dist.log_probs[y]);
      if (p == 0.0) continue;
      const std::vector<double> g =
          logprob_grad(spec, params, example.features, y);
      add_squared(fisher.scores, g, p);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  for (double& s : fisher.scores) s *= inv_n;
  return fisher;
}

FisherDiag true_fisher_sampled(const ModelSpec& spec,
                               const ParamVector& params,
                               std::span<const LabeledExample> data,
                               std::size_t n_samples, std::size_t draws,
                               std::uint64_t seed) {
  check_sample_count(n_samples, data.size());
  if (draws == 0) throw ConfigError("true_fisher_sampled: draws must be >= 1");

  FisherDiag fisher;
  fisher.variant = FisherVariant::kTrueSampled;
  fisher.sample_count = n_samples;
  fisher.draws = static_cast<std::uint32_t>(draws);
  fisher.scores.assign(spec.param_count, 0.0);

  std::vector<std::size_t> counts(spec.classes());
  for (std::size_t i = 0; i < n_samples; ++i) {
    const LabeledExample& example = data[i];
    const OutputDist dist = forward(spec, params, example.features);

    // Count label draws per class, then weight each class's squared score
    // once. Same average, one backward pass per drawn class.
    std::fill(counts.begin(), counts.end(), 0);
    auto rng = make_rng(seed, Stream::kFisherDraws, i);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t d = 0; d < draws; ++d) {
      const double u = uniform(rng);
      double cum = 0.0;
      std::size_t y = spec.classes() - 1;
      for (std::size_t c = 0; c < spec.classes(); ++c) {
        cum += std::exp(dist.log_probs[c]);
        if (u < cum) {
          y = c;
          break;
        }
      }
      ++counts[y];
    }
    for (std::size_t y = 0; y < spec.classes(); ++y) {
      if (counts[y] == 0) continue;
      const std::vector<double> g =
          logprob_grad(spec, params, example.features, y);
      add_squared(fisher.scores, g,
                  static_cast<double>(counts[y]) / static_cast<double>(draws));
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  for (double& s : fisher.scores) s *= inv_n;
  return fisher;
}

double fisher_rank_overlap(const FisherDiag& a, const FisherDiag& b,
                           std::size_t k) {
  if (a.scores.size() != b.scores.size()) {
    throw ConfigError("fisher_rank_overlap: length mismatch");
  }
  if (k == 0 || k > a.scores.size()) {
    throw ConfigError("fisher_rank_overlap: need 1 <= k <= |theta|");
  }
  const std::vector<std::size_t> ta = topk_indices(a.scores, k);
  const std::vector<std::size_t> tb = topk_indices(b.scores, k);
  std::vector<std::size_t> common;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(),
                        std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(k);
}

namespace {
constexpr char kFisherMagic[8] = {'F', 'I', 'S', 'H', 'D', 'I', 'A', 'G'};
constexpr std::uint32_t kFisherFormatVersion = 1;
}  // namespace

void save_fisher(const FisherDiag& fisher, const std::string& path) {
  io::atomic_write(path, [&](std::ostream& os) {
    io::ChecksummedWriter w(os);
    w.write_raw(kFisherMagic, sizeof(kFisherMagic));
    w.write<std::uint32_t>(kFisherFormatVersion);
    w.write<std::uint64_t>(fisher.scores.size());
    w.write<std::uint64_t>(fisher.sample_count);
    w.write<std::uint8_t>(static_cast<std::uint8_t>(fisher.variant));
    w.write<std::uint32_t>(fisher.draws);
    w.write_span(fisher.scores.data(), fisher.scores.size());
  });
}

FisherDiag load_fisher(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  io::ChecksummedReader r(is, path);

  char magic[8];
  r.read_raw(magic, sizeof(magic));
  if (std::memcmp(magic, kFisherMagic, sizeof(magic)) != 0) {
    throw DataError(path + ": bad magic at offset 0");
  }
  const auto version = r.read<std::uint32_t>();
  if (version != kFisherFormatVersion) {
    throw DataError(path + ": unsupported version " + std::to_string(version));
  }
  FisherDiag fisher;
  const auto len = r.read<std::uint64_t>();
  fisher.sample_count = r.read<std::uint64_t>();
  const auto variant = r.read<std::uint8_t>();
  if (variant > 2) throw DataError(path + ": bad variant tag");
  fisher.variant = static_cast<FisherVariant>(variant);
  fisher.draws = r.read<std::uint32_t>();
  fisher.scores.resize(len);
  r.read_span(fisher.scores.data(), len);
  return fisher;
}

std::string fisher_summary_json(const FisherDiag& fisher, std::size_t top_k) {
  nlohmann::json j;
  j["length"] = fisher.scores.size();
  j["sample_count"] = fisher.sample_count;
  j["variant"] = to_string(fisher.variant);
  if (fisher.variant == FisherVariant::kTrueSampled) j["draws"] = fisher.draws;
  const auto [lo, hi] =
      std::minmax_element(fisher.scores.begin(), fisher.scores.end());
  j["min_score"] = fisher.scores.empty() ? 0.0 : *lo;
  j["max_score"] = fisher.scores.empty() ? 0.0 : *hi;
  top_k = std::min(top_k, fisher.scores.size());
  j["top_k_indices"] = topk_indices(fisher.scores, top_k);
  return j.dump(2);
}

}  // namespace fishmask
