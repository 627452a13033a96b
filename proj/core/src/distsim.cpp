// SPDX-License-Identifier: Apache-2.0
#include "fishmask/distsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "fishmask/errors.hpp"
#include "fishmask/fisher.hpp"
#include "fishmask/rng.hpp"

namespace fishmask {

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kDense: return "dense";
    case MaskStrategy::kSharedFish: return "shared_fish";
    case MaskStrategy::kSharedRandom: return "shared_random";
    case MaskStrategy::kSegmentedFish: return "segmented_fish";
  }
  return "unknown";
}

std::string to_string(BroadcastMode m) {
  switch (m) {
    case BroadcastMode::kFullVector: return "full_vector";
    case BroadcastMode::kPeerDeltas: return "peer_deltas";
    case BroadcastMode::kAutoMin: return "auto_min";
  }
  return "unknown";
}

MaskStrategy mask_strategy_from_string(const std::string& name) {
  if (name == "dense") return MaskStrategy::kDense;
  if (name == "shared_fish" || name == "fish") return MaskStrategy::kSharedFish;
  if (name == "shared_random" || name == "random")
    return MaskStrategy::kSharedRandom;
  if (name == "segmented_fish" || name == "segmented")
    return MaskStrategy::kSegmentedFish;
  throw ConfigError("unknown mask strategy '" + name + "'");
}

BroadcastMode broadcast_mode_from_string(const std::string& name) {
  if (name == "full_vector") return BroadcastMode::kFullVector;
  if (name == "peer_deltas") return BroadcastMode::kPeerDeltas;
  if (name == "auto_min") return BroadcastMode::kAutoMin;
  throw ConfigError("unknown broadcast mode '" + name + "'");
}

std::pair<double, double> comm_cost_round(const DistConfig& config,
                                          std::span<const SparseMask> masks,
                                          std::size_t theta_len) {
  const double theta = static_cast<double>(theta_len);
  const double workers = static_cast<double>(config.workers);

  // Upload: a dense delta costs |theta| units, a sparse one 2 units per
  // (index, value) pair.
  std::vector<double> delta_costs(config.workers, theta);
  if (config.mask_strategy != MaskStrategy::kDense) {
    if (masks.empty()) {
      throw ConfigError("comm_cost_round: sparse strategy without masks");
    }
    for (std::size_t w = 0; w < config.workers; ++w) {
      const SparseMask& mask = masks[masks.size() == 1 ? 0 : w];
      delta_costs[w] = 2.0 * static_cast<double>(mask.indices.size());
    }
  }
  const double w2s =
      std::accumulate(delta_costs.begin(), delta_costs.end(), 0.0);

  // Download: the full vector to every worker, or every worker receives all
  // other workers' deltas.
  const double full_vector_cost = workers * theta;
  double peer_cost = 0.0;
  for (std::size_t i = 0; i < config.workers; ++i) {
    for (std::size_t j = 0; j < config.workers; ++j) {
      if (j != i) peer_cost += delta_costs[j];
    }
  }
  double s2w = 0.0;
  switch (config.server_broadcast) {
    case BroadcastMode::kFullVector: s2w = full_vector_cost; break;
    case BroadcastMode::kPeerDeltas: s2w = peer_cost; break;
    case BroadcastMode::kAutoMin: s2w = std::min(full_vector_cost, peer_cost);
      break;
  }
  return {w2s, s2w};
}

namespace {

// Sequential pass over a worker's shard with a reshuffle at each wrap;
// iteration state persists across communication rounds.
class ShardCursor {
 public:
  ShardCursor(const Dataset& shard, std::uint64_t seed, std::size_t worker)
      : shard_(shard), rng_(make_rng(seed, Stream::kWorkerData, worker)) {
    order_.resize(shard.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  void next_batch(std::size_t batch_size, std::vector<LabeledExample>& out) {
    out.clear();
    for (std::size_t n = 0; n < batch_size; ++n) {
      if (cursor_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      out.push_back(shard_.examples[order_[cursor_++]]);
    }
  }

 private:
  const Dataset& shard_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

std::vector<SparseMask> build_strategy_masks(const ModelSpec& spec,
                                             const ParamVector& server_params,
                                             const Dataset& data,
                                             const DistConfig& config,
                                             const TrainConfig& train_config) {
  if (config.mask_strategy == MaskStrategy::kDense) return {};
  if (config.mask_k == 0) {
    throw ConfigError("sparse mask strategy needs mask_k >= 1");
  }
  if (config.mask_strategy == MaskStrategy::kSharedRandom) {
    return {build_random_mask(spec.param_count, config.mask_k,
                              config.random_mask_seed)};
  }

  // Fisher is computed once on the server, at the current server parameters.
  auto shuffle_rng = make_rng(train_config.seed, Stream::kFisherShuffle);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  const std::size_t n = std::min(config.fisher_samples, data.size());
  std::vector<LabeledExample> sample;
  sample.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    sample.push_back(data.examples[order[i]]);
  }
  const FisherDiag fisher =
      empirical_fisher(spec, server_params, sample, n);

  if (config.mask_strategy == MaskStrategy::kSharedFish) {
    return {build_fish_mask(fisher, config.mask_k)};
  }
  return build_segmented_masks(fisher, config.mask_k, config.workers);
}

}  // namespace

DistResult run_distributed(const ModelSpec& spec, const ParamVector& params0,
                           const Dataset& data, const Dataset& eval_data,
                           const DistConfig& dist_config,
                           const TrainConfig& train_config) {
  if (dist_config.workers < 2) throw ConfigError("need at least 2 workers");
  if (dist_config.local_updates == 0) {
    throw ConfigError("local_updates must be >= 1");
  }
  if (dist_config.rounds == 0) throw ConfigError("rounds must be >= 1");

  DistResult result;
  result.theta_len = spec.param_count;
  result.workers = dist_config.workers;
  result.params = params0;

  // Optional dense warmup on the full dataset before any distribution.
  if (dist_config.warmup_epochs > 0) {
    TrainConfig warmup = train_config;
    warmup.epochs = dist_config.warmup_epochs;
    warmup.seed = sub_seed(train_config.seed, Stream::kWarmup);
    warmup.eval_every = 0;
    result.params =
        train(spec, result.params, data, eval_data, std::nullopt, warmup)
            .params;
  }

  result.masks = build_strategy_masks(spec, result.params, data, dist_config,
                                      train_config);

  const std::vector<Dataset> shards =
      shard_iid(data, dist_config.workers, train_config.seed);
  for (const Dataset& shard : shards) {
    if (shard.size() < train_config.batch_size) {
      throw ConfigError("shard of " + std::to_string(shard.size()) +
                        " examples is smaller than one batch of " +
                        std::to_string(train_config.batch_size));
    }
  }

  std::vector<ShardCursor> cursors;
  cursors.reserve(dist_config.workers);
  for (std::size_t w = 0; w < dist_config.workers; ++w) {
    cursors.emplace_back(shards[w], train_config.seed, w);
  }

  auto mask_for_worker = [&](std::size_t w) -> const SparseMask* {
    if (result.masks.empty()) return nullptr;
    return &result.masks[result.masks.size() == 1 ? 0 : w];
  };

  const double agg_scale =
      dist_config.aggregation == Aggregation::kAverage
          ? 1.0 / static_cast<double>(dist_config.workers)
          : 1.0;

  std::vector<LabeledExample> batch;
  for (std::size_t round = 1; round <= dist_config.rounds; ++round) {
    if (round == dist_config.rounds) {
      result.params_before_last_round = result.params;
    }
    // Workers run sequentially in index order; each starts from the server
    // vector, so results are identical to a parallel schedule.
    std::vector<SparseDelta> deltas(dist_config.workers);
    for (std::size_t w = 0; w < dist_config.workers; ++w) {
      ParamVector local = result.params;
      const SparseMask* mask = mask_for_worker(w);
      for (std::size_t u = 0; u < dist_config.local_updates; ++u) {
        cursors[w].next_batch(train_config.batch_size, batch);
        const LossGrad lg = loss_and_grad(spec, local, batch);
        if (!std::isfinite(lg.loss)) {
          throw NumericError("non-finite loss in worker " + std::to_string(w) +
                             " round " + std::to_string(round));
        }
        if (mask) {
          for (std::size_t i : mask->indices) {
            local[i] -= train_config.learning_rate * lg.grad[i];
          }
        } else {
          for (std::size_t i = 0; i < local.size(); ++i) {
            local[i] -= train_config.learning_rate * lg.grad[i];
          }
        }
      }
      // Transmit the change restricted to the worker's mask (all indices
      // when dense).
      SparseDelta& delta = deltas[w];
      if (mask) {
        delta.reserve(mask->indices.size());
        for (std::size_t i : mask->indices) {
          delta.push_back({i, local[i] - result.params[i]});
        }
      } else {
        delta.reserve(local.size());
        for (std::size_t i = 0; i < local.size(); ++i) {
          delta.push_back({i, local[i] - result.params[i]});
        }
      }
    }

    // Sum aggregation in worker-index order.
    for (const SparseDelta& delta : deltas) {
      for (const SparseEntry& entry : delta) {
        result.params[entry.index] += agg_scale * entry.value;
      }
    }

    const auto [w2s, s2w] = comm_cost_round(
        dist_config, std::span<const SparseMask>(result.masks),
        spec.param_count);
    result.ledger.worker_to_server_units += w2s;
    result.ledger.server_to_worker_units += s2w;

    RoundRecord rec;
    rec.round = round;
    rec.w2s_units = w2s;
    rec.s2w_units = s2w;
    rec.eval_accuracy = evaluate(spec, result.params, eval_data);
    result.rounds.push_back(rec);
    if (round == dist_config.rounds) {
      result.last_round_deltas = std::move(deltas);
    }
  }

  result.final_accuracy = result.rounds.back().eval_accuracy;
  return result;
}

ParamVector reconstruct_from_peer_deltas(
    const ParamVector& server_before,
    std::span<const SparseDelta> deltas_in_worker_order) {
  ParamVector params = server_before;
  for (const SparseDelta& delta : deltas_in_worker_order) {
    for (const SparseEntry& entry : delta) {
      if (entry.index >= params.size()) {
        throw ConfigError("delta index out of range");
      }
      params[entry.index] += entry.value;
    }
  }
  return params;
}

std::vector<BudgetPoint> accuracy_vs_budget(const DistResult& result) {
  const double per_worker_theta =
      static_cast<double>(result.workers) *
      static_cast<double>(result.theta_len);
  std::vector<BudgetPoint> points;
  double cum_w2s = 0.0;
  double cum_total = 0.0;
  for (const RoundRecord& rec : result.rounds) {
    cum_w2s += rec.w2s_units;
    cum_total += rec.w2s_units + rec.s2w_units;
    BudgetPoint p;
    p.round = rec.round;
    p.upload_fme_per_worker = cum_w2s / per_worker_theta;
    p.updown_fme_per_worker = cum_total / per_worker_theta;
    p.eval_accuracy = rec.eval_accuracy;
    points.push_back(p);
  }
  return points;
}

std::string dist_result_to_json(const DistResult& result,
                                const DistConfig& config) {
  nlohmann::json j;
  j["config"] = {
      {"workers", config.workers},
      {"local_updates", config.local_updates},
      {"rounds", config.rounds},
      {"mask_strategy", to_string(config.mask_strategy)},
      {"mask_k", config.mask_k},
      {"warmup_epochs", config.warmup_epochs},
      {"server_broadcast", to_string(config.server_broadcast)},
      {"aggregation",
       config.aggregation == Aggregation::kSum ? "sum" : "average"},
      {"fisher_samples", config.fisher_samples},
  };
  j["ledger_convention"] = {
      {"units", "scalar transmissions; dense parameter = 1, sparse pair = 2"},
      {"upload_fme_per_worker",
       "cumulative worker-to-server units / (workers * |theta|)"},
      {"updown_fme_per_worker",
       "cumulative (worker-to-server + server-to-worker) units / "
       "(workers * |theta|)"},
  };
  j["theta_len"] = result.theta_len;
  nlohmann::json rounds = nlohmann::json::array();
  const std::vector<BudgetPoint> budget = accuracy_vs_budget(result);
  for (std::size_t i = 0; i < result.rounds.size(); ++i) {
    const RoundRecord& rec = result.rounds[i];
    rounds.push_back({
        {"round", rec.round},
        {"w2s_units", rec.w2s_units},
        {"s2w_units", rec.s2w_units},
        {"eval_accuracy", rec.eval_accuracy},
        {"upload_fme_per_worker", budget[i].upload_fme_per_worker},
        {"updown_fme_per_worker", budget[i].updown_fme_per_worker},
    });
  }
  j["rounds"] = rounds;
  j["final_accuracy"] = result.final_accuracy;
  j["ledger"] = {
      {"worker_to_server_units", result.ledger.worker_to_server_units},
      {"server_to_worker_units", result.ledger.server_to_worker_units},
      {"full_model_equivalents",
       result.ledger.full_model_equivalents(result.theta_len)},
  };
  return j.dump(2);
}

}  // namespace fishmask
