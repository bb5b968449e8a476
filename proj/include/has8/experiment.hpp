#pragma once

// Training, evaluation and reporting entry points behind the CLI.
//
// A training run writes into cfg.out_dir:
//   metrics.jsonl  config header, then step / epoch / final records;
//                  fully determined by (config, seed)
//   timing.jsonl   wall-clock seconds for each metrics record
//   epoch-N.has8   checkpoint after epoch N (epoch-0 when epochs = 0)
//   last.has8      copy of the newest checkpoint

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "has8/config.hpp"
#include "has8/data.hpp"
#include "has8/hybrid.hpp"

namespace has8 {

struct EpochSummary {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochSummary> epochs;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  std::string checkpoint;  // newest checkpoint written
};

// `progress`, when set, receives one human-readable line per record.
TrainResult train(const RunConfig& cfg, std::ostream* progress = nullptr);

struct DataBundle {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_idx;  // indices into train
  std::vector<std::size_t> val_idx;    // into train or test, see val_on_test
  bool val_on_test = true;
};

// Loads and subsets the datasets named by cfg and checks them against the
// model spec (channel count, class count).
DataBundle load_data(const RunConfig& cfg);

// Top-1 accuracy with BN in inference mode and gradients off. Restores the
// model's previous training flag.
template <typename T>
double evaluate(HybridModel<T>& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                std::size_t batch_size, std::size_t resize = 0);

struct EvalReport {
  std::string split;
  std::size_t samples = 0;
  double accuracy = 0.0;
  std::string model_name;
};

// split: "train" | "val" | "test". `overrides` are key=value pairs applied
// on top of the config stored in the checkpoint (e.g. data.dir=...).
EvalReport evaluate_checkpoint(const std::string& path, const std::string& split,
                               const std::vector<std::string>& overrides = {});

// Multi-line MAC table for one sample of shape [1, C, H, W]: one row per
// block with ANN / SNN (one step) / total, then the head and model total.
std::string macs_report(const ModelSpec& spec, std::size_t height, std::size_t width);

// 8-step MSB-first bit pattern of `intensity` followed by the per-plane
// surrogate gradient of each surrogate, without and with rescaling.
std::string encode_inspect(int intensity, const SurrogateSpec& base = {});

}  // namespace has8
