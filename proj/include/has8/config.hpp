#pragma once

// Run configuration: a flat "key = value" text format with dotted keys
// (model.*, optim.*, data.*, train.*, run.*). An optional "[section]" line
// prefixes the keys that follow it. '#' starts a comment.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "has8/hybrid.hpp"
#include "has8/optim.hpp"

namespace has8 {

enum class OptimKind { kAdam, kSgdr };
std::string_view optim_name(OptimKind kind);
OptimKind parse_optim(std::string_view name);

enum class Precision { kF32, kF64 };
std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view name);

struct RunConfig {
  ModelSpec model;

  OptimKind optim = OptimKind::kAdam;
  // 0 picks the default: 1e-3 for Adam, 0.1 * batch / 256 for SGDR.
  double lr = 0.0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-3;
  double momentum = 0.9;
  bool nesterov = true;
  // SGDR cycle length in steps; 0 means one epoch.
  std::size_t cycle_steps = 0;

  std::string dataset = "mnist";  // mnist | cifar10
  std::string data_dir = "data/mnist";
  std::size_t train_subset = 10000;  // 0 = whole split
  std::size_t test_subset = 1000;
  // "test": validate on the (subset of the) test split.
  // "split": seeded 80/20 split of the training subset.
  std::string val_source = "test";
  std::size_t resize = 0;

  std::size_t epochs = 3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF32;
  std::size_t log_every = 50;
  // Stops after this many optimizer steps in total; 0 = no limit.
  std::size_t max_steps = 0;

  std::string out_dir = "runs/default";
  std::string backend = "auto";

  void validate() const;
  double resolved_lr() const;

  // Throws ValueError for unknown keys or malformed values.
  void set(std::string_view key, std::string_view value);
  // Every key in a fixed order, values rendered so that parsing them back
  // reproduces this config exactly.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string serialize() const;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::string& path);
};

// "key=value" override, as given on the command line.
void apply_override(RunConfig& cfg, std::string_view assignment);

}  // namespace has8
