#include "has8/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "has8/autograd.hpp"
#include "has8/checkpoint.hpp"
#include "has8/errors.hpp"
#include "has8/optim.hpp"
#include "has8/simd/kernels.hpp"

namespace has8 {
namespace {

using Json = nlohmann::ordered_json;

Dataset load_split(const RunConfig& cfg, const std::string& split) {
  return cfg.dataset == "mnist" ? load_mnist(cfg.data_dir, split) : load_cifar10(cfg.data_dir, split);
}

std::string checkpoint_echo(const RunConfig& cfg) { return cfg.serialize(); }

Json config_json(const RunConfig& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : cfg.entries()) {
    // Where the files go is not part of what the run computes.
    if (k == "run.out_dir") continue;
    j[k] = v;
  }
  return j;
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const RunConfig& cfg, HybridModel<T>& model) {
  if (cfg.optim == OptimKind::kAdam) {
    return std::make_unique<Adam<T>>(model.parameters(),
                                     AdamConfig{cfg.resolved_lr(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  }
  return std::make_unique<Sgd<T>>(model.parameters(),
                                  SgdConfig{cfg.resolved_lr(), cfg.momentum, cfg.nesterov, cfg.weight_decay});
}

template <typename T>
std::size_t count_correct(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels) {
  const std::size_t classes = logits.size(1);
  const auto z = logits.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < classes; ++j) {
      if (z[i * classes + j] > z[i * classes + best]) best = j;
    }
    correct += best == labels[i];
  }
  return correct;
}

// Replays the forward pass that produced a non-finite loss with anomaly
// detection on, so the error names the first op with a NaN/Inf output.
template <typename T>
[[noreturn]] void diagnose_non_finite(HybridModel<T>& model, const Tensor<T>& x, const std::vector<std::uint8_t>& y,
                                      std::size_t epoch, std::size_t step) {
  const std::string where = "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
  const bool previous = anomaly_detection();
  set_anomaly_detection(true);
  try {
    NoGradGuard guard;
    cross_entropy(model.forward(x), y);
  } catch (const NonFiniteError& e) {
    set_anomaly_detection(previous);
    throw NonFiniteError(where + ": " + e.what());
  }
  set_anomaly_detection(previous);
  throw NonFiniteError(where + ": could not be reproduced with anomaly detection");
}

class MetricsSink {
 public:
  MetricsSink(const std::filesystem::path& dir, std::ostream* progress)
      : metrics_(dir / "metrics.jsonl"), timing_(dir / "timing.jsonl"), progress_(progress),
        start_(std::chrono::steady_clock::now()) {
    if (!metrics_ || !timing_) throw DataError("cannot write metrics into '" + dir.string() + "'");
  }

  void write(const Json& record) {
    metrics_ << record.dump() << '\n';
    metrics_.flush();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json t = Json::object();
    t["type"] = record.value("type", "");
    if (record.contains("step")) t["step"] = record["step"];
    t["wall_time"] = wall;
    timing_ << t.dump() << '\n';
    timing_.flush();
    if (progress_) {
      std::ostringstream line;
      line << record.dump() << " (" << std::fixed << std::setprecision(1) << wall << "s)\n";
      *progress_ << line.str();
    }
  }

 private:
  std::ofstream metrics_, timing_;
  std::ostream* progress_;
  std::chrono::steady_clock::time_point start_;
};

template <typename T>
TrainResult train_impl(const RunConfig& cfg, std::ostream* progress) {
  const DataBundle data = load_data(cfg);
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  MetricsSink sink(dir, progress);

  HybridModel<T> model(cfg.model, cfg.seed);
  auto opt = make_optimizer(cfg, model);
  const auto params = model.parameters();

  Json header = Json::object();
  header["type"] = "config";
  header["model"] = cfg.model.name();
  header["params"] = model.param_count();
  header["train_samples"] = data.train_idx.size();
  header["val_samples"] = data.val_idx.size();
  header["train_checksum"] = data.train.checksum;
  header["test_checksum"] = data.test.checksum;
  header["config"] = config_json(cfg);
  sink.write(header);

  TrainResult result;
  auto save = [&](std::size_t epoch) {
    const auto path = dir / ("epoch-" + std::to_string(epoch) + ".has8");
    save_checkpoint<T>(path.string(), checkpoint_echo(cfg), params);
    std::filesystem::copy_file(path, dir / "last.has8", std::filesystem::copy_options::overwrite_existing);
    result.checkpoint = path.string();
  };
  if (cfg.epochs == 0) {
    save(0);
    return result;
  }

  const std::size_t steps_per_epoch = (data.train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
  const SgdrConfig sgdr{cfg.resolved_lr(), cfg.cycle_steps ? cfg.cycle_steps : steps_per_epoch};
  const Dataset& val_ds = data.val_on_test ? data.test : data.train;

  std::size_t step = 0;
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    model.set_training(true);
    double epoch_loss = 0.0, window_loss = 0.0;
    std::size_t epoch_correct = 0, epoch_seen = 0, epoch_batches = 0;
    std::size_t window_correct = 0, window_seen = 0, window_batches = 0;
    for (const auto& batch : batches(data.train_idx, cfg.batch_size, cfg.seed, epoch)) {
      if (cfg.optim == OptimKind::kSgdr) opt->set_lr(sgdr_lr(step, sgdr));
      const Tensor<T> x = batch_images<T>(data.train, batch, cfg.resize);
      const auto y = batch_labels(data.train, batch);
      opt->zero_grad();
      const Tensor<T> logits = model.forward(x);
      const Tensor<T> loss = cross_entropy(logits, y);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) diagnose_non_finite(model, x, y, epoch, step + 1);
      backward(loss);
      opt->step();
      ++step;

      const std::size_t correct = count_correct(logits, y);
      epoch_loss += lv;
      window_loss += lv;
      epoch_correct += correct;
      window_correct += correct;
      epoch_seen += y.size();
      window_seen += y.size();
      ++epoch_batches;
      ++window_batches;

      if (step % cfg.log_every == 0) {
        Json r = Json::object();
        r["type"] = "step";
        r["epoch"] = epoch;
        r["step"] = step;
        r["loss"] = window_loss / static_cast<double>(window_batches);
        r["train_acc"] = static_cast<double>(window_correct) / static_cast<double>(window_seen);
        r["lr"] = opt->lr();
        sink.write(r);
        window_loss = 0.0;
        window_correct = window_seen = window_batches = 0;
      }
      if (cfg.max_steps && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }

    EpochSummary summary;
    summary.epoch = epoch;
    summary.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_batches, 1));
    summary.train_acc = static_cast<double>(epoch_correct) / static_cast<double>(std::max<std::size_t>(epoch_seen, 1));
    summary.val_acc = evaluate(model, val_ds, data.val_idx, cfg.batch_size, cfg.resize);
    result.epochs.push_back(summary);
    if (result.epochs.size() == 1 || summary.val_acc > result.best_val_acc) {
      result.best_val_acc = summary.val_acc;
      result.best_epoch = epoch;
    }

    Json r = Json::object();
    r["type"] = "epoch";
    r["epoch"] = epoch;
    r["step"] = step;
    r["loss"] = summary.train_loss;
    r["train_acc"] = summary.train_acc;
    r["val_acc"] = summary.val_acc;
    r["lr"] = opt->lr();
    sink.write(r);
    save(epoch);
  }
  result.steps = step;

  Json fin = Json::object();
  fin["type"] = "final";
  fin["step"] = step;
  fin["best_val_acc"] = result.best_val_acc;
  fin["best_epoch"] = result.best_epoch;
  sink.write(fin);
  return result;
}

template <typename T>
EvalReport evaluate_checkpoint_impl(const RunConfig& cfg, const std::string& path, const std::string& split) {
  const DataBundle data = load_data(cfg);
  HybridModel<T> model(cfg.model, cfg.seed);
  load_checkpoint<T>(path, model.parameters());
  EvalReport report;
  report.split = split;
  report.model_name = cfg.model.name();
  if (split == "train") {
    report.samples = data.train_idx.size();
    report.accuracy = evaluate(model, data.train, data.train_idx, cfg.batch_size, cfg.resize);
  } else if (split == "val") {
    report.samples = data.val_idx.size();
    report.accuracy = evaluate(model, data.val_on_test ? data.test : data.train, data.val_idx, cfg.batch_size,
                               cfg.resize);
  } else if (split == "test") {
    const auto idx = all_indices(data.test);
    report.samples = idx.size();
    report.accuracy = evaluate(model, data.test, idx, cfg.batch_size, cfg.resize);
  } else {
    throw ValueError("unknown split '" + split + "' (expected train, val or test)");
  }
  return report;
}

std::string with_commas(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

}  // namespace

DataBundle load_data(const RunConfig& cfg) {
  cfg.validate();
  DataBundle out;
  out.train = subset(load_split(cfg, "train"), cfg.train_subset ? cfg.train_subset : SIZE_MAX);
  out.test = subset(load_split(cfg, "test"), cfg.test_subset ? cfg.test_subset : SIZE_MAX);
  if (out.train.channels != cfg.model.in_channels) {
    throw ShapeError("model expects " + std::to_string(cfg.model.in_channels) + " input channels, " +
                     out.train.name + " images have " + std::to_string(out.train.channels));
  }
  const std::size_t extent = cfg.resize ? cfg.resize : out.train.height;
  if (cfg.model.variant == Variant::kVgg && extent != cfg.model.input_size) {
    throw ShapeError("model expects " + std::to_string(cfg.model.input_size) + "x" +
                     std::to_string(cfg.model.input_size) + " input, " + out.train.name + " batches are " +
                     std::to_string(extent) + "x" + std::to_string(extent) + " (set model.input_size or data.resize)");
  }
  if (out.train.num_classes != cfg.model.num_classes) {
    throw ShapeError("model has " + std::to_string(cfg.model.num_classes) + " classes, " + out.train.name +
                     " has " + std::to_string(out.train.num_classes));
  }
  if (cfg.val_source == "split") {
    Split s = split_80_20(out.train.size(), cfg.seed);
    out.train_idx = std::move(s.train);
    out.val_idx = std::move(s.val);
    out.val_on_test = false;
  } else {
    out.train_idx = all_indices(out.train);
    out.val_idx = all_indices(out.test);
    out.val_on_test = true;
  }
  return out;
}

template <typename T>
double evaluate(HybridModel<T>& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                std::size_t batch_size, std::size_t resize) {
  if (indices.empty()) return 0.0;
  NoGradGuard guard;
  model.set_training(false);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const std::size_t end = std::min(indices.size(), i + batch_size);
    const std::span<const std::size_t> batch(indices.data() + i, end - i);
    correct += count_correct(model.forward(batch_images<T>(ds, batch, resize)), batch_labels(ds, batch));
  }
  model.set_training(true);
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

TrainResult train(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  simd::set_backend(cfg.backend);
  return cfg.precision == Precision::kF64 ? train_impl<double>(cfg, progress) : train_impl<float>(cfg, progress);
}

EvalReport evaluate_checkpoint(const std::string& path, const std::string& split,
                               const std::vector<std::string>& overrides) {
  RunConfig cfg = RunConfig::parse(read_checkpoint_spec(path));
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  simd::set_backend(cfg.backend);
  return cfg.precision == Precision::kF64 ? evaluate_checkpoint_impl<double>(cfg, path, split)
                                          : evaluate_checkpoint_impl<float>(cfg, path, split);
}

std::string macs_report(const ModelSpec& base, std::size_t height, std::size_t width) {
  ModelSpec spec = base;
  if (spec.variant == Variant::kVgg) {
    if (height != width) throw ValueError("the VGG variant needs square input");
    spec.input_size = height;
  }
  HybridModel<float> model(spec, 0);
  const Shape in{1, spec.in_channels, height, width};
  std::ostringstream out;
  out << spec.name() << " @ " << to_string(in) << "\n";
  out << std::left << std::setw(6) << "block" << std::setw(20) << "kind" << std::right << std::setw(16) << "ann"
      << std::setw(16) << "snn(1 step)" << std::setw(16) << "total" << "\n";
  MacCount sum;
  Shape s = in;
  std::size_t i = 0;
  for (auto* block : model.blocks()) {
    if (block->kind() == "hybrid_mlp") s = model.head_input(s);
    const MacCount c = block->macs(s);
    sum += c;
    out << std::left << std::setw(6) << i++ << std::setw(20) << block->kind() << std::right << std::setw(16)
        << with_commas(c.ann) << std::setw(16) << with_commas(c.snn) << std::setw(16) << with_commas(c.total())
        << "\n";
    s = block->output_shape(s);
  }
  const MacCount total = model.macs(in);
  out << std::left << std::setw(6) << "-" << std::setw(20) << "head" << std::right << std::setw(16)
      << with_commas(total.ann - sum.ann) << std::setw(16) << 0 << std::setw(16)
      << with_commas(total.ann - sum.ann) << "\n";
  out << std::left << std::setw(26) << "total" << std::right << std::setw(16) << with_commas(total.ann)
      << std::setw(16) << with_commas(total.snn) << std::setw(16) << with_commas(total.total()) << "\n";
  out << "params " << with_commas(model.param_count()) << "\n";
  return out.str();
}

std::string encode_inspect(int intensity, const SurrogateSpec& base) {
  if (intensity < 0 || intensity > 255) {
    throw ValueError("intensity " + std::to_string(intensity) + " is outside [0,255]");
  }
  std::ostringstream out;
  out << "intensity " << intensity << "\npattern ";
  for (std::size_t t = 0; t < kTimesteps; ++t) out << ((intensity >> (7 - static_cast<int>(t))) & 1);
  out << "  (t=0..7, MSB first)\n\n";
  out << std::left << std::setw(14) << "surrogate" << std::setw(9) << "rescale";
  for (std::size_t t = 0; t < kTimesteps; ++t) out << std::right << std::setw(14) << ("k=" + std::to_string(7 - t));
  out << "\n";
  out << std::setprecision(6) << std::scientific;
  for (const auto kind : {SurrogateKind::kSigSine, SurrogateKind::kTanhSine, SurrogateKind::kFourierSine}) {
    for (const bool rescale : {false, true}) {
      SurrogateSpec spec = base;
      spec.kind = kind;
      spec.rescale = rescale;
      const GradTable table = grad_table(spec);
      out << std::left << std::setw(14) << surrogate_name(kind) << std::setw(9) << (rescale ? "on" : "off");
      for (std::size_t t = 0; t < kTimesteps; ++t) out << std::right << std::setw(14) << table[intensity][7 - t];
      out << "\n";
    }
  }
  return out.str();
}

template double evaluate<float>(HybridModel<float>&, const Dataset&, const std::vector<std::size_t>&, std::size_t,
                                std::size_t);
template double evaluate<double>(HybridModel<double>&, const Dataset&, const std::vector<std::size_t>&, std::size_t,
                                 std::size_t);

}  // namespace has8
