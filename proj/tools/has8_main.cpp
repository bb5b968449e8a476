// has8: train / eval / gradcheck / macs / encode-inspect.
// Exit codes: 0 success, 1 validation failure, 2 bad input.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "has8/config.hpp"
#include "has8/errors.hpp"
#include "has8/experiment.hpp"
#include "has8/runtime.hpp"
#include "has8/simd/kernels.hpp"
#include "has8/verification.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kBadInput = 2;

has8::RunConfig resolve(const std::string& path, const std::vector<std::string>& overrides) {
  has8::RunConfig cfg = path.empty() ? has8::RunConfig{} : has8::RunConfig::load(path);
  for (const auto& o : overrides) has8::apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

// Binary PGM (P5), 8-bit.
int pgm_pixel(const std::string& path, std::size_t row, std::size_t col) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw has8::DataError("cannot open image '" + path + "'");
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval == 0 || maxval > 255) {
    throw has8::DataError("'" + path + "' is not an 8-bit binary PGM (P5) image");
  }
  in.get();
  if (row >= h || col >= w) {
    throw has8::ValueError("pixel (" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                           std::to_string(h) + "x" + std::to_string(w) + " image");
  }
  in.seekg(static_cast<std::streamoff>(row * w + col), std::ios::cur);
  const int v = in.get();
  if (v == EOF) throw has8::DataError("'" + path + "' truncated");
  return static_cast<int>(std::lround(255.0 * v / static_cast<double>(maxval)));
}

}  // namespace

int main(int argc, char** argv) {
  has8::tune_allocator();
  CLI::App app{"Hybrid ANN/SNN training with bit-plane spike coding"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "train a model; writes metrics and checkpoints to run.out_dir");
  train->add_option("-c,--config", config_path, "config file (key = value)");
  train->add_option("-s,--set", overrides, "override, e.g. --set train.epochs=1 (repeatable)");
  train->add_flag("-q,--quiet", quiet, "no progress lines on stdout");

  std::string checkpoint, split = "val";
  std::vector<std::string> eval_overrides;
  auto* eval = app.add_subcommand("eval", "top-1 accuracy of a checkpoint");
  eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--split", split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("-s,--set", eval_overrides, "override a stored config key, e.g. data.dir=...");

  std::string report_path, mutation = "none";
  std::uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "run the f64 verification suite");
  gradcheck->add_option("--report", report_path, "write the JSON report here");
  gradcheck->add_option("--mutate", mutation, "perturb the encoder under test")
      ->check(CLI::IsMember({"none", "rescale-exponent", "alpha"}));
  gradcheck->add_option("--seed", gc_seed, "seed for the randomized shapes");

  std::string macs_config;
  std::vector<std::string> macs_overrides;
  std::size_t size = 32;
  auto* macs = app.add_subcommand("macs", "per-branch MAC counts (SNN branch for one timestep)");
  macs->add_option("-c,--config", macs_config, "config file");
  macs->add_option("-s,--set", macs_overrides, "override, e.g. --set model.variant=resnet");
  macs->add_option("--size", size, "input height and width")->check(CLI::PositiveNumber);

  int intensity = -1;
  std::string image;
  std::size_t row = 0, col = 0;
  auto* inspect = app.add_subcommand("encode-inspect", "bit pattern and per-plane surrogate gradients");
  auto* opt_intensity = inspect->add_option("-i,--intensity", intensity, "pixel intensity 0..255");
  auto* opt_image = inspect->add_option("--image", image, "binary PGM image");
  inspect->add_option("--row", row, "pixel row in --image");
  inspect->add_option("--col", col, "pixel column in --image");
  opt_intensity->excludes(opt_image);
  inspect->require_option(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (*train) {
      const has8::RunConfig cfg = resolve(config_path, overrides);
      const auto result = has8::train(cfg, quiet ? nullptr : &std::cout);
      if (cfg.epochs > 0) std::cout << "best val accuracy " << result.best_val_acc << " (epoch " << result.best_epoch << ")\n";
      std::cout << "checkpoint " << result.checkpoint << "\n";
      return kOk;
    }
    if (*eval) {
      const auto report = has8::evaluate_checkpoint(checkpoint, split, eval_overrides);
      std::cout << report.model_name << " " << report.split << " top-1 " << report.accuracy << " over "
                << report.samples << " samples\n";
      return kOk;
    }
    if (*gradcheck) {
      const auto report = has8::run_suite(has8::Mutation::parse(mutation), gc_seed);
      std::cout << has8::suite_summary(report);
      if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw has8::DataError("cannot write report '" + report_path + "'");
        out << has8::suite_json(report);
      }
      return report.all_pass() ? kOk : kFailed;
    }
    if (*macs) {
      const has8::RunConfig cfg = resolve(macs_config, macs_overrides);
      std::cout << has8::macs_report(cfg.model, size, size);
      return kOk;
    }
    if (*inspect) {
      const int level = image.empty() ? intensity : pgm_pixel(image, row, col);
      std::cout << has8::encode_inspect(level);
      return kOk;
    }
  } catch (const std::invalid_argument& e) {  // ShapeError, ValueError
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const has8::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kOk;
}
