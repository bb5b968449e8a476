#include "has8/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "has8/errors.hpp"

namespace has8 {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ValueError("'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ValueError("'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ValueError("'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

#define HAS8_SIZE(k, member)                                                         \
  Field{k, [](const RunConfig& c) { return std::to_string(c.member); },              \
        [](RunConfig& c, std::string_view key, std::string_view v) {                 \
          c.member = static_cast<decltype(c.member)>(to_u64(key, v));                \
        }}
#define HAS8_REAL(k, member)                                                         \
  Field{k, [](const RunConfig& c) { return fmt(static_cast<double>(c.member)); },    \
        [](RunConfig& c, std::string_view key, std::string_view v) { c.member = to_double(key, v); }}
#define HAS8_BOOL(k, member)                                                         \
  Field{k, [](const RunConfig& c) { return fmt(static_cast<bool>(c.member)); },      \
        [](RunConfig& c, std::string_view key, std::string_view v) { c.member = to_bool(key, v); }}
#define HAS8_TEXT(k, member)                                                         \
  Field{k, [](const RunConfig& c) { return c.member; },                              \
        [](RunConfig& c, std::string_view, std::string_view v) { c.member = std::string(v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"model.variant", [](const RunConfig& c) { return std::string(variant_name(c.model.variant)); },
            [](RunConfig& c, std::string_view, std::string_view v) { c.model.variant = parse_variant(v); }},
      HAS8_SIZE("model.b", model.b),
      HAS8_SIZE("model.m", model.m),
      HAS8_SIZE("model.d_max", model.d_max),
      HAS8_SIZE("model.num_classes", model.num_classes),
      HAS8_SIZE("model.in_channels", model.in_channels),
      HAS8_SIZE("model.input_size", model.input_size),
      Field{"model.surrogate",
            [](const RunConfig& c) { return std::string(surrogate_name(c.model.surrogate.kind)); },
            [](RunConfig& c, std::string_view, std::string_view v) { c.model.surrogate.kind = parse_surrogate(v); }},
      HAS8_REAL("model.alpha", model.surrogate.alpha),
      Field{"model.fourier_terms", [](const RunConfig& c) { return std::to_string(c.model.surrogate.n_terms); },
            [](RunConfig& c, std::string_view key, std::string_view v) {
              c.model.surrogate.n_terms = static_cast<int>(to_u64(key, v));
            }},
      HAS8_BOOL("model.rescale", model.surrogate.rescale),
      HAS8_BOOL("model.fourier_literal", model.surrogate.fourier_literal),
      Field{"model.decoder", [](const RunConfig& c) { return std::string(decoder_name(c.model.decoder)); },
            [](RunConfig& c, std::string_view, std::string_view v) { c.model.decoder = parse_decoder(v); }},
      HAS8_REAL("model.v_threshold", model.neuron.v_threshold),
      HAS8_REAL("model.if_alpha", model.neuron.surrogate_alpha),

      Field{"optim.kind", [](const RunConfig& c) { return std::string(optim_name(c.optim)); },
            [](RunConfig& c, std::string_view, std::string_view v) { c.optim = parse_optim(v); }},
      HAS8_REAL("optim.lr", lr),
      HAS8_REAL("optim.beta1", beta1),
      HAS8_REAL("optim.beta2", beta2),
      HAS8_REAL("optim.eps", eps),
      HAS8_REAL("optim.weight_decay", weight_decay),
      HAS8_REAL("optim.momentum", momentum),
      HAS8_BOOL("optim.nesterov", nesterov),
      HAS8_SIZE("optim.cycle_steps", cycle_steps),

      HAS8_TEXT("data.name", dataset),
      HAS8_TEXT("data.dir", data_dir),
      HAS8_SIZE("data.train_subset", train_subset),
      HAS8_SIZE("data.test_subset", test_subset),
      HAS8_TEXT("data.val", val_source),
      HAS8_SIZE("data.resize", resize),

      HAS8_SIZE("train.epochs", epochs),
      HAS8_SIZE("train.batch_size", batch_size),
      HAS8_SIZE("train.seed", seed),
      Field{"train.precision", [](const RunConfig& c) { return std::string(precision_name(c.precision)); },
            [](RunConfig& c, std::string_view, std::string_view v) { c.precision = parse_precision(v); }},
      HAS8_SIZE("train.log_every", log_every),
      HAS8_SIZE("train.max_steps", max_steps),

      HAS8_TEXT("run.out_dir", out_dir),
      HAS8_TEXT("run.backend", backend),
  };
  return table;
}

#undef HAS8_SIZE
#undef HAS8_REAL
#undef HAS8_BOOL
#undef HAS8_TEXT

}  // namespace

std::string_view optim_name(OptimKind kind) { return kind == OptimKind::kAdam ? "adam" : "sgdr"; }

OptimKind parse_optim(std::string_view name) {
  if (name == "adam") return OptimKind::kAdam;
  if (name == "sgdr") return OptimKind::kSgdr;
  throw ValueError("unknown optimizer '" + std::string(name) + "' (expected adam or sgdr)");
}

std::string_view precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view name) {
  if (name == "f32" || name == "float32") return Precision::kF32;
  if (name == "f64" || name == "float64") return Precision::kF64;
  throw ValueError("unknown precision '" + std::string(name) + "' (expected f32 or f64)");
}

void RunConfig::validate() const {
  model.validate();
  if (lr < 0.0) throw ValueError("optim.lr must be non-negative (0 selects the default)");
  if (optim == OptimKind::kAdam) {
    AdamConfig{resolved_lr(), beta1, beta2, eps, weight_decay}.validate();
  } else {
    SgdConfig{resolved_lr(), momentum, nesterov, weight_decay}.validate();
  }
  if (dataset != "mnist" && dataset != "cifar10") {
    throw ValueError("data.name must be mnist or cifar10, got '" + dataset + "'");
  }
  if (val_source != "test" && val_source != "split") {
    throw ValueError("data.val must be test or split, got '" + val_source + "'");
  }
  if (batch_size == 0) throw ValueError("train.batch_size must be at least 1");
  if (log_every == 0) throw ValueError("train.log_every must be at least 1");
  if (backend != "auto" && backend != "scalar" && backend != "avx2") {
    throw ValueError("run.backend must be auto, scalar or avx2, got '" + backend + "'");
  }
}

double RunConfig::resolved_lr() const {
  if (lr > 0.0) return lr;
  return optim == OptimKind::kAdam ? 1e-3 : sgdr_initial_lr(batch_size);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, value);
      return;
    }
  }
  throw ValueError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValueError("line " + std::to_string(line_no) + ": unterminated section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValueError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    try {
      cfg.set(key, value);
    } catch (const ValueError& e) {
      throw ValueError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ValueError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace has8
