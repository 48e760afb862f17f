#include "euclidnet/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstring>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "toml.hpp"

#include "euclidnet/checkpoint.hpp"
#include "euclidnet/costmodel.hpp"
#include "euclidnet/data.hpp"
#include "euclidnet/io.hpp"
#include "euclidnet/quant.hpp"
#include "euclidnet/robustness.hpp"
#include "euclidnet/synth.hpp"

namespace euclidnet {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Data:
    case ErrorCode::Label:
    case ErrorCode::Shape: return kExitData;
    case ErrorCode::NumericInput:
    case ErrorCode::Degenerate:
    case ErrorCode::Divergence: return kExitNumeric;
    case ErrorCode::Checkpoint: return kExitCheckpoint;
    default: return kExitConfig;
  }
}

namespace {

// ---------------------------------------------------------------------------
// Config

template <typename T>
void read_value(const toml::table& section, const char* key, T& dst, const std::string& where) {
  const auto* node = section.get(key);
  if (!node) return;
  if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value<std::string>()) return void(dst = *v);
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value<bool>()) return void(dst = *v);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) return void(dst = static_cast<T>(*v));
  } else {
    if (auto v = node->value<std::int64_t>()) {
      if (*v < 0) throw Error(ErrorCode::Config, where + "." + key + " must be >= 0");
      return void(dst = static_cast<T>(*v));
    }
  }
  throw Error(ErrorCode::Config, where + "." + key + " has the wrong type");
}

const toml::table* section(const toml::table& root, const char* name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  if (!node->is_table()) throw Error(ErrorCode::Config, std::string("[") + name + "] must be a table");
  return node->as_table();
}

void check_keys(const toml::table& t, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, value] : t) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key.str() == a;
    if (!ok) throw Error(ErrorCode::Config, "unknown key " + where + "." + std::string(key.str()));
  }
}

SimilarityKind parse_kind(const std::string& text) {
  auto kind = parse_similarity(text);
  if (!kind) throw Error(ErrorCode::Config, "unknown similarity '" + text + "'");
  return *kind;
}

AdderGrad parse_adder_grad(const std::string& text) {
  if (text == "clipped") return AdderGrad::Clipped;
  if (text == "sign") return AdderGrad::Sign;
  throw Error(ErrorCode::Config, "adder_grad must be 'clipped' or 'sign', got '" + text + "'");
}

std::string resolve(const std::string& path, const fs::path& base) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (base / path).lexically_normal().string();
}

// ---------------------------------------------------------------------------
// Output helpers

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path run_dir(const std::string& out_flag, const std::string& root, std::uint64_t hash) {
  fs::path dir = out_flag.empty() ? fs::path(root) / (hex64(hash) + "-" + utc_stamp()) : fs::path(out_flag);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Config, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw DataError(std::string("no ") + what + " path given");
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path);
}

std::vector<float> parse_float_list(const std::string& text, const char* flag) {
  std::vector<float> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stof(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw Error(ErrorCode::Config, std::string(flag) + " needs at least one value");
  return out;
}

std::string join_args(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += a + '\x1f';
  return s;
}

std::string shortest(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(float v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Flags shared by train and finetune

struct TrainFlags {
  std::string config;
  std::optional<std::string> sim;
  std::optional<int> epochs;
  std::optional<float> lr;
  std::optional<float> momentum;
  std::optional<float> weight_decay;
  std::optional<std::size_t> batch_size;
  std::optional<float> eta;
  std::optional<std::uint64_t> seed;
  std::optional<int> crop_pad;
  std::optional<std::string> train_images, train_labels, test_images, test_labels;
  std::string out;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--config", f.config, "TOML config with [model], [train], [data], [homotopy]");
  sub->add_option("--sim", f.sim, "similarity: conv, euclid, adder, mfo, synapse or homotopy:<lambda>");
  sub->add_option("--epochs", f.epochs, "training epochs");
  sub->add_option("--lr", f.lr, "initial learning rate (cosine decay to 0)");
  sub->add_option("--momentum", f.momentum, "SGD momentum");
  sub->add_option("--weight-decay", f.weight_decay, "L2 weight decay");
  sub->add_option("--batch-size", f.batch_size, "mini-batch size");
  sub->add_option("--eta", f.eta, "adaptive gradient scaling for similarity weights (0 disables)");
  sub->add_option("--seed", f.seed, "seed for initialization, shuffling and augmentation");
  sub->add_option("--crop-pad", f.crop_pad, "random-crop padding in pixels (0 disables)");
  sub->add_option("--train-images", f.train_images, "IDX training images");
  sub->add_option("--train-labels", f.train_labels, "IDX training labels");
  sub->add_option("--test-images", f.test_images, "IDX test images");
  sub->add_option("--test-labels", f.test_labels, "IDX test labels");
  sub->add_option("--out", f.out, "output directory (default: <output>/<config hash>-<UTC time>)");
}

RunConfig resolve_config(const TrainFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.sim) cfg.model.kind = parse_kind(*f.sim);
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.lr) cfg.train.lr0 = *f.lr;
  if (f.momentum) cfg.train.momentum = *f.momentum;
  if (f.weight_decay) cfg.train.weight_decay = *f.weight_decay;
  if (f.batch_size) cfg.train.batch_size = *f.batch_size;
  if (f.eta) cfg.train.eta = *f.eta;
  if (f.seed) {
    cfg.train.seed = *f.seed;
    cfg.model_seed = *f.seed;
  }
  if (f.crop_pad) cfg.train.augment.random_crop_pad = *f.crop_pad;
  if (f.train_images) cfg.data.train_images = *f.train_images;
  if (f.train_labels) cfg.data.train_labels = *f.train_labels;
  if (f.test_images) cfg.data.test_images = *f.test_images;
  if (f.test_labels) cfg.data.test_labels = *f.test_labels;
  return cfg;
}

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
};

LoadedData load_run_data(const RunConfig& cfg) {
  require_file(cfg.data.train_images, "training images");
  require_file(cfg.data.train_labels, "training labels");
  const bool has_test = !cfg.data.test_images.empty() || !cfg.data.test_labels.empty();
  if (has_test) {
    require_file(cfg.data.test_images, "test images");
    require_file(cfg.data.test_labels, "test labels");
  }
  LoadedData d{load_idx(cfg.data.train_images, cfg.data.train_labels), std::nullopt};
  if (has_test) {
    d.test = load_idx(cfg.data.test_images, cfg.data.test_labels);
    const auto classes = std::max(d.train.class_count, d.test->class_count);
    d.train.class_count = d.test->class_count = classes;
    if (d.test->images.shape().size() != 4 ||
        !std::equal(d.test->images.shape().begin() + 1, d.test->images.shape().end(),
                    d.train.images.shape().begin() + 1))
      throw DataError("test images " + shape_to_string(d.test->images.shape()) + " do not match training images " +
                      shape_to_string(d.train.images.shape()));
  }
  if (cfg.model.classes > d.train.class_count) d.train.class_count = cfg.model.classes;
  if (d.test) d.test->class_count = d.train.class_count;
  return d;
}

ModelSpec spec_for(const RunConfig& cfg, const Dataset& train) {
  ModelSpec spec = cfg.model;
  spec.in_channels = train.images.dim(1);
  spec.in_h = train.images.dim(2);
  spec.in_w = train.images.dim(3);
  spec.classes = train.class_count;
  return spec;
}

RowCallback printer(std::ostream& out) {
  return [&out](const MetricsRow& r) {
    out << "epoch " << r.epoch << ' ' << r.split << " loss " << fmt(r.loss) << " top1 " << fmt(r.top1)
        << " lambda " << fmt(r.lambda) << " lr " << fmt(r.lr) << '\n';
    out.flush();
  };
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const auto cfg = resolve_config(f);
  validate(cfg.train);
  auto data = load_run_data(cfg);
  const auto norm = compute_norm_stats(data.train);
  auto model = build_default_model(spec_for(cfg, data.train), cfg.model_seed);
  const auto dir = run_dir(f.out, cfg.output_root, config_hash(cfg));
  const auto result = train(model, data.train, data.test ? &*data.test : nullptr, norm, cfg.train, printer(out));
  const float lambda = effective_lambda(cfg.model.kind);
  checkpoint_save(model, norm, {static_cast<std::uint32_t>(cfg.train.epochs), lambda, cfg.train.seed},
                  dir / "model.ckpt");
  write_file_atomic(dir / "metrics.csv", metrics_csv(result.rows));
  write_file_atomic(dir / "config.toml", config_to_toml(cfg));
  if (data.test) out << "test top1 " << fmt(result.rows.back().top1) << '\n';
  out << "run directory " << dir.string() << '\n';
  return kExitOk;
}

int cmd_finetune(const TrainFlags& f, const std::string& from, std::optional<float> lambda0,
                 std::optional<int> n_epochs, std::ostream& out) {
  auto cfg = resolve_config(f);
  if (lambda0) cfg.homotopy.lambda0 = *lambda0;
  if (n_epochs) cfg.homotopy.epochs = *n_epochs;
  if (n_epochs && *n_epochs < 1) throw Error(ErrorCode::Config, "--epochs must be >= 1");
  validate(cfg.homotopy);
  cfg.train.homotopy = cfg.homotopy;
  cfg.train.epochs = cfg.homotopy.epochs + 1;
  cfg.model.kind = SimilarityKind::homotopy(cfg.homotopy.lambda0);
  validate(cfg.train);
  if (!fs::is_regular_file(from)) throw CheckpointError(CheckpointFault::Io, "checkpoint not found: " + from);
  auto data = load_run_data(cfg);
  const auto ckpt = checkpoint_load(from);
  NormStats norm;
  try {
    norm = norm_from_checkpoint(ckpt);
  } catch (const CheckpointError&) {
    norm = compute_norm_stats(data.train);
  }
  auto target = build_default_model(spec_for(cfg, data.train), cfg.model_seed);
  const auto dir = run_dir(f.out, cfg.output_root, config_hash(cfg) ^ fnv1a(from));
  auto result = finetune_homotopy(ckpt, std::move(target), data.train, data.test ? &*data.test : nullptr, norm,
                                  cfg.train, printer(out));
  checkpoint_save(result.model, norm, {static_cast<std::uint32_t>(cfg.train.epochs), 1.0f, cfg.train.seed},
                  dir / "model.ckpt");
  write_file_atomic(dir / "metrics.csv", metrics_csv(result.history.rows));
  write_file_atomic(dir / "config.toml", config_to_toml(cfg));
  if (data.test) out << "test top1 " << fmt(result.history.rows.back().top1) << '\n';
  out << "run directory " << dir.string() << '\n';
  return kExitOk;
}

struct EvalData {
  std::string config, images, labels;
};

void add_eval_data_flags(CLI::App* sub, EvalData& d, const char* what) {
  sub->add_option("--images", d.images, std::string("IDX images to ") + what);
  sub->add_option("--labels", d.labels, std::string("IDX labels to ") + what);
  sub->add_option("--config", d.config, "take the test split from this config when --images/--labels are absent");
}

Dataset load_eval_data(const EvalData& d, const Model& model) {
  std::string images = d.images, labels = d.labels;
  if ((images.empty() || labels.empty()) && !d.config.empty()) {
    const auto cfg = load_config(d.config);
    if (images.empty()) images = cfg.data.test_images;
    if (labels.empty()) labels = cfg.data.test_labels;
  }
  require_file(images, "evaluation images");
  require_file(labels, "evaluation labels");
  auto ds = load_idx(images, labels);
  if (ds.class_count > model.class_count)
    throw DataError("labels reach class " + std::to_string(ds.class_count - 1) + " but the model has " +
                    std::to_string(model.class_count) + " classes");
  ds.class_count = model.class_count;
  return ds;
}

bool is_quantized_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return bytes.size() >= 4 && std::memcmp(bytes.data(), "EUCQ", 4) == 0;
}

void require_checkpoint(const std::string& path) {
  if (!fs::is_regular_file(path)) throw CheckpointError(CheckpointFault::Io, "checkpoint not found: " + path);
}

int cmd_eval(const std::string& ckpt_path, const EvalData& d, const std::string& out_flag,
             const std::vector<std::string>& args, std::ostream& out) {
  require_checkpoint(ckpt_path);
  EvalMetrics m;
  if (is_quantized_file(ckpt_path)) {
    const auto q = decode_quantized_checkpoint(read_file_bytes(ckpt_path));
    const auto ds = load_eval_data(d, q.model.model);
    double top1 = 0.0, top5 = 0.0;
    auto it = batches(ds, 256, 0, false);
    while (auto b = it.next()) {
      const auto logits = quantized_infer(q.model, normalize(b->images, q.norm));
      const auto n = static_cast<double>(b->labels.size());
      top1 += topk_accuracy(logits, b->labels, 1) * n;
      top5 += topk_accuracy(logits, b->labels, 5) * n;
    }
    m.n = ds.size();
    m.top1 = static_cast<float>(top1 / static_cast<double>(m.n));
    m.top5 = static_cast<float>(top5 / static_cast<double>(m.n));
  } else {
    const auto ckpt = checkpoint_load(ckpt_path);
    const auto model = model_from_checkpoint(ckpt);
    const auto ds = load_eval_data(d, model);
    m = evaluate(model, ds, norm_from_checkpoint(ckpt));
  }
  const auto dir = run_dir(out_flag, "runs", fnv1a(join_args(args)));
  nlohmann::ordered_json j{{"top1", m.top1}, {"top5", m.top5}, {"n", m.n}};
  write_file_atomic(dir / "eval.json", j.dump(2) + "\n");
  out << "top1 " << fmt(m.top1) << " top5 " << fmt(m.top5) << " n " << m.n << '\n';
  std::size_t classes = 0;
  if (!is_quantized_file(ckpt_path)) classes = model_from_checkpoint(checkpoint_load(ckpt_path)).class_count;
  if (classes != 0 && classes < 5) out << "note: fewer than 5 classes, top5 is 1 by definition\n";
  out << "run directory " << dir.string() << '\n';
  return kExitOk;
}

int cmd_quantize(const std::string& ckpt_path, int bits, std::size_t calib_n, const EvalData& d,
                 const std::string& calib_images, const std::string& calib_labels, const std::string& out_flag,
                 const std::vector<std::string>& args, std::ostream& out) {
  require_checkpoint(ckpt_path);
  if (bits < 2 || bits > 8) throw Error(ErrorCode::Config, "--bits must lie in [2,8]");
  if (calib_n == 0) throw Error(ErrorCode::Config, "--calib must be >= 1");
  std::string ci = calib_images, cl = calib_labels;
  if ((ci.empty() || cl.empty()) && !d.config.empty()) {
    const auto cfg = load_config(d.config);
    if (ci.empty()) ci = cfg.data.train_images;
    if (cl.empty()) cl = cfg.data.train_labels;
  }
  const auto ckpt = checkpoint_load(ckpt_path);
  const auto model = model_from_checkpoint(ckpt);
  const auto norm = norm_from_checkpoint(ckpt);
  const auto eval = load_eval_data(d, model);
  Dataset calib;
  if (!ci.empty() || !cl.empty()) {
    require_file(ci, "calibration images");
    require_file(cl, "calibration labels");
    calib = load_idx(ci, cl);
  } else {
    calib = eval;
  }
  calib = subset(calib, 0, std::min(calib_n, calib.size()));
  const auto dir = run_dir(out_flag, "runs", fnv1a(join_args(args)));
  const auto outcome = quantize_and_report(model, norm, calib, eval, bits);
  quantized_checkpoint_save(outcome.model, norm, ckpt.meta, dir / "model.eucq");
  write_file_atomic(dir / "quant_report.json", report_json(outcome.report));
  for (const auto& l : outcome.report.per_layer)
    out << l.name << " scale " << fmt(l.scale) << " max_err " << fmt(l.max_err) << '\n';
  out << "top1 float " << fmt(outcome.report.top1_float) << " quant " << fmt(outcome.report.top1_quant)
      << " (calibrated on eval " << fmt(outcome.report.top1_quant_calib_on_eval) << ")\n";
  out << "run directory " << dir.string() << '\n';
  return kExitOk;
}

int cmd_cost(int n, int m, bool karatsuba, std::int64_t macs, bool table, const std::string& json_path,
             std::ostream& out) {
  const auto r = euclid_vs_conv_report(n, m, macs, karatsuba ? Tiling::Karatsuba : Tiling::FourMult);
  out << summary_line(r) << '\n';
  if (table) out << report_table(r);
  if (!json_path.empty()) write_file_atomic(json_path, report_json(r));
  return kExitOk;
}

struct RobustFlags {
  std::string ckpt, compare, sweep = "transform", a, b, sigma, ksize, out;
  bool clip = false;
  std::uint64_t seed = 1;
  EvalData data;
};

int cmd_robustness(const RobustFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  require_checkpoint(f.ckpt);
  if (!f.compare.empty()) require_checkpoint(f.compare);
  if (f.sweep != "transform" && f.sweep != "blur" && f.sweep != "noise")
    throw Error(ErrorCode::Config, "--sweep must be transform, blur or noise");
  auto tgrid = default_transform_grid();
  auto bgrid = default_blur_grid();
  if (!f.a.empty()) tgrid.a_values = parse_float_list(f.a, "--a");
  if (!f.b.empty()) tgrid.b_values = parse_float_list(f.b, "--b");
  if (!f.sigma.empty()) bgrid.sigmas = parse_float_list(f.sigma, "--sigma");
  if (!f.ksize.empty()) {
    bgrid.kernel_sizes.clear();
    for (float k : parse_float_list(f.ksize, "--ksize")) {
      if (k != static_cast<float>(static_cast<int>(k))) throw Error(ErrorCode::Config, "--ksize values must be integers");
      bgrid.kernel_sizes.push_back(static_cast<int>(k));
    }
  }
  tgrid.clip = f.clip;
  validate(tgrid);
  validate(bgrid);
  const auto noise_sigmas = f.sigma.empty() ? std::vector<float>{0.0f, 0.1f, 0.2f, 0.4f} : bgrid.sigmas;

  std::vector<SweepResult> results;
  auto run_one = [&](const std::string& path) {
    const auto ckpt = checkpoint_load(path);
    const auto model = model_from_checkpoint(ckpt);
    const auto norm = norm_from_checkpoint(ckpt);
    const auto ds = load_eval_data(f.data, model);
    if (f.sweep == "transform") return sweep_transform(model, ds, norm, tgrid);
    if (f.sweep == "blur") return sweep_blur(model, ds, norm, bgrid);
    return sweep_noise(model, ds, norm, noise_sigmas, f.seed);
  };
  results.push_back(run_one(f.ckpt));
  if (!f.compare.empty()) results.push_back(run_one(f.compare));
  const auto dir = run_dir(f.out, "runs", fnv1a(join_args(args)));
  write_file_atomic(dir / ("robustness_" + f.sweep + ".csv"), sweep_csv(results));
  for (const auto& r : results)
    for (const auto& c : r.cells)
      out << r.label << ' ' << fmt(c.p1) << ' ' << fmt(c.p2) << " top1 " << fmt(c.top1) << '\n';
  if (results.size() == 2) {
    const auto cells = delta_grid(results[0], results[1]);
    write_file_atomic(dir / ("delta_" + f.sweep + ".csv"), delta_csv(results[0], results[1], cells));
    float worst = 0.0f;
    for (const auto& c : cells) worst = std::max(worst, std::fabs(c.delta_top1));
    out << "max |delta top1| " << fmt(worst) << '\n';
  }
  out << "run directory " << dir.string() << '\n';
  return kExitOk;
}

int cmd_simfield(const std::vector<std::string>& kinds_in, const std::string& range, int steps,
                 const std::string& out_flag, std::ostream& out) {
  const auto colon = range.find(':', range.empty() ? 0 : 1);
  if (colon == std::string::npos) throw Error(ErrorCode::Config, "--range must look like lo:hi");
  float lo = 0.0f, hi = 0.0f;
  try {
    lo = std::stof(range.substr(0, colon));
    hi = std::stof(range.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "--range must look like lo:hi, got '" + range + "'");
  }
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) throw Error(ErrorCode::Config, "--range needs finite lo < hi");
  if (steps < 2) throw Error(ErrorCode::Config, "--steps must be >= 2");
  std::vector<std::string> kinds;
  for (const auto& k : kinds_in.empty() ? std::vector<std::string>{"all"} : kinds_in) {
    if (k == "all")
      kinds.insert(kinds.end(), {"conv", "euclid", "adder", "mfo", "synapse"});
    else
      kinds.push_back(k);
  }
  std::vector<SimilarityKind> parsed;
  for (const auto& k : kinds) parsed.push_back(parse_kind(k));
  const fs::path dir = out_flag.empty() ? fs::path(".") : fs::path(out_flag);
  for (std::size_t k = 0; k < parsed.size(); ++k) {
    std::ostringstream csv;
    csv << "x,w,s\n" << std::setprecision(9);
    for (int i = 0; i < steps; ++i) {
      const float x = lo + (hi - lo) * static_cast<float>(i) / static_cast<float>(steps - 1);
      for (int j = 0; j < steps; ++j) {
        const float w = lo + (hi - lo) * static_cast<float>(j) / static_cast<float>(steps - 1);
        csv << x << ',' << w << ',' << sim_eval(parsed[k], x, w) + 0.0f << '\n';  // + 0 folds -0 into 0
      }
    }
    auto name = to_string(parsed[k]);
    std::replace(name.begin(), name.end(), ':', '-');
    const auto path = dir / ("simfield_" + name + ".csv");
    write_file_atomic(path, csv.str());
    out << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_gen_data(std::size_t n_train, std::size_t n_test, std::size_t size, std::uint64_t seed, float noise,
                 const std::string& out_dir, std::ostream& out) {
  if (n_train == 0 || n_test == 0) throw Error(ErrorCode::Config, "--train and --test must be >= 1");
  const fs::path dir(out_dir);
  const auto train = make_synthetic_digits({n_train, size, seed, noise});
  const auto test = make_synthetic_digits({n_test, size, seed + 0x9E3779B9ull, noise});
  write_idx(train, dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  write_idx(test, dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  out << "wrote " << n_train << " training and " << n_test << " test images to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

RunConfig parse_config(std::string_view toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config parse error at line " << e.source().begin.line << ": " << e.description();
    throw Error(ErrorCode::Config, os.str());
  }
  check_keys(root, {"model", "train", "data", "homotopy", "output"}, "config");
  RunConfig cfg;
  read_value(root, "output", cfg.output_root, "config");
  if (const auto* m = section(root, "model")) {
    check_keys(*m, {"sim", "conv1", "conv2", "kernel", "classes", "seed", "adder_grad"}, "model");
    std::string sim = "conv", adder = "clipped";
    read_value(*m, "sim", sim, "model");
    read_value(*m, "adder_grad", adder, "model");
    cfg.model.kind = parse_kind(sim);
    cfg.model.kind.adder_grad = parse_adder_grad(adder);
    read_value(*m, "conv1", cfg.model.conv1, "model");
    read_value(*m, "conv2", cfg.model.conv2, "model");
    read_value(*m, "kernel", cfg.model.kernel, "model");
    read_value(*m, "classes", cfg.model.classes, "model");
    read_value(*m, "seed", cfg.model_seed, "model");
  }
  if (const auto* t = section(root, "train")) {
    check_keys(*t, {"lr0", "momentum", "weight_decay", "epochs", "batch_size", "eta", "seed", "crop_pad", "hflip",
                    "freeze_bn_stats"},
               "train");
    read_value(*t, "lr0", cfg.train.lr0, "train");
    read_value(*t, "momentum", cfg.train.momentum, "train");
    read_value(*t, "weight_decay", cfg.train.weight_decay, "train");
    read_value(*t, "epochs", cfg.train.epochs, "train");
    read_value(*t, "batch_size", cfg.train.batch_size, "train");
    read_value(*t, "eta", cfg.train.eta, "train");
    read_value(*t, "seed", cfg.train.seed, "train");
    read_value(*t, "crop_pad", cfg.train.augment.random_crop_pad, "train");
    read_value(*t, "hflip", cfg.train.augment.hflip, "train");
    read_value(*t, "freeze_bn_stats", cfg.train.freeze_bn_stats, "train");
  }
  if (const auto* d = section(root, "data")) {
    check_keys(*d, {"train_images", "train_labels", "test_images", "test_labels"}, "data");
    read_value(*d, "train_images", cfg.data.train_images, "data");
    read_value(*d, "train_labels", cfg.data.train_labels, "data");
    read_value(*d, "test_images", cfg.data.test_images, "data");
    read_value(*d, "test_labels", cfg.data.test_labels, "data");
    cfg.data.train_images = resolve(cfg.data.train_images, base_dir);
    cfg.data.train_labels = resolve(cfg.data.train_labels, base_dir);
    cfg.data.test_images = resolve(cfg.data.test_images, base_dir);
    cfg.data.test_labels = resolve(cfg.data.test_labels, base_dir);
  }
  if (const auto* h = section(root, "homotopy")) {
    check_keys(*h, {"lambda0", "epochs"}, "homotopy");
    read_value(*h, "lambda0", cfg.homotopy.lambda0, "homotopy");
    read_value(*h, "epochs", cfg.homotopy.epochs, "homotopy");
  }
  if (cfg.model.conv1 == 0 || cfg.model.conv2 == 0 || cfg.model.kernel == 0 || cfg.model.kernel % 2 == 0)
    throw Error(ErrorCode::Config, "model widths must be >= 1 and the kernel odd");
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::Config, "config file not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                      path.parent_path());
}

std::string config_to_toml(const RunConfig& cfg) {
  std::ostringstream os;
  const auto q = [](const std::string& s) { return toml::value<std::string>(s); };
  os << "output = " << q(cfg.output_root) << "\n\n";
  os << "[model]\n"
     << "sim = " << q(to_string(cfg.model.kind)) << '\n'
     << "adder_grad = " << q(cfg.model.kind.adder_grad == AdderGrad::Sign ? "sign" : "clipped") << '\n'
     << "conv1 = " << cfg.model.conv1 << '\n'
     << "conv2 = " << cfg.model.conv2 << '\n'
     << "kernel = " << cfg.model.kernel << '\n'
     << "classes = " << cfg.model.classes << '\n'
     << "seed = " << cfg.model_seed << "\n\n";
  os << "[train]\n"
     << "lr0 = " << shortest(cfg.train.lr0) << '\n'
     << "momentum = " << shortest(cfg.train.momentum) << '\n'
     << "weight_decay = " << shortest(cfg.train.weight_decay) << '\n'
     << "epochs = " << cfg.train.epochs << '\n'
     << "batch_size = " << cfg.train.batch_size << '\n'
     << "eta = " << shortest(cfg.train.eta) << '\n'
     << "seed = " << cfg.train.seed << '\n'
     << "crop_pad = " << cfg.train.augment.random_crop_pad << '\n'
     << "hflip = " << (cfg.train.augment.hflip ? "true" : "false") << '\n'
     << "freeze_bn_stats = " << (cfg.train.freeze_bn_stats ? "true" : "false") << "\n\n";
  os << "[data]\n"
     << "train_images = " << q(cfg.data.train_images) << '\n'
     << "train_labels = " << q(cfg.data.train_labels) << '\n'
     << "test_images = " << q(cfg.data.test_images) << '\n'
     << "test_labels = " << q(cfg.data.test_labels) << "\n\n";
  os << "[homotopy]\n"
     << "lambda0 = " << shortest(cfg.homotopy.lambda0) << '\n'
     << "epochs = " << cfg.homotopy.epochs << '\n';
  return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(config_to_toml(cfg)); }

// ---------------------------------------------------------------------------
// Entry point

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"euclidnet: similarity-layer networks, homotopy fine-tuning, int8 Euclid inference"};
  app.name("euclidnet");
  app.require_subcommand(1);
  app.fallthrough(false);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train the default CNN from scratch");
  add_train_flags(train_cmd, train_flags);

  TrainFlags ft_flags;
  std::string ft_from;
  std::optional<float> ft_lambda0;
  std::optional<int> ft_epochs;
  auto* ft_cmd = app.add_subcommand("finetune", "homotopy fine-tune a conv checkpoint towards Euclid layers");
  add_train_flags(ft_cmd, ft_flags);
  ft_cmd->get_option("--epochs")->description("homotopy steps n; runs n + 1 epochs with lambda from lambda0 to 1");
  ft_cmd->add_option("--from", ft_from, "conv checkpoint to start from")->required();
  ft_cmd->add_option("--lambda0", ft_lambda0, "initial homotopy lambda in [0,1]");

  std::string ev_ckpt, ev_out;
  EvalData ev_data;
  auto* ev_cmd = app.add_subcommand("eval", "top-1 / top-5 of a checkpoint (float or quantized)");
  ev_cmd->add_option("--ckpt", ev_ckpt, "checkpoint to evaluate")->required();
  add_eval_data_flags(ev_cmd, ev_data, "evaluate on");
  ev_cmd->add_option("--out", ev_out, "output directory for eval.json");

  std::string q_ckpt, q_out, q_calib_images, q_calib_labels;
  int q_bits = 8;
  std::size_t q_calib = 1000;
  EvalData q_data;
  auto* q_cmd = app.add_subcommand("quantize", "symmetric post-training quantization of a Euclid checkpoint");
  q_cmd->add_option("--ckpt", q_ckpt, "trained Euclid checkpoint")->required();
  q_cmd->add_option("--bits", q_bits, "bit width in [2,8]")->capture_default_str();
  q_cmd->add_option("--calib", q_calib, "number of calibration images")->capture_default_str();
  q_cmd->add_option("--calib-images", q_calib_images, "IDX calibration images (default: config train split)");
  q_cmd->add_option("--calib-labels", q_calib_labels, "IDX calibration labels");
  add_eval_data_flags(q_cmd, q_data, "evaluate on");
  q_cmd->add_option("--out", q_out, "output directory for model.eucq and quant_report.json");

  int c_n = 16, c_m = 8;
  bool c_kara = false, c_table = false;
  std::int64_t c_macs = 1;
  std::string c_json;
  auto* c_cmd = app.add_subcommand("cost", "multiplier counts for n-bit multiply vs square from m-bit parts");
  c_cmd->add_option("--n", c_n, "operand width in bits")->capture_default_str();
  c_cmd->add_option("--m", c_m, "primitive multiplier width in bits")->capture_default_str();
  c_cmd->add_flag("--true-karatsuba", c_kara, "use the 3-multiplication Karatsuba split");
  c_cmd->add_option("--macs", c_macs, "number of multiply-accumulates to cost")->capture_default_str();
  c_cmd->add_flag("--table", c_table, "print the per-operation table");
  c_cmd->add_option("--json", c_json, "write the report as JSON to this file");

  RobustFlags rb;
  auto* rb_cmd = app.add_subcommand("robustness", "accuracy under pixel transforms, blur or additive noise");
  rb_cmd->add_option("--ckpt", rb.ckpt, "checkpoint to sweep")->required();
  rb_cmd->add_option("--compare", rb.compare, "second checkpoint; also writes the delta grid");
  add_eval_data_flags(rb_cmd, rb.data, "sweep over");
  rb_cmd->add_option("--sweep", rb.sweep, "transform, blur or noise")->capture_default_str();
  rb_cmd->add_option("--a", rb.a, "comma-separated contrast values (default 0.25,0.5,1,2,4)");
  rb_cmd->add_option("--b", rb.b, "comma-separated brightness values, e.g. --b=-0.2,0,0.2 (default -0.4..0.4)");
  rb_cmd->add_option("--sigma", rb.sigma, "comma-separated sigmas (default 0,0.5,1,2)");
  rb_cmd->add_option("--ksize", rb.ksize, "comma-separated odd kernel sizes (default 1,3,5,7)");
  rb_cmd->add_flag("--clip", rb.clip, "clamp transformed pixels to [0,1]");
  rb_cmd->add_option("--seed", rb.seed, "seed for the noise sweep")->capture_default_str();
  rb_cmd->add_option("--out", rb.out, "output directory for the CSV files");

  std::vector<std::string> sf_kinds;
  std::string sf_range = "-3:3", sf_out;
  int sf_steps = 61;
  auto* sf_cmd = app.add_subcommand("simfield", "CSV grid of S(x, w) per similarity kind");
  sf_cmd->add_option("--kind", sf_kinds, "similarity kind (repeatable; 'all' for every fixed kind)");
  sf_cmd->add_option("--range", sf_range, "sample range lo:hi for both x and w")->capture_default_str();
  sf_cmd->add_option("--steps", sf_steps, "samples per axis")->capture_default_str();
  sf_cmd->add_option("--out", sf_out, "output directory (default: current directory)");

  std::size_t g_train = 10000, g_test = 2000, g_size = 28;
  std::uint64_t g_seed = 1;
  float g_noise = 0.06f;
  std::string g_out = "data";
  auto* g_cmd = app.add_subcommand("gen-data", "write a synthetic 10-class digit set as IDX files");
  g_cmd->add_option("--train", g_train, "training images")->capture_default_str();
  g_cmd->add_option("--test", g_test, "test images")->capture_default_str();
  g_cmd->add_option("--size", g_size, "image side length")->capture_default_str();
  g_cmd->add_option("--seed", g_seed, "generator seed")->capture_default_str();
  g_cmd->add_option("--noise", g_noise, "pixel noise standard deviation")->capture_default_str();
  g_cmd->add_option("--out", g_out, "output directory")->capture_default_str();

  std::vector<std::string> storage{"euclidnet"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags, out);
    if (ft_cmd->parsed()) {
      ft_epochs = ft_flags.epochs;
      ft_flags.epochs.reset();
      return cmd_finetune(ft_flags, ft_from, ft_lambda0, ft_epochs, out);
    }
    if (ev_cmd->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out, args, out);
    if (q_cmd->parsed())
      return cmd_quantize(q_ckpt, q_bits, q_calib, q_data, q_calib_images, q_calib_labels, q_out, args, out);
    if (c_cmd->parsed()) return cmd_cost(c_n, c_m, c_kara, c_macs, c_table, c_json, out);
    if (rb_cmd->parsed()) return cmd_robustness(rb, args, out);
    if (sf_cmd->parsed()) return cmd_simfield(sf_kinds, sf_range, sf_steps, sf_out, out);
    if (g_cmd->parsed()) return cmd_gen_data(g_train, g_test, g_size, g_seed, g_noise, g_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace euclidnet
