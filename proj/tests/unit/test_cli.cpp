#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "euclidnet/cli.hpp"
#include "euclidnet/error.hpp"
#include "euclidnet/io.hpp"
#include "euclidnet/similarity.hpp"
#include "json.hpp"

using namespace euclidnet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file_bytes(p);
  return {b.begin(), b.end()};
}

/// Temporary workspace with a small synthetic IDX set and a tiny-model config.
struct Workspace {
  fs::path root;
  fs::path config;

  Workspace() {
    root = fs::temp_directory_path() / "euclidnet_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto g = cli({"gen-data", "--train", "200", "--test", "100", "--size", "12", "--seed", "3", "--out",
                        (root / "data").string()});
    REQUIRE(g.code == 0);
    config = root / "tiny.toml";
    std::ofstream(config) << "output = \"runs\"\n"
                             "[model]\nsim = \"conv\"\nconv1 = 4\nconv2 = 4\nseed = 2\n"
                             "[train]\nepochs = 2\nbatch_size = 32\nlr0 = 0.05\nseed = 5\ncrop_pad = 1\n"
                             "[data]\ntrain_images = \"data/train-images-idx3-ubyte\"\n"
                             "train_labels = \"data/train-labels-idx1-ubyte\"\n"
                             "test_images = \"data/t10k-images-idx3-ubyte\"\n"
                             "test_labels = \"data/t10k-labels-idx1-ubyte\"\n"
                             "[homotopy]\nlambda0 = 0.2\nepochs = 2\n";
  }
  ~Workspace() { fs::remove_all(root); }
  std::string path(const std::string& rel) const { return (root / rel).string(); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("cost summary line") {
  const auto r = cli({"cost", "--n", "16", "--m", "8"});
  CHECK(r.code == 0);
  CHECK(r.out == "mult: 4 mults 3 adds; square: 3 mults 2 adds; ratio 0.75\n");
  CHECK(cli({"cost", "--n", "12", "--m", "8"}).code == kExitConfig);
}

TEST_CASE("simfield grid") {
  const auto dir = ws().path("field");
  const auto r = cli({"simfield", "--kind", "euclid", "--range", "-3:3", "--steps", "7", "--out", dir});
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(fs::path(dir) / "simfield_euclid.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "x,w,s");
  std::map<std::pair<double, double>, double> grid;
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    double x, w, s;
    char c1, c2;
    std::istringstream ls(line);
    ls >> x >> c1 >> w >> c2 >> s;
    grid[{x, w}] = s;
  }
  CHECK(rows == 49);
  CHECK(grid.at({0.0, 0.0}) == 0.0);
  for (const auto& [k, v] : grid) CHECK(grid.at({k.second, k.first}) == v);
  CHECK(grid.at({-3.0, 3.0}) == -18.0);
  const auto all = cli({"simfield", "--kind", "all", "--kind", "homotopy:0.5", "--steps", "3", "--out", dir});
  CHECK(all.code == 0);
  CHECK(fs::exists(fs::path(dir) / "simfield_adder.csv"));
  CHECK(fs::exists(fs::path(dir) / "simfield_homotopy-0.5.csv"));
  CHECK(cli({"simfield", "--kind", "cosine", "--out", dir}).code == kExitConfig);
  CHECK(cli({"simfield", "--range", "3", "--out", dir}).code == kExitConfig);
}

TEST_CASE("help on every subcommand") {
  const std::vector<std::pair<std::string, std::string>> subs{
      {"train", "--weight-decay"}, {"finetune", "--lambda0"}, {"eval", "--ckpt"},
      {"quantize", "--calib"},     {"cost", "--true-karatsuba"}, {"robustness", "--sweep"},
      {"simfield", "--range"},     {"gen-data", "--noise"}};
  for (const auto& [sub, flag] : subs) {
    CAPTURE(sub);
    const auto r = cli({sub, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find(flag) != std::string::npos);
    if (sub != "cost") CHECK(r.out.find("--out") != std::string::npos);
  }
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"bogus"}).code == kExitConfig);
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config("[model]\nsim = \"euclid\"\n[train]\nlr0 = 0.1\neta = 0.2\n[data]\ntrain_images = \"a\"\n",
                                "/base");
  CHECK(cfg.model.kind == SimilarityKind::euclid());
  CHECK(cfg.train.lr0 == 0.1f);
  CHECK(cfg.train.eta == 0.2f);
  CHECK(cfg.data.train_images == "/base/a");
  const auto again = parse_config(config_to_toml(cfg));
  CHECK(config_to_toml(again) == config_to_toml(cfg));
  CHECK(config_hash(again) == config_hash(cfg));
  for (const char* bad : {"[model]\nsimm = \"conv\"\n", "[train]\nepochs = \"x\"\n", "[model]\nsim = \"dot\"\n",
                          "[weird]\n", "[train\n"}) {
    CAPTURE(bad);
    try {
      parse_config(bad);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
    }
  }
}

TEST_CASE("train, finetune, eval, robustness and quantize end to end") {
  auto& w = ws();
  const auto a = cli({"train", "--config", w.config.string(), "--out", w.path("conv_a")});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  CHECK(a.out.find("test top1 ") != std::string::npos);
  const auto b = cli({"train", "--config", w.config.string(), "--out", w.path("conv_b")});
  REQUIRE(b.code == 0);
  CHECK(read_file_bytes(w.path("conv_a/model.ckpt")) == read_file_bytes(w.path("conv_b/model.ckpt")));
  CHECK(slurp(w.path("conv_a/metrics.csv")) == slurp(w.path("conv_b/metrics.csv")));
  CHECK(slurp(w.path("conv_a/metrics.csv")).rfind("epoch,split,loss,top1,lambda,lr\n", 0) == 0);
  const auto saved = load_config(w.path("conv_a/config.toml"));
  CHECK(saved.model.kind == SimilarityKind::conv());
  CHECK(saved.train.epochs == 2);

  // Flags win over the file; the default run directory lives under the configured root.
  const auto cwd = fs::current_path();
  fs::current_path(w.root);
  const auto c = cli({"train", "--config", w.config.string(), "--epochs", "1", "--seed", "9"});
  fs::current_path(cwd);
  REQUIRE(c.code == 0);
  std::size_t runs = 0;
  for (const auto& e : fs::directory_iterator(w.root / "runs")) {
    ++runs;
    CHECK(e.path().filename().string().size() > 17);
    CHECK(fs::exists(e.path() / "model.ckpt"));
    CHECK(slurp(e.path() / "config.toml").find("epochs = 1\n") != std::string::npos);
  }
  CHECK(runs == 1);

  const auto ft = cli({"finetune", "--config", w.config.string(), "--from", w.path("conv_a/model.ckpt"), "--epochs",
                       "2", "--out", w.path("ft")});
  REQUIRE_MESSAGE(ft.code == 0, ft.err);
  std::istringstream rows(slurp(w.path("ft/metrics.csv")));
  std::string line;
  std::getline(rows, line);
  std::vector<float> lambdas;
  while (std::getline(rows, line)) {
    if (line.find(",train,") == std::string::npos) continue;
    const auto parts = [&] {
      std::vector<std::string> p;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) p.push_back(cell);
      return p;
    }();
    lambdas.push_back(std::stof(parts[4]));
  }
  REQUIRE(lambdas.size() == 3);
  for (int k = 0; k <= 2; ++k) CHECK(lambdas[k] == lambda_at({0.2f, 2}, k));

  const auto ev = cli({"eval", "--ckpt", w.path("ft/model.ckpt"), "--config", w.config.string(), "--out", w.path("ev")});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const auto j = nlohmann::json::parse(slurp(w.path("ev/eval.json")));
  CHECK(j.at("n") == 100);
  const float top1 = j.at("top1");
  CHECK(j.at("top5").get<float>() >= top1);
  const auto ev2 = cli({"eval", "--ckpt", w.path("ft/model.ckpt"), "--config", w.config.string(), "--out", w.path("ev2")});
  CHECK(slurp(w.path("ev/eval.json")) == slurp(w.path("ev2/eval.json")));

  const auto rb = cli({"robustness", "--ckpt", w.path("ft/model.ckpt"), "--compare", w.path("conv_a/model.ckpt"),
                       "--config", w.config.string(), "--sweep", "transform", "--a", "0.5,1", "--b=-0.2,0", "--out",
                       w.path("rb")});
  REQUIRE_MESSAGE(rb.code == 0, rb.err);
  const auto csv = slurp(w.path("rb/robustness_transform.csv"));
  std::ostringstream ident;
  ident << "\neuclid,1,0," << std::setprecision(9) << top1 << '\n';
  CHECK(csv.find(ident.str()) != std::string::npos);
  CHECK(slurp(w.path("rb/delta_transform.csv")).rfind("kind_a,kind_b,", 0) == 0);
  cli({"robustness", "--ckpt", w.path("ft/model.ckpt"), "--compare", w.path("conv_a/model.ckpt"), "--config",
       w.config.string(), "--sweep", "transform", "--a", "0.5,1", "--b=-0.2,0", "--out", w.path("rb2")});
  CHECK(slurp(w.path("rb2/robustness_transform.csv")) == csv);
  CHECK(cli({"robustness", "--ckpt", w.path("ft/model.ckpt"), "--config", w.config.string(), "--sweep", "blur",
             "--ksize", "4", "--out", w.path("rb3")})
            .code == kExitConfig);

  const auto q = cli({"quantize", "--ckpt", w.path("ft/model.ckpt"), "--config", w.config.string(), "--calib", "50",
                      "--out", w.path("q")});
  REQUIRE_MESSAGE(q.code == 0, q.err);
  const auto qj = nlohmann::json::parse(slurp(w.path("q/quant_report.json")));
  CHECK(qj.at("calib_count") == 50);
  const auto q2 = cli({"quantize", "--ckpt", w.path("ft/model.ckpt"), "--config", w.config.string(), "--calib", "50",
                       "--out", w.path("q2")});
  CHECK(read_file_bytes(w.path("q/model.eucq")) == read_file_bytes(w.path("q2/model.eucq")));
  const auto qe = cli({"eval", "--ckpt", w.path("q/model.eucq"), "--config", w.config.string(), "--out", w.path("qe")});
  CHECK(qe.code == 0);
  CHECK(nlohmann::json::parse(slurp(w.path("qe/eval.json"))).at("top1").get<float>() ==
        qj.at("top1_quant").get<float>());
  CHECK(cli({"quantize", "--ckpt", w.path("conv_a/model.ckpt"), "--config", w.config.string(), "--out", w.path("q3")})
            .code == kExitConfig);
}

TEST_CASE("exit codes") {
  auto& w = ws();
  const auto missing = cli({"train", "--config", w.config.string(), "--train-images", w.path("nope.idx"), "--out",
                            w.path("x")});
  CHECK(missing.code == kExitData);
  CHECK(missing.err.find("nope.idx") != std::string::npos);
  CHECK(cli({"train", "--config", w.path("absent.toml")}).code == kExitConfig);
  CHECK(cli({"train", "--config", w.config.string(), "--sim", "dot"}).code == kExitConfig);
  CHECK(cli({"train", "--config", w.config.string(), "--lr", "nan", "--out", w.path("x")}).code == kExitConfig);
  REQUIRE(cli({"train", "--config", w.config.string(), "--epochs", "1", "--out", w.path("one")}).code == 0);
  CHECK(cli({"finetune", "--config", w.config.string(), "--from", w.path("one/model.ckpt"), "--epochs", "0"}).code ==
        kExitConfig);
  // A checkpoint for a different architecture.
  std::ofstream(w.root / "wide.toml") << slurp(w.config).replace(slurp(w.config).find("conv1 = 4"), 9, "conv1 = 6");
  REQUIRE(cli({"train", "--config", w.path("wide.toml"), "--epochs", "1", "--out", w.path("wide")}).code == 0);
  const auto inc = cli({"finetune", "--config", w.config.string(), "--from", w.path("wide/model.ckpt"), "--epochs",
                        "1", "--out", w.path("y")});
  CHECK(inc.code == kExitCheckpoint);
  auto bytes = read_file_bytes(w.path("one/model.ckpt"));
  bytes.resize(bytes.size() / 2);
  write_file_atomic(w.path("cut.ckpt"), bytes);
  CHECK(cli({"eval", "--ckpt", w.path("cut.ckpt"), "--config", w.config.string(), "--out", w.path("z")}).code ==
        kExitCheckpoint);
  CHECK(cli({"eval", "--ckpt", w.path("one/model.ckpt"), "--images", w.path("data/t10k-images-idx3-ubyte"), "--labels",
             w.path("data/train-labels-idx1-ubyte"), "--out", w.path("z")})
            .code == kExitData);
}

}
