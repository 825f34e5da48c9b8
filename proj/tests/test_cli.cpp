#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "negmix/cli.hpp"
#include "negmix/io.hpp"

using namespace negmix;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) { return negmix::run(args); }

std::string capture(const std::vector<std::string>& args, int* code = nullptr) {
  std::ostringstream sink;
  std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
  int rc = negmix::run(args);
  std::cout.rdbuf(old);
  if (code) *code = rc;
  return sink.str();
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("negmix_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small but learnable dataset: 4 well-separated classes, 15 nodes each.
void make_dataset(const fs::path& dir) {
  REQUIRE(run_cli({"synth", "--out", dir.string(), "--classes", "4",
                   "--nodes-per-class", "15", "--feat-dim", "6",
                   "--feat-shift", "3", "--seed", "5"}) == 0);
}

// Drop the trailing wall_seconds column from every CSV line.
std::string strip_wall(const std::string& csv) {
  std::string out;
  for (const std::string& line : split_lines(csv)) {
    size_t cut = line.rfind(',');
    out += line.substr(0, cut) + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("help documents every advertised flag") {
  int code = -1;
  std::string root = capture({"--help"}, &code);
  CHECK(code == 0);
  for (const char* verb : {"train", "eval", "split", "synth", "ablate",
                           "sweep", "verify-theorems"})
    CHECK(root.find(verb) != std::string::npos);

  std::string train_help = capture({"train", "--help"}, &code);
  CHECK(code == 0);
  for (const char* flag :
       {"--dataset", "--preset", "--config", "--seed", "--seeds", "--out",
        "--jobs", "--score", "--epochs", "--id-classes", "--train-percent",
        "--val-percent", "--no-pos-mixup", "--conventional-ood-mixup",
        "--selected-ood-no-mixup", "--no-pos-learning", "--no-neg-learning",
        "--rank-only"})
    CHECK_MESSAGE(train_help.find(flag) != std::string::npos, flag);

  std::string eval_help = capture({"eval", "--help"}, &code);
  CHECK(code == 0);
  for (const char* flag : {"--dataset", "--checkpoint", "--out", "--score",
                           "--export-embeddings", "--export-scores"})
    CHECK_MESSAGE(eval_help.find(flag) != std::string::npos, flag);

  std::string sweep_help = capture({"sweep", "--help"}, &code);
  for (const char* flag : {"--param", "--values", "--jobs"})
    CHECK_MESSAGE(sweep_help.find(flag) != std::string::npos, flag);

  std::string synth_help = capture({"synth", "--help"}, &code);
  for (const char* flag : {"--classes", "--nodes-per-class", "--p-in",
                           "--p-out", "--feat-dim", "--feat-shift", "--seed"})
    CHECK_MESSAGE(synth_help.find(flag) != std::string::npos, flag);
}

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli({}) == 1);                                // no subcommand
  CHECK(run_cli({"transmogrify"}) == 1);                  // unknown verb
  CHECK(run_cli({"train"}) == 1);                         // missing --dataset
  CHECK(run_cli({"train", "--dataset", "x", "--frobnicate"}) == 1);
  CHECK(run_cli({"train", "--dataset", "/nonexistent/nowhere"}) == 1);
  CHECK(run_cli({"sweep", "--dataset", "x", "--param", "bogus", "--values",
                 "1"}) == 1);
  CHECK(run_cli({"train", "--dataset", "x", "--score", "psychic"}) == 1);
}

TEST_CASE("synth, train, eval round trip") {
  fs::path dir = scratch("roundtrip");
  fs::path data = dir / "data";
  make_dataset(data);
  for (const char* f : {"manifest.json", "edges.tsv", "features.csv",
                        "labels.csv"})
    CHECK(fs::exists(data / f));

  fs::path out = dir / "run";
  REQUIRE(run_cli({"train", "--dataset", data.string(), "--out", out.string(),
                   "--epochs", "40", "--seed", "1"}) == 0);
  CHECK(fs::exists(out / "results.csv"));
  CHECK(fs::exists(out / "checkpoint_seed1.json"));
  CHECK(fs::exists(out / "epochs_seed1.csv"));

  std::vector<std::string> lines = split_lines(read_text_file(out / "results.csv"));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] ==
        "seed,dataset,accuracy,macro_f1,auroc,fpr95,epochs_to_best,wall_seconds");
  CHECK(lines[1].substr(0, 7) == "1,data,");

  std::vector<std::string> epoch_lines =
      split_lines(read_text_file(out / "epochs_seed1.csv"));
  CHECK(epoch_lines.size() == 41);  // header + one row per epoch

  fs::path ev = dir / "eval";
  REQUIRE(run_cli({"eval", "--dataset", data.string(), "--checkpoint",
                   (out / "checkpoint_seed1.json").string(), "--out",
                   ev.string(), "--export-embeddings", "--export-scores"}) == 0);
  json rep = json::parse(read_text_file(ev / "report.json"));
  CHECK(rep.at("accuracy").get<double>() >= 0.0);
  CHECK(rep.at("accuracy").get<double>() <= 1.0);
  CHECK(rep.at("auroc").get<double>() >= 0.0);
  CHECK(rep.at("auroc").get<double>() <= 1.0);
  CHECK(rep.at("n_test").get<int>() > 0);
  CHECK(rep.at("n_ood").get<int>() > 0);
  CHECK(rep.at("per_class").size() == 3);  // 2 known + unknown
  CHECK(split_lines(read_text_file(ev / "embeddings.csv")).size() == 60);
  CHECK(split_lines(read_text_file(ev / "ood_scores.csv")).size() == 61);

  // Scoring channel override: the unknown-class probability is a different
  // signal than the aggregated score, so the export must change.
  fs::path ev2 = dir / "eval_punknown";
  REQUIRE(run_cli({"eval", "--dataset", data.string(), "--checkpoint",
                   (out / "checkpoint_seed1.json").string(), "--out",
                   ev2.string(), "--export-scores", "--score", "punknown"}) == 0);
  CHECK(read_text_file(ev / "ood_scores.csv") !=
        read_text_file(ev2 / "ood_scores.csv"));
}

TEST_CASE("train results are byte-identical across runs and job counts") {
  fs::path dir = scratch("determinism");
  fs::path data = dir / "data";
  make_dataset(data);
  std::vector<std::string> base = {"--dataset", data.string(), "--epochs",
                                   "25", "--seeds", "0,1"};
  auto train_into = [&](const std::string& out, const std::string& jobs) {
    std::vector<std::string> args = {"train"};
    args.insert(args.end(), base.begin(), base.end());
    args.insert(args.end(), {"--out", (dir / out).string(), "--jobs", jobs});
    REQUIRE(run_cli(args) == 0);
    return strip_wall(read_text_file(dir / out / "results.csv"));
  };
  std::string a = train_into("a", "1");
  std::string b = train_into("b", "1");
  std::string c = train_into("c", "2");
  CHECK(a == b);
  CHECK(a == c);
  CHECK(read_text_file(dir / "a" / "epochs_seed0.csv") ==
        read_text_file(dir / "b" / "epochs_seed0.csv"));
}

TEST_CASE("split output is deterministic bytes") {
  fs::path dir = scratch("split");
  fs::path data = dir / "data";
  make_dataset(data);
  std::vector<std::string> args = {"split",        "--dataset", data.string(),
                                   "--id-classes", "3",         "--seed",
                                   "7"};
  std::vector<std::string> a1 = args, a2 = args;
  a1.insert(a1.end(), {"--out", (dir / "s1").string()});
  a2.insert(a2.end(), {"--out", (dir / "s2").string()});
  REQUIRE(run_cli(a1) == 0);
  REQUIRE(run_cli(a2) == 0);
  std::string j1 = read_text_file(dir / "s1" / "split.json");
  CHECK(j1 == read_text_file(dir / "s2" / "split.json"));
  json j = json::parse(j1);
  CHECK(j.at("known_classes") == 3);
  CHECK(j.at("id_classes").size() == 3);
  CHECK(j.at("train_nodes").size() > 0);
  CHECK(j.at("test_nodes").size() > 0);
}

TEST_CASE("config file overrides preset, flags override config") {
  fs::path dir = scratch("config");
  fs::path data = dir / "data";
  make_dataset(data);

  fs::path cfg_path = dir / "cfg.json";
  write_text_file_atomic(cfg_path, R"({"gamma": 0.5, "epochs": 3})");
  fs::path out = dir / "run";
  REQUIRE(run_cli({"train", "--dataset", data.string(), "--out", out.string(),
                   "--preset", "citeseer", "--config", cfg_path.string(),
                   "--epochs", "2", "--id-classes", "2"}) == 0);
  json meta = json::parse(read_text_file(out / "checkpoint_seed0.json"));
  const json& c = meta.at("meta").at("config");
  CHECK(c.at("heads") == 4);        // from the citeseer preset
  CHECK(c.at("gamma") == 0.5);      // config file beats preset (citeseer: 1)
  CHECK(c.at("epochs") == 2);       // explicit flag beats config file (3)

  // Unknown config keys are hard errors.
  write_text_file_atomic(cfg_path, R"({"gama": 0.5})");
  CHECK(run_cli({"train", "--dataset", data.string(), "--out", out.string(),
                 "--config", cfg_path.string()}) == 1);

  // So are values that fail validation.
  write_text_file_atomic(cfg_path, R"({"learning_rate": -1})");
  CHECK(run_cli({"train", "--dataset", data.string(), "--out", out.string(),
                 "--config", cfg_path.string()}) == 1);
}

TEST_CASE("verify-theorems prints a summary and exits 0") {
  int code = -1;
  std::string out = capture({"verify-theorems", "--instances", "25"}, &code);
  CHECK(code == 0);
  CHECK(out.find("classes") != std::string::npos);
  for (const char* c : {"3", "5", "11"})
    CHECK(out.find(c) != std::string::npos);
  CHECK(out.find("passed") != std::string::npos);
  // Oversized steps leave the first-order regime; reject them up front.
  CHECK(run_cli({"verify-theorems", "--epsilon", "0.5"}) == 1);
}

TEST_CASE("sweep emits one row per value-seed pair, sorted by value") {
  fs::path dir = scratch("sweep");
  fs::path data = dir / "data";
  make_dataset(data);
  fs::path out = dir / "run";
  REQUIRE(run_cli({"sweep", "--dataset", data.string(), "--out", out.string(),
                   "--param", "train_ratio", "--values", "30,20", "--seeds",
                   "0,1", "--epochs", "6", "--jobs", "2"}) == 0);
  std::vector<std::string> lines =
      split_lines(read_text_file(out / "sweep_results.csv"));
  REQUIRE(lines.size() == 5);
  CHECK(lines[0].substr(0, 12) == "param,value,");
  CHECK(lines[1].substr(0, 16) == "train_ratio,20,0");
  CHECK(lines[2].substr(0, 16) == "train_ratio,20,1");
  CHECK(lines[3].substr(0, 16) == "train_ratio,30,0");
  CHECK(lines[4].substr(0, 16) == "train_ratio,30,1");

  // Integer-valued axes reject fractional grid points.
  CHECK(run_cli({"sweep", "--dataset", data.string(), "--out", out.string(),
                 "--param", "layers", "--values", "1.5", "--epochs", "2"}) == 1);
}

TEST_CASE("ablate emits one row per variant in a stable order") {
  fs::path dir = scratch("ablate");
  fs::path data = dir / "data";
  make_dataset(data);
  fs::path out = dir / "run";
  REQUIRE(run_cli({"ablate", "--dataset", data.string(), "--out", out.string(),
                   "--epochs", "6", "--jobs", "4"}) == 0);
  std::vector<std::string> lines =
      split_lines(read_text_file(out / "ablation_results.csv"));
  REQUIRE(lines.size() == 10);
  const char* expected[] = {"full", "no_pos_mixup", "conventional_ood_mixup",
                            "selected_ood_no_mixup", "no_pos_learning",
                            "no_neg_learning", "no_gcl", "no_ood_reg",
                            "rank_only"};
  for (int i = 0; i < 9; ++i) {
    std::string prefix = std::string(expected[i]) + ",";
    CHECK(lines[static_cast<size_t>(i + 1)].substr(0, prefix.size()) == prefix);
  }
}
