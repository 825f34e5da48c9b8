#include "negmix/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "negmix/graph.hpp"
#include "negmix/io.hpp"
#include "negmix/theorem.hpp"
#include "negmix/trainer.hpp"

namespace negmix {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config plumbing: preset -> config file -> explicit flags, later wins.

json config_to_json(const TrainConfig& c) {
  return json{
      {"heads", c.heads},
      {"layers", c.layers},
      {"embed_dim", c.embed_dim},
      {"classifier_bias", c.classifier_bias},
      {"attn_slope", c.attn_slope},
      {"learning_rate", c.learning_rate},
      {"weight_decay", c.weight_decay},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"rho_percent", c.rho_percent},
      {"tau", c.tau},
      {"gamma", c.gamma},
      {"eta", c.eta},
      {"delta", c.delta},
      {"beta", c.beta},
      {"beta_alpha", c.beta_alpha},
      {"warmup_epochs", c.warmup_epochs},
      {"entropy_renormalize", c.entropy_renormalize},
      {"score_punknown", c.score_punknown},
      {"gcl_pair_norm", c.gcl_pair_norm == GclPairNorm::kL ? "L" : "L-1"},
      {"dataset_name", c.dataset_name},
      {"no_pos_mixup", c.no_pos_mixup},
      {"conventional_ood_mixup", c.conventional_ood_mixup},
      {"selected_ood_no_mixup", c.selected_ood_no_mixup},
      {"no_pos_learning", c.no_pos_learning},
      {"no_neg_learning", c.no_neg_learning},
      {"rank_only", c.rank_only},
  };
}

void apply_config_json(TrainConfig& c, const json& j) {
  check(j.is_object(), "config: top level must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "heads") c.heads = val.get<int>();
      else if (key == "layers") c.layers = val.get<int>();
      else if (key == "embed_dim") c.embed_dim = val.get<int>();
      else if (key == "classifier_bias") c.classifier_bias = val.get<bool>();
      else if (key == "attn_slope") c.attn_slope = val.get<double>();
      else if (key == "learning_rate") c.learning_rate = val.get<double>();
      else if (key == "weight_decay") c.weight_decay = val.get<double>();
      else if (key == "epochs") c.epochs = val.get<int>();
      else if (key == "seed") c.seed = val.get<std::uint64_t>();
      else if (key == "rho_percent") c.rho_percent = val.get<double>();
      else if (key == "tau") c.tau = val.get<double>();
      else if (key == "gamma") c.gamma = val.get<double>();
      else if (key == "eta") c.eta = val.get<double>();
      else if (key == "delta") c.delta = val.get<double>();
      else if (key == "beta") c.beta = val.get<double>();
      else if (key == "beta_alpha") c.beta_alpha = val.get<double>();
      else if (key == "warmup_epochs") c.warmup_epochs = val.get<int>();
      else if (key == "entropy_renormalize") c.entropy_renormalize = val.get<bool>();
      else if (key == "score_punknown") c.score_punknown = val.get<bool>();
      else if (key == "gcl_pair_norm") {
        std::string s = val.get<std::string>();
        if (s == "L") c.gcl_pair_norm = GclPairNorm::kL;
        else if (s == "L-1") c.gcl_pair_norm = GclPairNorm::kLMinusOne;
        else throw Error("config: gcl_pair_norm must be \"L\" or \"L-1\"");
      }
      else if (key == "dataset_name") c.dataset_name = val.get<std::string>();
      else if (key == "no_pos_mixup") c.no_pos_mixup = val.get<bool>();
      else if (key == "conventional_ood_mixup") c.conventional_ood_mixup = val.get<bool>();
      else if (key == "selected_ood_no_mixup") c.selected_ood_no_mixup = val.get<bool>();
      else if (key == "no_pos_learning") c.no_pos_learning = val.get<bool>();
      else if (key == "no_neg_learning") c.no_neg_learning = val.get<bool>();
      else if (key == "rank_only") c.rank_only = val.get<bool>();
      else throw Error("config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw Error("config: bad value for '" + key + "': " + std::string(e.what()));
    }
  }
}

// Flags shared by every training-flavored subcommand.
struct ConfigCli {
  CLI::App* sub = nullptr;
  std::string preset, config_path, score = "oodscore";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  int epochs = 0;
  bool no_pos_mixup = false, conventional_ood_mixup = false,
       selected_ood_no_mixup = false, no_pos_learning = false,
       no_neg_learning = false, rank_only = false;

  void attach(CLI::App* s, bool with_seeds) {
    sub = s;
    std::string names;
    for (const std::string& n : preset_names()) names += (names.empty() ? "" : "|") + n;
    s->add_option("--preset", preset, "Hyperparameter preset: " + names);
    s->add_option("--config", config_path,
                  "JSON config file overriding the preset; unknown keys are errors");
    s->add_option("--seed", seed, "Base RNG seed (default 0)");
    if (with_seeds)
      s->add_option("--seeds", seeds, "Comma-separated seed list; one run each")
          ->delimiter(',');
    s->add_option("--epochs", epochs, "Training epochs (overrides preset/config)");
    s->add_option("--score", score,
                  "Detection score channel: aggregated neighborhood score or "
                  "the unknown-class probability")
        ->check(CLI::IsMember({"oodscore", "punknown"}));
    s->add_flag("--no-pos-mixup", no_pos_mixup,
                "Ablation: drop the positive-mixup term");
    s->add_flag("--conventional-ood-mixup", conventional_ood_mixup,
                "Ablation: blend OOD candidates additively with a soft target");
    s->add_flag("--selected-ood-no-mixup", selected_ood_no_mixup,
                "Ablation: plain cross entropy toward unknown on candidates, no blending");
    s->add_flag("--no-pos-learning", no_pos_learning,
                "Ablation: drop the pull toward the unknown class");
    s->add_flag("--no-neg-learning", no_neg_learning,
                "Ablation: drop the push off the partner class");
    s->add_flag("--rank-only", rank_only,
                "Ablation: rank candidates by score without clustering");
  }

  TrainConfig resolve() const {
    TrainConfig c = preset.empty() ? TrainConfig{} : preset_config(preset);
    if (!config_path.empty())
      apply_config_json(c, json::parse(read_text_file(config_path)));
    if (sub->count("--seed")) c.seed = seed;
    if (sub->count("--epochs")) c.epochs = epochs;
    if (sub->count("--score")) c.score_punknown = (score == "punknown");
    if (no_pos_mixup) c.no_pos_mixup = true;
    if (conventional_ood_mixup) c.conventional_ood_mixup = true;
    if (selected_ood_no_mixup) c.selected_ood_no_mixup = true;
    if (no_pos_learning) c.no_pos_learning = true;
    if (no_neg_learning) c.no_neg_learning = true;
    if (rank_only) c.rank_only = true;
    c.validate();
    return c;
  }

  std::vector<std::uint64_t> seed_list() const {
    if (!seeds.empty()) return seeds;
    return {sub->count("--seed") ? seed : TrainConfig{}.seed};
  }
};

// Split-construction flags shared by train/ablate/sweep/split.
struct SplitCli {
  int id_classes = 0;  // 0 = first half of the label vocabulary, rounded up
  double train_percent = 10.0, val_percent = 10.0;

  void attach(CLI::App* s) {
    s->add_option("--id-classes", id_classes,
                  "Known-class count; default: half the classes, rounded up");
    s->add_option("--train-percent", train_percent,
                  "Share of known-class nodes labeled for training");
    s->add_option("--val-percent", val_percent,
                  "Share of known-class nodes held out for validation");
  }

  int resolve_id_classes(const Graph& g) const {
    if (id_classes > 0) return id_classes;
    check(g.num_classes >= 2, "dataset needs at least two classes");
    return (g.num_classes + 1) / 2;
  }
};

void parallel_for(int jobs, int n, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string dataset_label(const TrainConfig& cfg, const fs::path& dir) {
  if (!cfg.dataset_name.empty()) return cfg.dataset_name;
  std::string stem = dir.filename().string();
  return stem.empty() ? dir.parent_path().filename().string() : stem;
}

constexpr const char* kResultsHeader =
    "seed,dataset,accuracy,macro_f1,auroc,fpr95,epochs_to_best,wall_seconds";

std::string metrics_row(std::uint64_t seed, const std::string& dataset,
                        const EvalReport& rep, int epochs_to_best,
                        double wall_seconds) {
  return std::to_string(seed) + "," + dataset + "," + fmt_double(rep.accuracy) +
         "," + fmt_double(rep.macro_f1) + "," + fmt_double(rep.auroc) + "," +
         fmt_double(rep.fpr_at_95) + "," + std::to_string(epochs_to_best) +
         "," + fmt_fixed(wall_seconds, 3);
}

std::string epoch_log_csv(const std::vector<EpochStats>& stats) {
  std::string out =
      "epoch,ce,oreg,pi,po,gcl,total,val_loss,n_potential_ood,n_potential_id\n";
  for (const EpochStats& st : stats) {
    out += std::to_string(st.epoch) + "," + fmt_double(st.ce) + "," +
           fmt_double(st.oreg) + "," + fmt_double(st.pi) + "," +
           fmt_double(st.po) + "," + fmt_double(st.gcl) + "," +
           fmt_double(st.total) + "," + fmt_double(st.val_loss) + "," +
           std::to_string(st.n_potential_ood) + "," +
           std::to_string(st.n_potential_id) + "\n";
  }
  return out;
}

json report_to_json(const EvalReport& rep) {
  json per_class = json::array();
  for (size_t k = 0; k < rep.per_class.size(); ++k) {
    const ClassStats& cs = rep.per_class[k];
    per_class.push_back(json{{"class", k},
                             {"precision", cs.precision},
                             {"recall", cs.recall},
                             {"f1", cs.f1},
                             {"support", cs.support},
                             {"predicted", cs.predicted}});
  }
  return json{{"accuracy", rep.accuracy},   {"macro_f1", rep.macro_f1},
              {"auroc", rep.auroc},         {"fpr95", rep.fpr_at_95},
              {"n_test", rep.n_test},       {"n_ood", rep.n_ood},
              {"per_class", per_class}};
}

struct RunOutcome {
  EvalReport report;
  int best_epoch = 0;
  double wall_seconds = 0.0;
};

// One seeded training run: split, train, evaluate with the best parameters.
RunOutcome run_once(const Graph& g, const TrainConfig& cfg, int id_classes,
                    double train_percent, double val_percent,
                    TrainResult* result_out = nullptr,
                    OpenSetSplit* split_out = nullptr) {
  auto t0 = std::chrono::steady_clock::now();
  OpenSetSplit split =
      make_openset_split(g, id_classes, cfg.seed, train_percent, val_percent);
  TrainResult tr = train(g, split, cfg);
  EvalOutputs ev = evaluate_model(tr.best_params, g, split, cfg);
  RunOutcome out;
  out.report = ev.report;
  out.best_epoch = tr.best_epoch;
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (result_out) *result_out = std::move(tr);
  if (split_out) *split_out = std::move(split);
  return out;
}

void print_mean_metrics(const std::vector<EvalReport>& reports,
                        const std::string& label) {
  double acc = 0, f1 = 0, auroc = 0, fpr = 0;
  for (const EvalReport& r : reports) {
    acc += r.accuracy;
    f1 += r.macro_f1;
    auroc += r.auroc;
    fpr += r.fpr_at_95;
  }
  double n = static_cast<double>(reports.size());
  std::cout << label << ": accuracy " << fmt_fixed(acc / n, 4) << "  macro_f1 "
            << fmt_fixed(f1 / n, 4) << "  auroc " << fmt_fixed(auroc / n, 4)
            << "  fpr95 " << fmt_fixed(fpr / n, 4) << "  (" << reports.size()
            << (reports.size() == 1 ? " seed)" : " seeds)") << "\n";
}

// ---------------------------------------------------------------------------
// Subcommand implementations.

int run_train(const fs::path& dataset_dir, const fs::path& out_dir,
              const ConfigCli& cfgcli, const SplitCli& splitcli, int jobs) {
  Graph g = load_graph(dataset_dir);
  check(g.has_labels(), "train: dataset has no labels.csv");
  TrainConfig base = cfgcli.resolve();
  if (base.dataset_name.empty()) base.dataset_name = dataset_label(base, dataset_dir);
  int idc = splitcli.resolve_id_classes(g);
  std::vector<std::uint64_t> seeds = cfgcli.seed_list();

  fs::create_directories(out_dir);
  std::vector<std::string> rows(seeds.size());
  std::vector<EvalReport> reports(seeds.size());
  parallel_for(jobs, static_cast<int>(seeds.size()), [&](int i) {
    TrainConfig cfg = base;
    cfg.seed = seeds[static_cast<size_t>(i)];
    TrainResult tr;
    OpenSetSplit split;
    RunOutcome oc = run_once(g, cfg, idc, splitcli.train_percent,
                             splitcli.val_percent, &tr, &split);
    json meta{{"dataset", cfg.dataset_name},
              {"id_class_count", idc},
              {"split_seed", cfg.seed},
              {"train_percent", splitcli.train_percent},
              {"val_percent", splitcli.val_percent},
              {"best_epoch", tr.best_epoch},
              {"best_val_loss", tr.best_val_loss},
              {"config", config_to_json(cfg)}};
    std::string tag = "seed" + std::to_string(cfg.seed);
    save_checkpoint(out_dir / ("checkpoint_" + tag + ".json"), tr.best_params, meta);
    write_text_file_atomic(out_dir / ("epochs_" + tag + ".csv"),
                           epoch_log_csv(tr.epochs));
    rows[static_cast<size_t>(i)] =
        metrics_row(cfg.seed, cfg.dataset_name, oc.report, oc.best_epoch,
                    oc.wall_seconds);
    reports[static_cast<size_t>(i)] = oc.report;
    log_info("seed " + std::to_string(cfg.seed) + ": best epoch " +
             std::to_string(tr.best_epoch) + ", auroc " +
             fmt_fixed(oc.report.auroc, 4));
  });

  std::string csv = std::string(kResultsHeader) + "\n";
  for (const std::string& r : rows) csv += r + "\n";
  write_text_file_atomic(out_dir / "results.csv", csv);
  print_mean_metrics(reports, base.dataset_name);
  std::cout << "wrote " << (out_dir / "results.csv").string() << "\n";
  return 0;
}

int run_eval(const fs::path& dataset_dir, const fs::path& checkpoint_path,
             const fs::path& out_dir, const ConfigCli& cfgcli,
             bool export_embeddings, bool export_scores) {
  Graph g = load_graph(dataset_dir);
  check(g.has_labels(), "eval: dataset has no labels.csv");
  LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
  const json& meta = lc.meta;
  check(meta.contains("config") && meta.contains("id_class_count") &&
            meta.contains("split_seed"),
        "eval: checkpoint lacks split provenance metadata");
  TrainConfig cfg;
  apply_config_json(cfg, meta.at("config"));
  if (cfgcli.sub->count("--score"))
    cfg.score_punknown = (cfgcli.score == "punknown");
  OpenSetSplit split = make_openset_split(
      g, meta.at("id_class_count").get<int>(),
      meta.at("split_seed").get<std::uint64_t>(),
      meta.value("train_percent", 10.0), meta.value("val_percent", 10.0));
  EvalOutputs ev = evaluate_model(lc.params, g, split, cfg);

  fs::create_directories(out_dir);
  write_text_file_atomic(out_dir / "report.json", report_to_json(ev.report).dump(2) + "\n");
  if (export_embeddings) {
    std::string csv;
    for (Eigen::Index r = 0; r < ev.embeddings.rows(); ++r) {
      for (Eigen::Index c = 0; c < ev.embeddings.cols(); ++c)
        csv += (c ? "," : "") + fmt_double(ev.embeddings(r, c));
      csv += "\n";
    }
    write_text_file_atomic(out_dir / "embeddings.csv", csv);
  }
  if (export_scores) {
    std::string csv = "node,score\n";
    for (size_t v = 0; v < ev.scores.size(); ++v)
      csv += std::to_string(v) + "," + fmt_double(ev.scores[v]) + "\n";
    write_text_file_atomic(out_dir / "ood_scores.csv", csv);
  }
  print_mean_metrics({ev.report}, dataset_label(cfg, dataset_dir));
  std::cout << "wrote " << (out_dir / "report.json").string() << "\n";
  return 0;
}

int run_split(const fs::path& dataset_dir, const fs::path& out_dir,
              std::uint64_t seed, const SplitCli& splitcli) {
  Graph g = load_graph(dataset_dir);
  check(g.has_labels(), "split: dataset has no labels.csv");
  OpenSetSplit s =
      make_openset_split(g, splitcli.resolve_id_classes(g), seed,
                         splitcli.train_percent, splitcli.val_percent);
  json j{{"known_classes", s.known_classes},
         {"id_classes", s.id_classes},
         {"seed", seed},
         {"train_percent", splitcli.train_percent},
         {"val_percent", splitcli.val_percent},
         {"labels", s.labels},
         {"train_nodes", s.train_nodes},
         {"val_nodes", s.val_nodes},
         {"test_nodes", s.test_nodes}};
  fs::create_directories(out_dir);
  write_text_file_atomic(out_dir / "split.json", j.dump(2) + "\n");
  std::cout << "split: " << s.train_nodes.size() << " train, "
            << s.val_nodes.size() << " val, " << s.test_nodes.size()
            << " test -> " << (out_dir / "split.json").string() << "\n";
  return 0;
}

int run_synth(const fs::path& out_dir, int classes, int nodes_per_class,
              double p_in, double p_out, int feat_dim, double feat_shift,
              std::uint64_t seed) {
  Graph g = synth_sbm(classes, nodes_per_class, p_in, p_out, feat_dim,
                      feat_shift, seed);
  save_graph(g, out_dir);
  std::cout << "synth: " << g.num_nodes << " nodes, " << g.edges.size()
            << " edges, " << classes << " classes -> " << out_dir.string()
            << "\n";
  return 0;
}

struct AblationVariant {
  const char* name;
  void (*apply)(TrainConfig&);
};

constexpr AblationVariant kVariants[] = {
    {"full", [](TrainConfig&) {}},
    {"no_pos_mixup", [](TrainConfig& c) { c.no_pos_mixup = true; }},
    {"conventional_ood_mixup",
     [](TrainConfig& c) { c.conventional_ood_mixup = true; }},
    {"selected_ood_no_mixup",
     [](TrainConfig& c) { c.selected_ood_no_mixup = true; }},
    {"no_pos_learning", [](TrainConfig& c) { c.no_pos_learning = true; }},
    {"no_neg_learning", [](TrainConfig& c) { c.no_neg_learning = true; }},
    {"no_gcl", [](TrainConfig& c) { c.beta = 0.0; }},
    {"no_ood_reg", [](TrainConfig& c) { c.gamma = 0.0; }},
    {"rank_only", [](TrainConfig& c) { c.rank_only = true; }},
};

int run_ablate(const fs::path& dataset_dir, const fs::path& out_dir,
               const ConfigCli& cfgcli, const SplitCli& splitcli, int jobs) {
  Graph g = load_graph(dataset_dir);
  check(g.has_labels(), "ablate: dataset has no labels.csv");
  TrainConfig base = cfgcli.resolve();
  if (base.dataset_name.empty()) base.dataset_name = dataset_label(base, dataset_dir);
  int idc = splitcli.resolve_id_classes(g);
  std::vector<std::uint64_t> seeds = cfgcli.seed_list();

  const int n_variants = static_cast<int>(std::size(kVariants));
  const int n_runs = n_variants * static_cast<int>(seeds.size());
  std::vector<std::string> rows(static_cast<size_t>(n_runs));
  std::vector<std::vector<EvalReport>> by_variant(static_cast<size_t>(n_variants));
  for (auto& v : by_variant) v.resize(seeds.size());
  parallel_for(jobs, n_runs, [&](int idx) {
    int vi = idx / static_cast<int>(seeds.size());
    int si = idx % static_cast<int>(seeds.size());
    TrainConfig cfg = base;
    cfg.seed = seeds[static_cast<size_t>(si)];
    kVariants[vi].apply(cfg);
    RunOutcome oc = run_once(g, cfg, idc, splitcli.train_percent,
                             splitcli.val_percent);
    rows[static_cast<size_t>(idx)] =
        std::string(kVariants[vi].name) + "," +
        metrics_row(cfg.seed, base.dataset_name, oc.report, oc.best_epoch,
                    oc.wall_seconds);
    by_variant[static_cast<size_t>(vi)][static_cast<size_t>(si)] = oc.report;
    log_info(std::string(kVariants[vi].name) + " seed " +
             std::to_string(cfg.seed) + ": auroc " +
             fmt_fixed(oc.report.auroc, 4));
  });

  fs::create_directories(out_dir);
  std::string csv = "variant," + std::string(kResultsHeader) + "\n";
  for (const std::string& r : rows) csv += r + "\n";
  write_text_file_atomic(out_dir / "ablation_results.csv", csv);
  for (int vi = 0; vi < n_variants; ++vi)
    print_mean_metrics(by_variant[static_cast<size_t>(vi)], kVariants[vi].name);
  std::cout << "wrote " << (out_dir / "ablation_results.csv").string() << "\n";
  return 0;
}

const std::vector<std::string>& sweep_params() {
  static const std::vector<std::string> p{"train_ratio", "id_classes", "rho",
                                          "layers", "gamma", "eta", "delta",
                                          "beta"};
  return p;
}

int run_sweep(const fs::path& dataset_dir, const fs::path& out_dir,
              const ConfigCli& cfgcli, const SplitCli& splitcli,
              const std::string& param, std::vector<double> values, int jobs) {
  check(!values.empty(), "sweep: --values is empty");
  Graph g = load_graph(dataset_dir);
  check(g.has_labels(), "sweep: dataset has no labels.csv");
  TrainConfig base = cfgcli.resolve();
  if (base.dataset_name.empty()) base.dataset_name = dataset_label(base, dataset_dir);
  std::vector<std::uint64_t> seeds = cfgcli.seed_list();

  auto needs_integer = [&](double v) {
    check(std::floor(v) == v && v >= 1.0,
          "sweep: " + param + " values must be positive integers");
  };
  for (double v : values) {
    if (param == "id_classes" || param == "layers") needs_integer(v);
    if (param == "train_ratio")
      check(v > 0.0 && v + splitcli.val_percent < 100.0,
            "sweep: train_ratio must leave room for validation and test");
  }

  // Deterministic output order regardless of --jobs: (value, seed).
  std::stable_sort(values.begin(), values.end());
  const int n_runs = static_cast<int>(values.size() * seeds.size());
  std::vector<std::string> rows(static_cast<size_t>(n_runs));
  parallel_for(jobs, n_runs, [&](int idx) {
    int vi = idx / static_cast<int>(seeds.size());
    int si = idx % static_cast<int>(seeds.size());
    double value = values[static_cast<size_t>(vi)];
    TrainConfig cfg = base;
    cfg.seed = seeds[static_cast<size_t>(si)];
    int idc = splitcli.resolve_id_classes(g);
    double train_percent = splitcli.train_percent;
    if (param == "train_ratio") train_percent = value;
    else if (param == "id_classes") idc = static_cast<int>(value);
    else if (param == "rho") cfg.rho_percent = value;
    else if (param == "layers") cfg.layers = static_cast<int>(value);
    else if (param == "gamma") cfg.gamma = value;
    else if (param == "eta") cfg.eta = value;
    else if (param == "delta") cfg.delta = value;
    else if (param == "beta") cfg.beta = value;
    cfg.validate();
    RunOutcome oc = run_once(g, cfg, idc, train_percent, splitcli.val_percent);
    rows[static_cast<size_t>(idx)] =
        param + "," + fmt_double(value) + "," +
        metrics_row(cfg.seed, base.dataset_name, oc.report, oc.best_epoch,
                    oc.wall_seconds);
    log_info(param + "=" + fmt_double(value) + " seed " +
             std::to_string(cfg.seed) + ": auroc " +
             fmt_fixed(oc.report.auroc, 4));
  });

  fs::create_directories(out_dir);
  std::string csv = "param,value," + std::string(kResultsHeader) + "\n";
  for (const std::string& r : rows) csv += r + "\n";
  write_text_file_atomic(out_dir / "sweep_results.csv", csv);
  std::cout << "wrote " << (out_dir / "sweep_results.csv").string() << " ("
            << n_runs << " rows)\n";
  return 0;
}

int run_verify_theorems(int instances, std::uint64_t seed, double epsilon) {
  check(instances >= 1, "verify-theorems: --instances must be positive");
  const int class_counts[] = {3, 5, 11};
  long failures = 0;
  long total_checks = 0;
  std::cout << "classes  instances  negative_fail  conventional_fail  closed_form_fail\n";
  for (int classes : class_counts) {
    Pcg32 rng(derive_seed(seed, "classes-" + std::to_string(classes)));
    long neg_fail = 0, conv_fail = 0, closed_fail = 0;
    for (int t = 0; t < instances; ++t) {
      TheoremInstance inst = sample_instance(classes, rng);
      inst.epsilon = epsilon;
      if (!negative_mixup_step_test(inst).pass) ++neg_fail;
      if (!conventional_mixup_step_test(inst).pass) ++conv_fail;
      if (!closed_form_sign_eval(inst).pass) ++closed_fail;
      total_checks += 3;
    }
    failures += neg_fail + conv_fail + closed_fail;
    char line[128];
    std::snprintf(line, sizeof line, "%7d  %9d  %13ld  %17ld  %16ld\n", classes,
                  instances, neg_fail, conv_fail, closed_fail);
    std::cout << line;
  }
  if (failures > 0) {
    std::cout << failures << " of " << total_checks
              << " sign reports failed\n";
    return 2;
  }
  std::cout << "all " << total_checks << " sign reports passed\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Open-set node classification with negative mixup"};
  app.require_subcommand(1);

  // train
  CLI::App* train_sub = app.add_subcommand(
      "train", "Train on a dataset directory; writes checkpoint, epoch log, results.csv");
  std::string train_dataset, train_out = "negmix_out";
  int train_jobs = 1;
  ConfigCli train_cfg;
  SplitCli train_split;
  train_sub->add_option("--dataset", train_dataset, "Dataset directory")->required();
  train_sub->add_option("--out", train_out, "Output directory");
  train_sub->add_option("--jobs", train_jobs, "Parallel seed runs");
  train_cfg.attach(train_sub, true);
  train_split.attach(train_sub);

  // eval
  CLI::App* eval_sub = app.add_subcommand(
      "eval", "Evaluate a checkpoint; writes report.json and optional CSV exports");
  std::string eval_dataset, eval_checkpoint, eval_out = "negmix_out";
  bool eval_embeddings = false, eval_scores = false;
  ConfigCli eval_cfg;
  eval_sub->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  eval_sub->add_option("--checkpoint", eval_checkpoint, "Checkpoint JSON from train")
      ->required();
  eval_sub->add_option("--out", eval_out, "Output directory");
  eval_sub->add_flag("--export-embeddings", eval_embeddings,
                     "Also write embeddings.csv (one row per node)");
  eval_sub->add_flag("--export-scores", eval_scores,
                     "Also write ood_scores.csv (node,score)");
  eval_cfg.attach(eval_sub, false);

  // split
  CLI::App* split_sub = app.add_subcommand(
      "split", "Build an open-set split and write it as JSON");
  std::string split_dataset, split_out = "negmix_out";
  std::uint64_t split_seed = 0;
  SplitCli split_split;
  split_sub->add_option("--dataset", split_dataset, "Dataset directory")->required();
  split_sub->add_option("--out", split_out, "Output directory");
  split_sub->add_option("--seed", split_seed, "Split RNG seed");
  split_split.attach(split_sub);

  // synth
  CLI::App* synth_sub = app.add_subcommand(
      "synth", "Generate a block-model dataset directory (defaults: the "
               "separable 4-class fixture)");
  std::string synth_out = "negmix_out/sbm";
  int synth_classes = 4, synth_npc = 60, synth_dim = 16;
  double synth_pin = 0.3, synth_pout = 0.01, synth_shift = 3.0;
  std::uint64_t synth_seed = 0;
  synth_sub->add_option("--out", synth_out, "Dataset directory to create");
  synth_sub->add_option("--classes", synth_classes, "Number of classes");
  synth_sub->add_option("--nodes-per-class", synth_npc, "Nodes per class");
  synth_sub->add_option("--p-in", synth_pin, "Same-class edge probability");
  synth_sub->add_option("--p-out", synth_pout, "Cross-class edge probability");
  synth_sub->add_option("--feat-dim", synth_dim, "Feature dimension");
  synth_sub->add_option("--feat-shift", synth_shift, "Class-mean feature offset");
  synth_sub->add_option("--seed", synth_seed, "Generator seed");

  // ablate
  CLI::App* ablate_sub = app.add_subcommand(
      "ablate", "Train every ablation variant; writes ablation_results.csv");
  std::string ablate_dataset, ablate_out = "negmix_out";
  int ablate_jobs = 1;
  ConfigCli ablate_cfg;
  SplitCli ablate_split;
  ablate_sub->add_option("--dataset", ablate_dataset, "Dataset directory")->required();
  ablate_sub->add_option("--out", ablate_out, "Output directory");
  ablate_sub->add_option("--jobs", ablate_jobs, "Parallel runs");
  ablate_cfg.attach(ablate_sub, true);
  ablate_split.attach(ablate_sub);

  // sweep
  CLI::App* sweep_sub = app.add_subcommand(
      "sweep", "Grid over one parameter; writes sweep_results.csv");
  std::string sweep_dataset, sweep_out = "negmix_out", sweep_param;
  std::vector<double> sweep_values;
  int sweep_jobs = 1;
  ConfigCli sweep_cfg;
  SplitCli sweep_split;
  sweep_sub->add_option("--dataset", sweep_dataset, "Dataset directory")->required();
  sweep_sub->add_option("--out", sweep_out, "Output directory");
  sweep_sub->add_option("--jobs", sweep_jobs, "Parallel runs");
  sweep_sub->add_option("--param", sweep_param, "Axis to vary")
      ->required()
      ->check(CLI::IsMember(sweep_params()));
  sweep_sub->add_option("--values", sweep_values, "Comma-separated grid values")
      ->required()
      ->delimiter(',');
  sweep_cfg.attach(sweep_sub, true);
  sweep_split.attach(sweep_sub);

  // verify-theorems
  CLI::App* verify_sub = app.add_subcommand(
      "verify-theorems",
      "Run the gradient-direction checks; exits 2 on any sign failure");
  int verify_instances = 100;
  std::uint64_t verify_seed = 0;
  double verify_epsilon = 1e-4;
  verify_sub->add_option("--instances", verify_instances,
                         "Instances per class count (3, 5, and 11 classes)");
  verify_sub->add_option("--seed", verify_seed, "Sampling seed");
  verify_sub->add_option("--epsilon", verify_epsilon,
                         "Gradient step size (at most 1e-4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train_sub->parsed())
      return run_train(train_dataset, train_out, train_cfg, train_split, train_jobs);
    if (eval_sub->parsed())
      return run_eval(eval_dataset, eval_checkpoint, eval_out, eval_cfg,
                      eval_embeddings, eval_scores);
    if (split_sub->parsed())
      return run_split(split_dataset, split_out, split_seed, split_split);
    if (synth_sub->parsed())
      return run_synth(synth_out, synth_classes, synth_npc, synth_pin,
                       synth_pout, synth_dim, synth_shift, synth_seed);
    if (ablate_sub->parsed())
      return run_ablate(ablate_dataset, ablate_out, ablate_cfg, ablate_split,
                        ablate_jobs);
    if (sweep_sub->parsed())
      return run_sweep(sweep_dataset, sweep_out, sweep_cfg, sweep_split,
                       sweep_param, sweep_values, sweep_jobs);
    if (verify_sub->parsed())
      return run_verify_theorems(verify_instances, verify_seed, verify_epsilon);
  } catch (const Error& e) {
    log_error(e.what());
    return 1;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 1;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.emplace_back("negmix");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& s : full) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace negmix
